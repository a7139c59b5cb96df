"""Communication topologies and Metropolis mixing weights.

A graph object answers three questions about iteration k: which undirected
links exist (``adjacency``), who agent i can hear (``neighbors``, always
including itself), and what averaging weights to use (``weights``).  Static
graphs precompute their weight matrix; time-varying graphs resample the
active edge set at every k as a pure function of (seed, k).
"""

import warnings

import numpy as np

from .core import GRAPH_DOMAIN, substream

__all__ = [
    "CommGraph",
    "StaticGraph",
    "DynamicGraph",
    "metropolis_weights",
    "ring_graph",
    "complete_graph",
    "graph_from_edges",
    "load_edge_list",
    "dynamic_edge_sampler",
    "neighbors",
]


def _check_adjacency(adjacency):
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {adj.shape}")
    adj = adj != 0
    if np.any(np.diag(adj)):
        raise ValueError("adjacency must have a zero diagonal (self-links are implicit)")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    return adj


def metropolis_weights(adjacency):
    """Metropolis weights for an undirected adjacency matrix.

    W_ij = 1 / (1 + max(d_i, d_j)) on links, W_ii absorbs the remainder of
    row i.  The result is symmetric and doubly stochastic, with positive
    diagonal, so repeated averaging preserves the network mean.
    """
    adj = _check_adjacency(adjacency)
    deg = adj.sum(axis=1)
    denom = 1.0 + np.maximum.outer(deg, deg)
    w = np.where(adj, 1.0 / denom, 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


class CommGraph:
    """Interface shared by static and time-varying topologies."""

    num_agents = 0

    def adjacency(self, k):
        raise NotImplementedError

    def weights(self, k):
        raise NotImplementedError

    def neighbors(self, i, k):
        """Agents whose iteration-k values agent ``i`` receives, itself included."""
        if not 0 <= i < self.num_agents:
            raise IndexError(f"agent index {i} out of range for {self.num_agents} agents")
        adj = self.adjacency(k)
        return {i} | set(np.flatnonzero(adj[i]).tolist())


class StaticGraph(CommGraph):
    """Fixed topology; weights computed once."""

    def __init__(self, adjacency):
        self._adj = _check_adjacency(adjacency)
        self.num_agents = self._adj.shape[0]
        self._w = metropolis_weights(self._adj)

    def adjacency(self, k):
        return self._adj.copy()

    def weights(self, k):
        return self._w.copy()


class DynamicGraph(CommGraph):
    """Base topology whose links are each active i.i.d. per iteration.

    Link (i, j) of the base graph is present at iteration k with probability
    ``activation_prob``, sampled from the substream keyed by (seed, k), so
    ``weights(k)`` depends only on (seed, k) and never on how many times or
    in what order it was called.
    """

    def __init__(self, base_adjacency, activation_prob, seed):
        self._base = _check_adjacency(base_adjacency)
        if not 0 < activation_prob <= 1:
            raise ValueError(f"activation probability must be in (0, 1], got {activation_prob}")
        self.num_agents = self._base.shape[0]
        self.activation_prob = float(activation_prob)
        self.seed = seed
        iu = np.triu_indices(self.num_agents, k=1)
        keep = self._base[iu]
        self._edge_rows = iu[0][keep]
        self._edge_cols = iu[1][keep]

    def adjacency(self, k):
        rng = substream(self.seed, GRAPH_DOMAIN, k)
        active = rng.random(self._edge_rows.size) < self.activation_prob
        adj = np.zeros_like(self._base)
        r = self._edge_rows[active]
        c = self._edge_cols[active]
        adj[r, c] = True
        adj[c, r] = True
        return adj

    def weights(self, k):
        return metropolis_weights(self.adjacency(k))


def ring_graph(num_agents):
    """Cycle over ``num_agents`` agents; one agent degenerates to self-loops only."""
    if num_agents < 1:
        raise ValueError(f"need at least one agent, got {num_agents}")
    if num_agents == 1:
        warnings.warn("ring over a single agent has no links; averaging is a no-op")
        return StaticGraph(np.zeros((1, 1), dtype=bool))
    adj = np.zeros((num_agents, num_agents), dtype=bool)
    for i in range(num_agents):
        j = (i + 1) % num_agents
        adj[i, j] = adj[j, i] = True
    return StaticGraph(adj)


def complete_graph(num_agents):
    """All-to-all topology."""
    if num_agents < 1:
        raise ValueError(f"need at least one agent, got {num_agents}")
    adj = np.ones((num_agents, num_agents), dtype=bool)
    np.fill_diagonal(adj, False)
    return StaticGraph(adj)


def graph_from_edges(num_agents, edges):
    """Static graph from 0-based undirected edge pairs; duplicates collapse."""
    adj = np.zeros((num_agents, num_agents), dtype=bool)
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-link ({i}, {j}) is not allowed")
        if not (0 <= i < num_agents and 0 <= j < num_agents):
            raise ValueError(f"edge ({i}, {j}) out of range for {num_agents} agents")
        adj[i, j] = adj[j, i] = True
    return StaticGraph(adj)


def load_edge_list(path, num_agents=None):
    """Static graph from a text file of 1-based edge pairs.

    One edge per line as two whitespace-separated integers; blank lines and
    lines starting with ``#`` are ignored.  When ``num_agents`` is omitted it
    is inferred as the largest id seen.
    """
    edges = []
    largest = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two agent ids, got {raw.strip()!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: agent ids must be integers, got {raw.strip()!r}") from None
            if i < 1 or j < 1:
                raise ValueError(f"{path}:{lineno}: agent ids are 1-based, got {raw.strip()!r}")
            if i == j:
                raise ValueError(f"{path}:{lineno}: self-link {i} {j} is not allowed")
            largest = max(largest, i, j)
            edges.append((i - 1, j - 1))
    if num_agents is None:
        if largest == 0:
            raise ValueError(f"{path}: no edges found and no agent count given")
        num_agents = largest
    elif largest > num_agents:
        raise ValueError(f"{path}: edge references agent {largest} but only {num_agents} agents exist")
    return graph_from_edges(num_agents, edges)


def dynamic_edge_sampler(base, activation_prob, seed):
    """Time-varying graph over the links of ``base`` (a graph or adjacency)."""
    base_adj = base.adjacency(0) if isinstance(base, CommGraph) else base
    return DynamicGraph(base_adj, activation_prob, seed)


def neighbors(graph, i, k):
    """Function form of :meth:`CommGraph.neighbors`."""
    return graph.neighbors(i, k)
