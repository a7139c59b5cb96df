"""Decision vectors, block partitions, gain schedules, and problem containers.

Everything downstream (estimators, algorithm drivers, benchmark CLI) treats the
decision variable as a dense 1-D float64 array split into contiguous blocks,
one block per agent.  This module owns that representation plus the two
problem containers the drivers consume: a cyclic problem (one global noisy
loss over the full vector) and a distributed problem (a sum of per-agent
losses over the full vector).
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "as_param_vec",
    "BlockPartition",
    "make_partition",
    "subvector",
    "GainSchedule",
    "gain_at",
    "MeasurementCounter",
    "CyclicProblem",
    "DistributedProblem",
    "substream",
    "AGENT_DOMAIN",
    "INIT_DOMAIN",
    "GRAPH_DOMAIN",
    "DATA_DOMAIN",
]

# Stream-family tags so gradient noise, initialization, graph activation and
# dataset synthesis never share a substream even at equal (k, i).
AGENT_DOMAIN = 0
INIT_DOMAIN = 1
GRAPH_DOMAIN = 2
DATA_DOMAIN = 3

_U64 = 2**64


def substream(seed, *path):
    """Return a Generator for the substream identified by ``(seed, *path)``.

    The stream is a pure function of its arguments, independent of call order
    and call count, which is what makes runs reproducible under any
    scheduling of the agents.  Implemented with a counter-based bit generator:
    the seed is the cipher key and the path occupies the upper words of the
    counter block, so distinct paths are independent streams by construction
    (each path is 2**64 draws away from its neighbors).
    """
    if not 0 <= seed < _U64 * _U64:
        raise ValueError(f"seed must be an integer in [0, 2**128), got {seed}")
    if len(path) > 3:
        raise ValueError(f"stream path may have at most 3 components, got {path}")
    counter = [0, 0, 0, 0]
    for slot, part in zip((1, 2, 3), path):
        if not 0 <= part < _U64:
            raise ValueError(f"stream path components must be in [0, 2**64), got {part}")
        counter[slot] = part
    return np.random.Generator(
        np.random.Philox(counter=counter, key=[seed % _U64, seed // _U64])
    )


def as_param_vec(values, dim=None):
    """Validate ``values`` as a decision vector, returning it as float64.

    Raises ValueError for empty input, non-finite entries, anything that is
    not 1-D, or a length mismatch when ``dim`` is given.  The input is not
    copied when it is already a float64 array; callers that store the result
    must copy it themselves.
    """
    theta = np.asarray(values, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise ValueError("decision vector must be a nonempty 1-D array")
    if not np.isfinite(theta).all():
        raise ValueError("decision vector has non-finite entries")
    if dim is not None and theta.size != dim:
        raise ValueError(f"decision vector has length {theta.size}, expected {dim}")
    return theta


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous disjoint blocks covering coordinates ``0 .. dim-1``.

    Block ``i`` holds the coordinates owned by agent ``i``.  Blocks are stored
    as sizes; offsets are precomputed so slicing is O(1).
    """

    block_sizes: tuple
    _offsets: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        if len(sizes) == 0:
            raise ValueError("partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be >= 1, got {sizes}")
        offsets = (0,) + tuple(np.cumsum(sizes).tolist())
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def num_blocks(self):
        return len(self.block_sizes)

    @property
    def dim(self):
        return self._offsets[-1]

    def block_slice(self, i):
        """Slice selecting block ``i`` (0-based) of a full vector."""
        if not 0 <= i < self.num_blocks:
            raise IndexError(f"block index {i} out of range for {self.num_blocks} blocks")
        return slice(self._offsets[i], self._offsets[i + 1])

    def indices(self, i):
        """Coordinate indices of block ``i`` as an integer array."""
        s = self.block_slice(i)
        return np.arange(s.start, s.stop)


def make_partition(block_sizes):
    """Build a :class:`BlockPartition` from an iterable of block sizes."""
    return BlockPartition(tuple(block_sizes))


def subvector(theta, partition, i):
    """Return a copy of block ``i`` of ``theta`` under ``partition``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (partition.dim,):
        raise ValueError(
            f"vector of length {theta.size} does not match partition dim {partition.dim}"
        )
    return theta[partition.block_slice(i)].copy()


@dataclass(frozen=True)
class GainSchedule:
    """Step-size sequence ``a_k``.

    Two kinds:

    * ``"constant"``: a_k = a for all k (used for tracking moving targets).
    * ``"decay"``: a_k = a / (k + 1 + stability)**alpha with 0.5 < alpha <= 1,
      which keeps the sequence square-summable but not summable.
    """

    kind: str
    a: float
    stability: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "decay"):
            raise ValueError(f"unknown gain kind {self.kind!r}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ValueError(f"gain coefficient must be positive, got {self.a}")
        if self.kind == "decay":
            if not 0.5 < self.alpha <= 1.0:
                raise ValueError(f"decay exponent must satisfy 0.5 < alpha <= 1, got {self.alpha}")
            if self.stability < 0:
                raise ValueError(f"stability constant must be >= 0, got {self.stability}")

    @classmethod
    def constant(cls, a):
        return cls("constant", float(a))

    @classmethod
    def decay(cls, a, stability=0.0, alpha=1.0):
        return cls("decay", float(a), float(stability), float(alpha))

    def at(self, k):
        """Gain value a_k for iteration ``k >= 0``."""
        if k < 0:
            raise ValueError(f"iteration index must be >= 0, got {k}")
        if self.kind == "constant":
            return self.a
        return self.a / (k + 1 + self.stability) ** self.alpha


def gain_at(schedule, k):
    """Function form of :meth:`GainSchedule.at`."""
    return schedule.at(k)


@dataclass
class MeasurementCounter:
    """Running tally of oracle calls, charged by the owning problem."""

    loss_evals: int = 0
    grad_evals: int = 0

    def total(self):
        return self.loss_evals + self.grad_evals

    def snapshot(self):
        return (self.loss_evals, self.grad_evals)

    def reset(self):
        self.loss_evals = 0
        self.grad_evals = 0


class CyclicProblem:
    """One global noisy loss over a block-partitioned decision vector.

    Parameters
    ----------
    partition : BlockPartition
        Ownership of coordinates by agents; ``num_blocks`` agents.
    loss_oracle : callable(theta, rng) -> float, optional
        Noisy measurement of the global loss.
    grad_oracle : callable(theta, rng) -> ndarray, optional
        Noisy measurement of the full gradient.  Estimators mask it down to
        the acting agent's block.
    true_loss : callable(theta) -> float, optional
        Noise-free loss, used only for instrumentation.
    true_optimum : ndarray, optional
        Known minimizer, used only for error reporting and stopping.

    At least one oracle must be supplied.  Every oracle call increments the
    measurement counter.
    """

    framework = "cyclic"

    def __init__(self, partition, loss_oracle=None, grad_oracle=None,
                 true_loss=None, true_optimum=None, counter=None):
        if loss_oracle is None and grad_oracle is None:
            raise ValueError("cyclic problem needs a loss oracle or a gradient oracle")
        self.partition = partition
        self._loss_oracle = loss_oracle
        self._grad_oracle = grad_oracle
        self._true_loss = true_loss
        self.true_optimum = None if true_optimum is None else as_param_vec(true_optimum, partition.dim)
        self.counter = MeasurementCounter() if counter is None else counter

    @property
    def dim(self):
        return self.partition.dim

    @property
    def num_agents(self):
        return self.partition.num_blocks

    @property
    def has_loss_oracle(self):
        return self._loss_oracle is not None

    @property
    def has_grad_oracle(self):
        return self._grad_oracle is not None

    def loss(self, theta, rng):
        """Noisy loss measurement; counts one loss evaluation."""
        if self._loss_oracle is None:
            raise ValueError("problem has no loss oracle")
        self.counter.loss_evals += 1
        return float(self._loss_oracle(theta, rng))

    def grad(self, theta, rng):
        """Noisy full-gradient measurement; counts one gradient evaluation."""
        if self._grad_oracle is None:
            raise ValueError("problem has no gradient oracle")
        self.counter.grad_evals += 1
        return np.asarray(self._grad_oracle(theta, rng), dtype=float)

    def true_loss(self, theta):
        if self._true_loss is None:
            raise ValueError("problem has no noise-free loss")
        return float(self._true_loss(theta))

    @property
    def has_true_loss(self):
        return self._true_loss is not None


class DistributedProblem:
    """A sum of per-agent losses L(theta) = sum_i L_i(theta).

    Each agent holds its own noisy oracles for L_i evaluated at the full
    decision vector; there is no block structure unless the optional
    ``partition`` supplies one (the agent count is independent of it, since
    agents of a distributed problem all see the whole vector).
    """

    framework = "distributed"

    def __init__(self, num_agents, dim, local_loss_oracles=None, local_grad_oracles=None,
                 true_loss=None, true_optimum=None, partition=None, counter=None):
        if num_agents < 1:
            raise ValueError(f"need at least one agent, got {num_agents}")
        if dim < 1:
            raise ValueError(f"decision dimension must be >= 1, got {dim}")
        if local_loss_oracles is None and local_grad_oracles is None:
            raise ValueError("distributed problem needs local loss or local gradient oracles")
        for name, oracles in (("loss", local_loss_oracles), ("gradient", local_grad_oracles)):
            if oracles is not None and len(oracles) != num_agents:
                raise ValueError(f"got {len(oracles)} local {name} oracles for {num_agents} agents")
        if partition is not None and partition.dim != dim:
            raise ValueError(f"partition covers {partition.dim} coordinates, problem has {dim}")
        self.num_agents = int(num_agents)
        self.dim = int(dim)
        self.partition = partition
        self._local_loss = None if local_loss_oracles is None else tuple(local_loss_oracles)
        self._local_grad = None if local_grad_oracles is None else tuple(local_grad_oracles)
        self._true_loss = true_loss
        self.true_optimum = None if true_optimum is None else as_param_vec(true_optimum, dim)
        self.counter = MeasurementCounter() if counter is None else counter

    @property
    def has_local_loss(self):
        return self._local_loss is not None

    @property
    def has_local_grad(self):
        return self._local_grad is not None

    def _check_agent(self, i):
        if not 0 <= i < self.num_agents:
            raise IndexError(f"agent index {i} out of range for {self.num_agents} agents")

    def local_loss(self, i, theta, rng):
        """Noisy measurement of L_i(theta); counts one loss evaluation."""
        self._check_agent(i)
        if self._local_loss is None:
            raise ValueError("problem has no local loss oracles")
        self.counter.loss_evals += 1
        return float(self._local_loss[i](theta, rng))

    def local_grad(self, i, theta, rng):
        """Noisy measurement of the full gradient of L_i; counts one gradient evaluation."""
        self._check_agent(i)
        if self._local_grad is None:
            raise ValueError("problem has no local gradient oracles")
        self.counter.grad_evals += 1
        return np.asarray(self._local_grad[i](theta, rng), dtype=float)

    def true_loss(self, theta):
        if self._true_loss is None:
            raise ValueError("problem has no noise-free loss")
        return float(self._true_loss(theta))

    @property
    def has_true_loss(self):
        return self._true_loss is not None
