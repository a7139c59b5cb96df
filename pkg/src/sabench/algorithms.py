"""The four iteration schemes and a driver that runs them to a stopping rule.

Two of the schemes keep a single shared iterate and sweep the agents in
order within each iteration (the cyclic update); the other two keep one
local copy per agent and update all copies simultaneously from iteration-k
information (the distributed update).  Crossed with the two problem forms
this gives:

* ``gcsa``: cyclic update on a global loss, masked block estimates.
* ``cisa``: cyclic update on a sum of per-agent losses, full local gradients,
  iterate handed from agent to agent.
* ``dsa``: distributed update on a sum of per-agent losses, consensus mixing
  then a full local gradient step per agent.
* ``dsa_s``: distributed update on a global loss, consensus mixing then a
  masked block estimate so agent i writes only its own coordinates.

Every oracle call inside iteration k by agent i draws from the substream
keyed by (seed, k, i), so trajectories are pure functions of the seed and
identical under any scheduling of the agent updates.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import (
    AGENT_DOMAIN,
    INIT_DOMAIN,
    GainSchedule,
    as_param_vec,
    substream,
)
from .estimators import PerturbSchedule, block_estimator, local_gradient

__all__ = [
    "SingleState",
    "MultiState",
    "TraceRecord",
    "RunTrace",
    "StopRule",
    "DivergenceError",
    "GCSA",
    "DSA",
    "DSAS",
    "CISA",
    "gcsa_iteration",
    "dsa_iteration",
    "dsa_s_iteration",
    "cisa_iteration",
    "consensus_average",
    "consensus_error",
    "run",
]


class DivergenceError(RuntimeError):
    """An iterate went non-finite.

    ``last_state`` is the most recent finite state; when raised out of
    :func:`run`, ``trace`` holds the records logged up to that state.
    """

    def __init__(self, message, last_state=None, trace=None):
        super().__init__(message)
        self.last_state = last_state
        self.trace = trace


@dataclass(frozen=True)
class SingleState:
    """One shared iterate theta_k, as kept by the cyclic-update schemes."""

    theta: np.ndarray
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta", as_param_vec(self.theta).copy())
        if self.k < 0:
            raise ValueError(f"iteration counter must be >= 0, got {self.k}")

    @property
    def dim(self):
        return self.theta.size


@dataclass(frozen=True)
class MultiState:
    """Per-agent local copies theta_ki, stacked as an (A, p) array."""

    thetas: np.ndarray
    k: int = 0

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=float)
        if thetas.ndim != 2 or thetas.shape[0] < 1 or thetas.shape[1] < 1:
            raise ValueError(f"local copies must form a nonempty (A, p) array, got shape {thetas.shape}")
        if not np.all(np.isfinite(thetas)):
            raise ValueError("local copies have non-finite entries")
        object.__setattr__(self, "thetas", thetas)
        if self.k < 0:
            raise ValueError(f"iteration counter must be >= 0, got {self.k}")

    @classmethod
    def replicate(cls, theta, num_agents, k=0):
        """All agents start from identical copies of ``theta``."""
        theta = as_param_vec(theta)
        return cls(np.tile(theta, (num_agents, 1)), k)

    @property
    def num_agents(self):
        return self.thetas.shape[0]

    @property
    def dim(self):
        return self.thetas.shape[1]

    def agent(self, i):
        """Copy of agent ``i``'s local iterate."""
        return self.thetas[i].copy()


def consensus_average(state):
    """Coordinate-wise mean of the local copies, theta_bar_k."""
    return np.asarray(state.thetas, dtype=float).mean(axis=0)


def consensus_error(state):
    """max_i of the distance between agent i's copy and the average."""
    mean = consensus_average(state)
    return float(np.max(np.linalg.norm(state.thetas - mean, axis=1)))


@dataclass(frozen=True)
class TraceRecord:
    """One logged state: metrics are None where undefined."""

    k: int
    gain: float
    error: float | None
    consensus_error: float | None
    loss: float | None
    loss_evals: int
    grad_evals: int


@dataclass
class RunTrace:
    """Per-iteration records; the initial state is logged, so a run of K
    iterations has K + 1 records.  Measurement counts are cumulative from
    the start of the run."""

    records: list = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    @property
    def iterations(self):
        return len(self.records) - 1

    @property
    def final(self):
        return self.records[-1]

    def column(self, name):
        """Values of one record field across all records."""
        return [getattr(r, name) for r in self.records]


@dataclass(frozen=True)
class StopRule:
    """First satisfied criterion stops the run; checked between iterations.

    ``measurement_budget`` counts loss plus gradient evaluations consumed by
    the run; an iteration in progress always completes, so the final count
    may overshoot.  ``target_error`` needs a problem with a known optimum.
    At least one of the two bounded criteria must be set, since a target
    error alone may never be reached on a noisy problem.
    """

    max_iterations: int | None = None
    measurement_budget: int | None = None
    target_error: float | None = None

    def __post_init__(self):
        if self.max_iterations is None and self.measurement_budget is None:
            raise ValueError("set max_iterations or measurement_budget (target_error alone may never stop)")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.measurement_budget is not None and self.measurement_budget < 0:
            raise ValueError(f"measurement_budget must be >= 0, got {self.measurement_budget}")
        if self.target_error is not None and not self.target_error > 0:
            raise ValueError(f"target_error must be positive, got {self.target_error}")


def _check_estimator_spec(kind, perturb, gain):
    # Validates the estimator/schedule pairing shared by GCSA and DSAS.
    if kind not in ("sg", "fdsa", "spsa"):
        raise ValueError(f"unknown estimator kind {kind!r}")
    if kind == "sg":
        if perturb is not None:
            raise ValueError("the direct gradient estimator takes no perturbation schedule")
    else:
        if perturb is None:
            raise ValueError(f"estimator {kind!r} requires a perturbation schedule")
        if gain.kind == "decay" and perturb.kind == "decay" and not perturb.gamma < gain.alpha:
            raise ValueError(
                f"perturbation decay gamma={perturb.gamma} must be smaller than gain decay alpha={gain.alpha}"
            )


@dataclass(frozen=True)
class GCSA:
    """Cyclic sweep of masked block updates on one shared iterate.

    Within iteration k the agents act in order i = 0..A-1; agent i forms a
    block estimate at the freshest iterate and applies
    theta <- theta - a_k * g_hat^(i)(theta), all with the same gain a_k.
    """

    gain: GainSchedule
    estimator: str = "sg"
    perturb: PerturbSchedule | None = None

    def __post_init__(self):
        _check_estimator_spec(self.estimator, self.perturb, self.gain)


@dataclass(frozen=True)
class DSA:
    """Synchronous consensus mixing plus one local gradient step per agent."""

    gain: GainSchedule
    graph: object

    def __post_init__(self):
        if not hasattr(self.graph, "weights"):
            raise ValueError("dsa requires a communication graph")


@dataclass(frozen=True)
class DSAS:
    """Consensus mixing plus a masked block step: agent i writes only its block."""

    gain: GainSchedule
    graph: object
    estimator: str = "sg"
    perturb: PerturbSchedule | None = None

    def __post_init__(self):
        if not hasattr(self.graph, "weights"):
            raise ValueError("dsa_s requires a communication graph")
        _check_estimator_spec(self.estimator, self.perturb, self.gain)


@dataclass(frozen=True)
class CISA:
    """Sequential hand-off: each agent applies its full local gradient in turn."""

    gain: GainSchedule


_FRAMEWORK_RULE = (
    "'{algo}' pairs with a {need}-framework problem ({detail}); "
    "got a {got}-framework problem. The separable quadratic exposes both forms."
)
_DETAIL = {
    "cyclic": "a global loss or gradient oracle over the block-partitioned vector",
    "distributed": "per-agent loss terms summing to the objective",
}


def _as_framework(problem, need, algo):
    """Resolve ``problem`` to the framework ``algo`` consumes, or raise."""
    got = getattr(problem, "framework", None)
    if got == need:
        return problem
    view = getattr(problem, "as_" + need, None)
    if view is not None:
        return view()
    raise ValueError(_FRAMEWORK_RULE.format(algo=algo, need=need, detail=_DETAIL[need], got=got))


def _check_agents(graph, problem, algo):
    if graph.num_agents != problem.num_agents:
        raise ValueError(
            f"{algo}: graph has {graph.num_agents} agents but problem has {problem.num_agents}"
        )


def gcsa_iteration(state, problem, estimator, a_k, seed):
    """One outer iteration of the cyclic masked scheme.

    Sets theta_{k,0} = theta_k, then for each agent i in order applies
    theta_{k,i} = theta_{k,i-1} - a_k * g_hat^(i)(theta_{k,i-1}) and returns
    theta_{k+1} = theta_{k,A}.  Exactly A estimator calls, one per block,
    all with the same a_k; inner step i reads the iterate already updated
    by agents 0..i-1 and touches only coordinates of block i.
    """
    problem = _as_framework(problem, "cyclic", "gcsa")
    theta = state.theta
    for i in range(problem.num_agents):
        rng = substream(seed, AGENT_DOMAIN, state.k, i)
        est = estimator(problem, i, theta, state.k, rng)
        theta = theta - a_k * est.vector
        if not np.isfinite(theta).all():
            raise DivergenceError(
                f"non-finite iterate after agent {i} of iteration {state.k}", last_state=state
            )
    return SingleState(theta, state.k + 1)


def cisa_iteration(state, problem, a_k, seed):
    """One sequential hand-off sweep with full local gradients.

    theta_{k,0} = theta_k; for each agent i in the fixed order 0..A-1,
    theta_{k,i} = theta_{k,i-1} - a_k * g_hat_i(theta_{k,i-1}); the last
    agent's result becomes theta_{k+1}.  Gradients are unmasked, so every
    agent may move the whole vector.
    """
    problem = _as_framework(problem, "distributed", "cisa")
    theta = state.theta
    for i in range(problem.num_agents):
        rng = substream(seed, AGENT_DOMAIN, state.k, i)
        g = local_gradient(problem, i, theta, rng)
        theta = theta - a_k * g
        if not np.isfinite(theta).all():
            raise DivergenceError(
                f"non-finite iterate after agent {i} of iteration {state.k}", last_state=state
            )
    return SingleState(theta, state.k + 1)


def dsa_iteration(state, problem, graph, a_k, seed):
    """One synchronous consensus-plus-gradient step for every agent.

    All agents first mix, eta_ki = sum_j W_ij(k) theta_kj over the
    iteration-k copies, then step theta_{k+1,i} = eta_ki - a_k *
    g_hat_i(eta_ki).  Only k-indexed values are read, so the agent order
    is immaterial.
    """
    problem = _as_framework(problem, "distributed", "dsa")
    _check_agents(graph, problem, "dsa")
    if state.num_agents != problem.num_agents:
        raise ValueError(
            f"state has {state.num_agents} local copies for {problem.num_agents} agents"
        )
    w = graph.weights(state.k)
    eta = w @ state.thetas
    new = np.empty_like(eta)
    for i in range(problem.num_agents):
        rng = substream(seed, AGENT_DOMAIN, state.k, i)
        g = local_gradient(problem, i, eta[i], rng)
        new[i] = eta[i] - a_k * g
    if not np.isfinite(new).all():
        raise DivergenceError(f"non-finite local copy after iteration {state.k}", last_state=state)
    return MultiState(new, state.k + 1)


def dsa_s_iteration(state, problem, graph, estimator, a_k, seed):
    """Consensus mixing followed by a masked block step per agent.

    Mixing is identical to the unmasked scheme; the gradient step uses the
    block estimate g_hat^(i), so agent i changes only coordinates of its
    block and every other coordinate of theta_{k+1,i} equals eta_ki exactly.
    """
    problem = _as_framework(problem, "cyclic", "dsa_s")
    _check_agents(graph, problem, "dsa_s")
    if state.num_agents != problem.num_agents:
        raise ValueError(
            f"state has {state.num_agents} local copies for {problem.num_agents} agents"
        )
    w = graph.weights(state.k)
    eta = w @ state.thetas
    new = np.empty_like(eta)
    for i in range(problem.num_agents):
        rng = substream(seed, AGENT_DOMAIN, state.k, i)
        est = estimator(problem, i, eta[i], state.k, rng)
        new[i] = eta[i] - a_k * est.vector
    if not np.isfinite(new).all():
        raise DivergenceError(f"non-finite local copy after iteration {state.k}", last_state=state)
    return MultiState(new, state.k + 1)


def _initial_state(algorithm, problem, init, seed):
    multi = isinstance(algorithm, (DSA, DSAS))
    if init is None:
        if multi:
            rows = [substream(seed, INIT_DOMAIN, i).standard_normal(problem.dim)
                    for i in range(problem.num_agents)]
            return MultiState(np.stack(rows))
        return SingleState(substream(seed, INIT_DOMAIN, 0).standard_normal(problem.dim))
    if multi:
        init = np.asarray(init, dtype=float)
        if init.ndim == 1:
            state = MultiState.replicate(init, problem.num_agents)
        else:
            if init.shape[0] != problem.num_agents:
                raise ValueError(f"init has {init.shape[0]} rows for {problem.num_agents} agents")
            state = MultiState(init)
    else:
        state = SingleState(as_param_vec(init))
    if state.dim != problem.dim:
        raise ValueError(f"init has dimension {state.dim}, problem has {problem.dim}")
    return state


def _make_stepper(algorithm, problem, seed):
    if isinstance(algorithm, GCSA):
        est = block_estimator(algorithm.estimator, algorithm.perturb)
        _require_oracles(problem, algorithm.estimator, "gcsa")
        return lambda s, a: gcsa_iteration(s, problem, est, a, seed)
    if isinstance(algorithm, DSAS):
        est = block_estimator(algorithm.estimator, algorithm.perturb)
        _require_oracles(problem, algorithm.estimator, "dsa_s")
        _check_agents(algorithm.graph, problem, "dsa_s")
        return lambda s, a: dsa_s_iteration(s, problem, algorithm.graph, est, a, seed)
    if isinstance(algorithm, DSA):
        if not problem.has_local_grad:
            raise ValueError("dsa needs local gradient oracles")
        _check_agents(algorithm.graph, problem, "dsa")
        return lambda s, a: dsa_iteration(s, problem, algorithm.graph, a, seed)
    if isinstance(algorithm, CISA):
        if not problem.has_local_grad:
            raise ValueError("cisa needs local gradient oracles")
        return lambda s, a: cisa_iteration(s, problem, a, seed)
    raise TypeError(f"unknown algorithm config {algorithm!r}")


def _require_oracles(problem, estimator_kind, algo):
    if estimator_kind == "sg" and not problem.has_grad_oracle:
        raise ValueError(f"{algo} with the direct estimator needs a gradient oracle")
    if estimator_kind in ("fdsa", "spsa") and not problem.has_loss_oracle:
        raise ValueError(f"{algo} with estimator {estimator_kind!r} needs a loss oracle")


def run(algorithm, problem, stop, seed, init=None):
    """Drive ``algorithm`` on ``problem`` until ``stop``, logging a trace.

    ``stop`` is a :class:`StopRule` or an equivalent mapping.  ``init`` may
    be a vector (replicated across agents for the distributed-update
    schemes), an (A, p) array of per-agent copies, or None for a standard
    normal draw from the init substream.  The whole run is a pure function
    of (algorithm, problem, stop, seed, init); a divergent iterate raises
    :class:`DivergenceError` with the partial trace attached.
    """
    if isinstance(stop, dict):
        stop = StopRule(**stop)
    need = "cyclic" if isinstance(algorithm, (GCSA, DSAS)) else "distributed"
    algo_name = type(algorithm).__name__.lower().replace("dsas", "dsa_s")
    problem = _as_framework(problem, need, algo_name)
    if stop.target_error is not None and problem.true_optimum is None:
        raise ValueError("target_error stopping needs a problem with a known optimum")

    step = _make_stepper(algorithm, problem, seed)
    state = _initial_state(algorithm, problem, init, seed)
    base_loss, base_grad = problem.counter.snapshot()

    trace = RunTrace()

    def log(state):
        multi = isinstance(state, MultiState)
        rep = consensus_average(state) if multi else state.theta
        err = None
        if problem.true_optimum is not None:
            err = float(np.linalg.norm(rep - problem.true_optimum))
        cons = consensus_error(state) if multi else None
        loss = problem.true_loss(rep) if problem.has_true_loss else None
        trace.append(TraceRecord(
            k=state.k,
            gain=algorithm.gain.at(state.k),
            error=err,
            consensus_error=cons,
            loss=loss,
            loss_evals=problem.counter.loss_evals - base_loss,
            grad_evals=problem.counter.grad_evals - base_grad,
        ))

    log(state)
    while True:
        if stop.max_iterations is not None and state.k >= stop.max_iterations:
            break
        spent = problem.counter.total() - base_loss - base_grad
        if stop.measurement_budget is not None and spent >= stop.measurement_budget:
            break
        if stop.target_error is not None and trace.final.error <= stop.target_error:
            break
        try:
            state = step(state, algorithm.gain.at(state.k))
        except DivergenceError as err:
            err.trace = trace
            raise
        log(state)
    return trace
