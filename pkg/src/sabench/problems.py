"""Benchmark problems: separable quadratics, a distributed regression field,
and a planar multi-target surveillance scenario.

The separable quadratic exposes the same objective both as a global loss over
the partitioned vector and as a sum of per-agent terms, with the noise of a
given (iteration, agent) substream identical in the two views; it is the
instance on which all four algorithms can be compared directly.  The
regression field is purely distributed (per-agent data, no global oracle).
The surveillance scenario is a time-varying family of global losses, one per
time step.
"""

import warnings

import numpy as np

from .core import (
    DATA_DOMAIN,
    BlockPartition,
    CyclicProblem,
    DistributedProblem,
    MeasurementCounter,
    as_param_vec,
    make_partition,
    subvector,
    substream,
)
from .estimators import mask_to_block

__all__ = [
    "SeparableQuadratic",
    "RegressionField",
    "SurveillanceScenario",
    "make_separable_quadratic",
    "make_regression_field",
    "make_surveillance",
    "fourier_features",
    "polynomial_features",
    "local_estimate_vector",
    "true_optimum",
    "run_tracking",
]


class SeparableQuadratic:
    """L(theta) = sum_i c_i * ||t_i - t_i*||^2 over the blocks of a partition.

    Exposes the objective in both frameworks via :meth:`as_cyclic` and
    :meth:`as_distributed`.  Noise: the loss oracles add sigma times a scalar
    normal draw; the gradient oracles add sigma times a full-length normal
    draw.  Agent i's local gradient oracle draws the same full-length vector
    and masks it, so for equal substreams the block-i noise matches the
    masked global oracle bit for bit.
    """

    def __init__(self, partition, block_optima=None, block_curvatures=None, noise_sigma=0.0):
        self.partition = partition
        if block_optima is None:
            block_optima = [np.zeros(s) for s in partition.block_sizes]
        if len(block_optima) != partition.num_blocks:
            raise ValueError(
                f"got {len(block_optima)} block optima for {partition.num_blocks} blocks"
            )
        opt = np.concatenate([as_param_vec(np.atleast_1d(b), s)
                              for b, s in zip(block_optima, partition.block_sizes)])
        if block_curvatures is None:
            block_curvatures = np.ones(partition.num_blocks)
        curv = np.asarray(block_curvatures, dtype=float)
        if curv.shape != (partition.num_blocks,):
            raise ValueError(f"got {curv.size} curvatures for {partition.num_blocks} blocks")
        if not np.all(curv > 0):
            raise ValueError(f"curvatures must be positive, got {curv.tolist()}")
        if noise_sigma < 0:
            raise ValueError(f"noise level must be >= 0, got {noise_sigma}")
        self.block_optima = opt
        self.block_curvatures = curv
        self.noise_sigma = float(noise_sigma)
        self.true_optimum = opt.copy()
        # per-coordinate curvature, blocks repeated to full length
        self._curv = np.repeat(curv, partition.block_sizes)
        self._cyclic = None
        self._distributed = None

    @property
    def dim(self):
        return self.partition.dim

    @property
    def num_agents(self):
        return self.partition.num_blocks

    def true_loss(self, theta):
        d = np.asarray(theta, dtype=float) - self.block_optima
        return float(np.sum(self._curv * d * d))

    def block_loss(self, i, theta):
        """The i-th term c_i * ||t_i - t_i*||^2, a function of block i only."""
        s = self.partition.block_slice(i)
        d = np.asarray(theta, dtype=float)[s] - self.block_optima[s]
        return float(self.block_curvatures[i] * np.dot(d, d))

    def full_gradient(self, theta):
        return 2.0 * self._curv * (np.asarray(theta, dtype=float) - self.block_optima)

    def _noisy_full_gradient(self, theta, rng):
        return self.full_gradient(theta) + self.noise_sigma * rng.standard_normal(self.dim)

    def as_cyclic(self):
        """Global-loss view; repeated calls return the same problem object."""
        if self._cyclic is None:
            self._cyclic = CyclicProblem(
                self.partition,
                loss_oracle=lambda theta, rng: self.true_loss(theta)
                + self.noise_sigma * rng.standard_normal(),
                grad_oracle=self._noisy_full_gradient,
                true_loss=self.true_loss,
                true_optimum=self.true_optimum,
            )
        return self._cyclic

    def as_distributed(self):
        """Per-agent view; agent i's term depends on block i alone."""
        if self._distributed is None:
            def make_loss(i):
                return lambda theta, rng: self.block_loss(i, theta) \
                    + self.noise_sigma * rng.standard_normal()

            def make_grad(i):
                return lambda theta, rng: mask_to_block(
                    self._noisy_full_gradient(theta, rng), self.partition, i)

            agents = range(self.num_agents)
            self._distributed = DistributedProblem(
                self.num_agents,
                self.dim,
                local_loss_oracles=[make_loss(i) for i in agents],
                local_grad_oracles=[make_grad(i) for i in agents],
                true_loss=self.true_loss,
                true_optimum=self.true_optimum,
                partition=self.partition,
            )
        return self._distributed


def make_separable_quadratic(partition, block_optima=None, block_curvatures=None, noise_sigma=0.0):
    """Separable quadratic exposing both the cyclic and the distributed view."""
    if not isinstance(partition, BlockPartition):
        partition = make_partition(partition)
    return SeparableQuadratic(partition, block_optima, block_curvatures, noise_sigma)


def fourier_features(dim):
    """phi(s) = [1, sqrt(2) sin s, sqrt(2) cos s, sqrt(2) sin 2s, ...], length ``dim``."""
    if dim < 1:
        raise ValueError(f"feature dimension must be >= 1, got {dim}")

    def phi(s):
        out = np.empty(dim)
        out[0] = 1.0
        for j in range(1, dim):
            harmonic = (j + 1) // 2
            trig = np.sin if j % 2 == 1 else np.cos
            out[j] = np.sqrt(2.0) * trig(harmonic * s)
        return out

    phi.dim = dim
    return phi


def polynomial_features(dim):
    """phi(s) = [1, s, s^2, ...], length ``dim``."""
    if dim < 1:
        raise ValueError(f"feature dimension must be >= 1, got {dim}")

    def phi(s):
        return float(s) ** np.arange(dim)

    phi.dim = dim
    return phi


class RegressionField(DistributedProblem):
    """Agents sensing a static spatial field through linear features.

    Agent i sits at location s_i and holds N_i scalar observations
    r_ik = phi(s_i)' true_theta + noise, generated once at construction.
    Its empirical loss is L_i(theta) = (1/N_i) sum_k (r_ik - phi(s_i)' theta)^2;
    the oracles draw one sample index per call (minibatch of one), which is
    the only stochasticity.  The exact minimizer of sum_i L_i solves the
    stacked normal equations and is exposed as ``true_optimum``.
    """

    def __init__(self, locations, feature_map, true_theta, samples_per_agent, noise_sigma, seed):
        locations = list(locations)
        num_agents = len(locations)
        if num_agents < 1:
            raise ValueError("need at least one agent location")
        true_theta = as_param_vec(true_theta)
        p = true_theta.size
        counts = np.broadcast_to(np.asarray(samples_per_agent, dtype=int), (num_agents,)).copy()
        if np.any(counts < 1):
            raise ValueError(f"samples per agent must be >= 1, got {counts.tolist()}")
        if noise_sigma < 0:
            raise ValueError(f"noise level must be >= 0, got {noise_sigma}")

        features = []
        for s in locations:
            f = np.asarray(feature_map(s), dtype=float)
            if f.shape != (p,):
                raise ValueError(
                    f"feature map returned shape {f.shape} at location {s!r}, expected ({p},)"
                )
            features.append(f)
        features = np.stack(features)

        observations = []
        for i in range(num_agents):
            rng = substream(seed, DATA_DOMAIN, i)
            clean = float(features[i] @ true_theta)
            observations.append(clean + noise_sigma * rng.standard_normal(counts[i]))

        def make_oracles(i):
            phi_i = features[i]
            obs_i = observations[i]
            n_i = counts[i]

            def grad(theta, rng):
                j = rng.integers(n_i)
                return 2.0 * (phi_i @ theta - obs_i[j]) * phi_i

            def loss(theta, rng):
                j = rng.integers(n_i)
                resid = obs_i[j] - phi_i @ theta
                return resid * resid

            return loss, grad

        oracles = [make_oracles(i) for i in range(num_agents)]

        # sum_i mean((obs_i - phi_i @ theta)^2) reduced to per-agent first and
        # second moments, so the instrumentation loss is O(A p) per call
        obs_mean = np.array([np.mean(o) for o in observations])
        obs_sq_mean = np.array([np.mean(o * o) for o in observations])

        def full_loss(theta):
            fitted = features @ np.asarray(theta, dtype=float)
            return float(np.sum(obs_sq_mean - 2.0 * fitted * obs_mean + fitted * fitted))

        normal_matrix = features.T @ features
        rhs = features.T @ obs_mean
        if np.linalg.matrix_rank(normal_matrix) < p:
            warnings.warn(
                "stacked feature design is rank-deficient; reporting the minimum-norm solution"
            )
            optimum = np.linalg.lstsq(normal_matrix, rhs, rcond=None)[0]
        else:
            optimum = np.linalg.solve(normal_matrix, rhs)

        super().__init__(
            num_agents,
            p,
            local_loss_oracles=[o[0] for o in oracles],
            local_grad_oracles=[o[1] for o in oracles],
            true_loss=full_loss,
            true_optimum=optimum,
        )
        self.locations = locations
        self.features = features
        self.observations = observations
        self.samples_per_agent = counts
        self.true_theta = true_theta
        self.noise_sigma = float(noise_sigma)

    def local_full_gradient(self, i, theta):
        """Analytic full-batch gradient of L_i, for checking the oracle's mean."""
        phi_i = self.features[i]
        return 2.0 * (phi_i @ np.asarray(theta, dtype=float) - np.mean(self.observations[i])) * phi_i


def make_regression_field(num_agents, locations, feature_map, true_theta,
                          samples_per_agent, noise_sigma, seed):
    """Distributed least-squares field with ``num_agents`` sensing agents."""
    locations = list(locations)
    if len(locations) != num_agents:
        raise ValueError(f"got {len(locations)} locations for {num_agents} agents")
    return RegressionField(locations, feature_map, true_theta, samples_per_agent,
                           noise_sigma, seed)


def local_estimate_vector(partition, agent, own_block, peer_blocks):
    """Assemble agent ``agent``'s view of the full decision vector.

    Block ``agent`` is the live value ``own_block``; every other block l is
    taken from ``peer_blocks[l]`` (the latest communicated estimates).  A
    missing peer raises, since the view is undefined without it.
    """
    own = np.atleast_1d(np.asarray(own_block, dtype=float))
    s = partition.block_slice(agent)
    if own.shape != (s.stop - s.start,):
        raise ValueError(f"own block has shape {own.shape}, expected ({s.stop - s.start},)")
    out = np.empty(partition.dim)
    out[s] = own
    for l in range(partition.num_blocks):
        if l == agent:
            continue
        if l not in peer_blocks:
            raise ValueError(f"missing peer estimate for agent {l}")
        sl = partition.block_slice(l)
        peer = np.atleast_1d(np.asarray(peer_blocks[l], dtype=float))
        if peer.shape != (sl.stop - sl.start,):
            raise ValueError(
                f"peer estimate for agent {l} has shape {peer.shape}, expected ({sl.stop - sl.start},)"
            )
        out[sl] = peer
    return out


class SurveillanceScenario:
    """Planar agents steering to keep moving targets informative.

    At time step k each agent chooses a heading (block size 1; optionally
    heading plus speed, block size 2), moves one step, and the network pays

        L_k = - sum_j log det F_kj,
        F_kj = eps * I + sum_{detecting agents a} H_aj' R^-1 H_aj,

    where H_aj is the range-bearing Jacobian of agent a's measurement of
    target j at the post-move geometry and detection means being within
    ``detection_radius`` of the target.  ``problem_at`` wraps one time step
    as a global-loss problem over the stacked heading vector; its oracle
    jitters the agent-target offsets used in H by ``detection_noise`` (the
    measurement noise), while detection itself is decided on the true
    geometry.  There is no static optimum; ``true_optimum`` is None.
    """

    def __init__(self, initial_positions, target_waypoints, detection_radius,
                 measurement_noise_cov=None, epsilon=1e-3, speed=0.05,
                 detection_noise=0.05, heading_dim=1, gain=0.2):
        positions = np.asarray(initial_positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2 or positions.shape[0] < 1:
            raise ValueError(f"initial positions must be (A, 2), got shape {positions.shape}")
        if not epsilon > 0:
            raise ValueError(
                f"prior information epsilon must be positive (det F can be 0 for undetected targets), got {epsilon}"
            )
        if not detection_radius > 0:
            raise ValueError(f"detection radius must be positive, got {detection_radius}")
        if heading_dim not in (1, 2):
            raise ValueError(f"per-agent block must be heading (1) or heading+speed (2), got {heading_dim}")
        if detection_noise < 0:
            raise ValueError(f"detection noise must be >= 0, got {detection_noise}")
        if not speed > 0:
            raise ValueError(f"speed must be positive, got {speed}")
        r = np.asarray(measurement_noise_cov if measurement_noise_cov is not None
                       else 0.01 * np.eye(2), dtype=float)
        if r.shape != (2, 2) or not np.allclose(r, r.T):
            raise ValueError("measurement noise covariance must be a symmetric 2x2 matrix")
        try:
            np.linalg.cholesky(r)
        except np.linalg.LinAlgError:
            raise ValueError("measurement noise covariance must be positive definite") from None

        self.initial_positions = positions
        self.targets = []
        for j, wp in enumerate(target_waypoints):
            wp = np.atleast_2d(np.asarray(wp, dtype=float))
            if wp.shape[1] != 3:
                raise ValueError(
                    f"target {j} waypoints must be rows of (step, x, y), got shape {wp.shape}"
                )
            if np.any(np.diff(wp[:, 0]) <= 0):
                raise ValueError(f"target {j} waypoint steps must be strictly increasing")
            self.targets.append(wp)
        self.detection_radius = float(detection_radius)
        self.measurement_noise_cov = r
        self._r_inv = np.linalg.inv(r)
        self.epsilon = float(epsilon)
        self.speed = float(speed)
        self.detection_noise = float(detection_noise)
        self.heading_dim = int(heading_dim)
        self.gain = float(gain)
        self.partition = make_partition([heading_dim] * positions.shape[0])
        self.counter = MeasurementCounter()
        self.true_optimum = None

    @property
    def num_agents(self):
        return self.initial_positions.shape[0]

    @property
    def num_targets(self):
        return len(self.targets)

    @property
    def dim(self):
        return self.partition.dim

    def target_positions(self, k):
        """(T, 2) target positions at step ``k``; waypoints interpolate and clamp."""
        out = np.empty((self.num_targets, 2))
        for j, wp in enumerate(self.targets):
            out[j, 0] = np.interp(k, wp[:, 0], wp[:, 1])
            out[j, 1] = np.interp(k, wp[:, 0], wp[:, 2])
        return out

    def move(self, positions, headings):
        """Advance every agent one step along its heading."""
        headings = as_param_vec(headings, self.dim)
        if self.heading_dim == 1:
            angles = headings
            speeds = np.full(self.num_agents, self.speed)
        else:
            angles = headings[0::2]
            speeds = headings[1::2]
        step = np.stack([speeds * np.cos(angles), speeds * np.sin(angles)], axis=1)
        return np.asarray(positions, dtype=float) + step

    def _target_information(self, agent_positions, target_pos, rng):
        f = self.epsilon * np.eye(2)
        for a in range(self.num_agents):
            offset = target_pos - agent_positions[a]
            dist = float(np.hypot(offset[0], offset[1]))
            if dist > self.detection_radius:
                continue
            if rng is not None and self.detection_noise > 0:
                offset = offset + self.detection_noise * rng.standard_normal(2)
                dist = float(np.hypot(offset[0], offset[1]))
            dist = max(dist, 1e-8)  # an agent sitting on the target would blow up H
            dx, dy = offset / dist
            h = np.array([[dx, dy], [-dy / dist, dx / dist]])
            f = f + h.T @ self._r_inv @ h
        return f

    def information_loss(self, agent_positions, target_positions, rng=None):
        """- sum_j log det F_j; noise-free when ``rng`` is None."""
        total = 0.0
        for j in range(len(target_positions)):
            f = self._target_information(np.asarray(agent_positions, dtype=float),
                                         target_positions[j], rng)
            det = f[0, 0] * f[1, 1] - f[0, 1] * f[1, 0]
            total -= float(np.log(det))
        return total

    def problem_at(self, k, agent_positions):
        """One time step as a global-loss problem over the heading vector.

        The oracle moves the agents from ``agent_positions`` under candidate
        headings and scores the post-move geometry against the targets at
        step k+1.  All problems of the family share this scenario's counter.
        """
        positions = np.asarray(agent_positions, dtype=float).copy()
        targets_next = self.target_positions(k + 1)

        def oracle(headings, rng):
            return self.information_loss(self.move(positions, headings), targets_next, rng)

        return CyclicProblem(
            self.partition,
            loss_oracle=oracle,
            true_loss=lambda headings: self.information_loss(
                self.move(positions, headings), targets_next),
            counter=self.counter,
        )

    def local_view(self, k, agent_positions, agent, peer_headings):
        """Agent ``agent``'s loss over the full heading vector with peers frozen.

        Only block ``agent`` of the argument is read; the rest comes from
        ``peer_headings``, so probes outside the block cannot change the value.
        """
        positions = np.asarray(agent_positions, dtype=float).copy()
        targets_next = self.target_positions(k + 1)

        def loss(headings, rng=None):
            own = subvector(as_param_vec(headings, self.dim), self.partition, agent)
            assembled = local_estimate_vector(self.partition, agent, own, peer_headings)
            return self.information_loss(self.move(positions, assembled), targets_next, rng)

        return loss


def make_surveillance(num_agents, num_targets, initial_agent_positions, target_trajectories,
                      detection_radius, measurement_noise_cov=None, epsilon=1e-3, **kwargs):
    """Surveillance scenario with ``num_agents`` agents and ``num_targets`` targets."""
    positions = np.asarray(initial_agent_positions, dtype=float)
    if positions.shape[0] != num_agents:
        raise ValueError(f"got {positions.shape[0]} initial positions for {num_agents} agents")
    trajectories = list(target_trajectories)
    if len(trajectories) != num_targets:
        raise ValueError(f"got {len(trajectories)} target trajectories for {num_targets} targets")
    return SurveillanceScenario(positions, trajectories, detection_radius,
                                measurement_noise_cov, epsilon, **kwargs)


def true_optimum(problem):
    """The problem's known minimizer, or None when there is none."""
    opt = getattr(problem, "true_optimum", None)
    return None if opt is None else np.asarray(opt, dtype=float).copy()


def run_tracking(scenario, steps, seed, gain=None, estimator="spsa", perturb=None,
                 optimize=True, init_headings=None):
    """Closed-loop tracking: one cyclic optimization sweep per time step.

    At step k the agents take one masked-update sweep over their headings on
    the step-k problem (skipped when ``optimize`` is false, which freezes the
    initial headings), then everyone moves.  Returns a trace whose ``loss``
    column is the noise-free post-move loss; there is no optimum, so the
    error column is None throughout.
    """
    from .algorithms import RunTrace, SingleState, TraceRecord, gcsa_iteration
    from .estimators import PerturbSchedule, block_estimator
    from .core import INIT_DOMAIN, GainSchedule

    if steps < 0:
        raise ValueError(f"step count must be >= 0, got {steps}")
    if gain is None:
        gain = GainSchedule.constant(scenario.gain)
    elif isinstance(gain, (int, float)):
        gain = GainSchedule.constant(gain)
    if optimize:
        if estimator in ("fdsa", "spsa") and perturb is None:
            perturb = PerturbSchedule.constant(0.3)
        est = block_estimator(estimator, perturb)
    if init_headings is None:
        rng = substream(seed, INIT_DOMAIN, 0)
        angles = rng.uniform(-np.pi, np.pi, scenario.num_agents)
        if scenario.heading_dim == 1:
            headings = angles
        else:
            headings = np.empty(scenario.dim)
            headings[0::2] = angles
            headings[1::2] = scenario.speed
    else:
        headings = as_param_vec(init_headings, scenario.dim)

    positions = scenario.initial_positions.copy()
    base_loss, base_grad = scenario.counter.snapshot()
    trace = RunTrace()

    def log(k, loss_value):
        trace.append(TraceRecord(
            k=k,
            gain=gain.at(k),
            error=None,
            consensus_error=None,
            loss=loss_value,
            loss_evals=scenario.counter.loss_evals - base_loss,
            grad_evals=scenario.counter.grad_evals - base_grad,
        ))

    log(0, scenario.information_loss(positions, scenario.target_positions(0)))
    for k in range(steps):
        if optimize:
            problem = scenario.problem_at(k, positions)
            state = gcsa_iteration(SingleState(headings, k), problem, est, gain.at(k), seed)
            headings = state.theta
        positions = scenario.move(positions, headings)
        log(k + 1, scenario.information_loss(positions, scenario.target_positions(k + 1)))
    return trace
