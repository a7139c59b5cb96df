"""Block gradient estimators.

A block estimate is a full-length vector that is zero outside the acting
agent's block.  Three constructions are provided for the cyclic framework:

* ``sg_block_gradient``: mask a direct noisy measurement of the full gradient.
* ``fdsa_block_gradient``: two-sided finite differences, one coordinate of the
  block at a time, each loss evaluation drawing fresh noise.
* ``spsa_block_gradient``: simultaneous perturbation of the whole block with a
  Bernoulli +/-1 direction, two loss evaluations total.

For the distributed framework ``local_gradient`` returns agent i's measurement
of the full gradient of its own loss term.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_param_vec

__all__ = [
    "PerturbSchedule",
    "BlockGradEstimate",
    "mask_to_block",
    "sg_block_gradient",
    "fdsa_block_gradient",
    "spsa_block_gradient",
    "local_gradient",
    "block_estimator",
]


@dataclass(frozen=True)
class PerturbSchedule:
    """Perturbation half-width sequence ``c_k`` for difference estimators.

    ``"constant"`` holds c_k = c; ``"decay"`` uses c_k = c / (k + 1)**gamma.
    When paired with a decaying gain a_k = a / (k + 1 + s)**alpha the exponent
    should satisfy gamma < alpha; that pairing is checked where gain and
    perturbation schedules meet, not here.
    """

    kind: str
    c: float
    gamma: float = 0.101

    def __post_init__(self):
        if self.kind not in ("constant", "decay"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError(f"perturbation half-width must be positive, got {self.c}")
        if self.kind == "decay" and not self.gamma > 0:
            raise ValueError(f"decay exponent must be positive, got {self.gamma}")

    @classmethod
    def constant(cls, c):
        return cls("constant", float(c))

    @classmethod
    def decay(cls, c, gamma=0.101):
        return cls("decay", float(c), float(gamma))

    def at(self, k):
        if k < 0:
            raise ValueError(f"iteration index must be >= 0, got {k}")
        if self.kind == "constant":
            return self.c
        return self.c / (k + 1) ** self.gamma


@dataclass(frozen=True)
class BlockGradEstimate:
    """A gradient estimate supported on one block.

    ``vector`` has full length with zeros off the block; ``measurements_used``
    is the number of oracle calls the construction consumed.
    """

    vector: np.ndarray
    block: int
    measurements_used: int


def mask_to_block(g, partition, block):
    """Zero every coordinate of ``g`` outside ``block``.

    Kept coordinates are copied bitwise, so summing the masks over all blocks
    reconstructs ``g`` exactly.
    """
    g = as_param_vec(g, partition.dim)
    masked = np.zeros(partition.dim)
    s = partition.block_slice(block)
    masked[s] = g[s]
    return masked


def sg_block_gradient(problem, block, theta, rng):
    """Measure the full gradient once and mask it to ``block``."""
    theta = as_param_vec(theta, problem.dim)
    full = problem.grad(theta, rng)
    if full.shape != theta.shape:
        raise ValueError(f"gradient oracle returned shape {full.shape}, expected {theta.shape}")
    return BlockGradEstimate(mask_to_block(full, problem.partition, block), block, 1)


def fdsa_block_gradient(problem, block, theta, c, rng):
    """Two-sided finite differences over the coordinates of ``block``.

    Every one of the 2 * p_i loss evaluations draws its own noise from
    ``rng``; the two sides of a difference are not coupled.
    """
    if not c > 0:
        raise ValueError(f"perturbation half-width must be positive, got {c}")
    theta = as_param_vec(theta, problem.dim)
    s = problem.partition.block_slice(block)
    est = np.zeros(problem.dim)
    for j in range(s.start, s.stop):
        probe = theta.copy()
        probe[j] = theta[j] + c
        plus = problem.loss(probe, rng)
        probe[j] = theta[j] - c
        minus = problem.loss(probe, rng)
        est[j] = (plus - minus) / (2 * c)
    return BlockGradEstimate(est, block, 2 * (s.stop - s.start))


def spsa_block_gradient(problem, block, theta, c, rng, delta=None):
    """Simultaneous perturbation over ``block`` with two loss evaluations.

    The direction ``delta`` is Bernoulli +/-1 on the block coordinates, drawn
    from ``rng`` unless supplied; supplying it lets callers enumerate the
    direction ensemble.  Off-block coordinates are never perturbed and the
    returned estimate is zero there.
    """
    if not c > 0:
        raise ValueError(f"perturbation half-width must be positive, got {c}")
    theta = as_param_vec(theta, problem.dim)
    s = problem.partition.block_slice(block)
    width = s.stop - s.start
    if delta is None:
        delta = rng.integers(0, 2, size=width) * 2 - 1
    else:
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (width,):
            raise ValueError(f"delta has shape {delta.shape}, expected ({width},)")
        if not np.all(np.abs(delta) == 1):
            raise ValueError("delta entries must be +1 or -1")
    shift = np.zeros(problem.dim)
    shift[s] = c * delta
    plus = problem.loss(theta + shift, rng)
    minus = problem.loss(theta - shift, rng)
    d = (plus - minus) / (2 * c)
    est = np.zeros(problem.dim)
    est[s] = d / delta
    return BlockGradEstimate(est, block, 2)


def local_gradient(problem, agent, theta, rng):
    """Agent ``agent``'s noisy measurement of the full gradient of its loss term."""
    theta = as_param_vec(theta, problem.dim)
    g = problem.local_grad(agent, theta, rng)
    if g.shape != theta.shape:
        raise ValueError(f"local gradient oracle returned shape {g.shape}, expected {theta.shape}")
    return g


def block_estimator(kind, perturb=None):
    """Build an ``(problem, block, theta, k, rng) -> BlockGradEstimate`` callable.

    ``kind`` is one of ``"sg"``, ``"fdsa"``, ``"spsa"``; the difference kinds
    require a :class:`PerturbSchedule`.
    """
    if kind == "sg":
        if perturb is not None:
            raise ValueError("the direct gradient estimator takes no perturbation schedule")

        def estimate(problem, block, theta, k, rng):
            return sg_block_gradient(problem, block, theta, rng)

    elif kind in ("fdsa", "spsa"):
        if perturb is None:
            raise ValueError(f"estimator {kind!r} requires a perturbation schedule")
        base = fdsa_block_gradient if kind == "fdsa" else spsa_block_gradient

        def estimate(problem, block, theta, k, rng):
            return base(problem, block, theta, perturb.at(k), rng)

    else:
        raise ValueError(f"unknown estimator kind {kind!r}")

    estimate.kind = kind
    return estimate
