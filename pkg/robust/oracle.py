"""
Brute-force worst-reward oracle: projected gradient descent on the reward over
the uncertainty ball, with a Hoelder-equality optimality certificate.

Used to cross-check the closed forms in :mod:`robust.uncertainty` on small
instances.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .gradient import project_simplex
from .mdp import OccupancyMeasure, Policy, TabularMdp, occupancy_exact
from .uncertainty import (
    REGULARIZER_NAMES,
    Flavor,
    UncertaintySpec,
    WorstCaseReport,
    holder_conjugate,
    lp_norm,
)

logger = logging.getLogger(__name__)

MAX_PAIRS = 64
_BISECTION_STEPS = 80


@dataclass(frozen=True)
class OracleConfig:
    # the step is scaled by radius / ||gradient||_2 so it is unit-free
    step_scale: float = 1e6
    # absolute step, used instead of step_scale when set
    step_size: Optional[float] = None
    max_iters: int = 200
    tol: float = 1e-12
    certificate_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @classmethod
    def fixed_step(cls, step_size: float = 1e-2, max_iters: int = 100_000) -> "OracleConfig":
        """
        Plain projected descent with a small constant step.

        Many iterations walk the boundary of the ball towards the minimizer
        instead of landing on the Hoelder direction in one jump.
        """
        return cls(step_size=step_size, max_iters=max_iters)


@dataclass(frozen=True)
class OracleResult:
    report: WorstCaseReport
    certified: bool
    iterations: int


def _shrink_magnitudes(a: np.ndarray, lam: float, p: float) -> np.ndarray:
    """Solve t + lam p t^(p-1) = a for t in [0, a], entrywise, by bisection"""
    lo = np.zeros_like(a)
    hi = a.copy()
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        too_big = mid + lam * p * mid ** (p - 1.0) > a
        hi = np.where(too_big, mid, hi)
        lo = np.where(too_big, lo, mid)
    return 0.5 * (lo + hi)


def project_lp_ball(x: np.ndarray, radius: float, p: float) -> np.ndarray:
    """Euclidean projection of x onto {y : ||y||_p <= radius}"""
    x = np.asarray(x, dtype=float)
    if radius == 0.0:
        return np.zeros_like(x)
    if lp_norm(x, p) <= radius:
        return x.copy()
    if p == 2.0:
        return x * (radius / lp_norm(x, 2.0))
    if np.isinf(p):
        return np.clip(x, -radius, radius)
    magnitude = np.abs(x)
    if p == 1.0:
        return np.sign(x) * radius * project_simplex(magnitude / radius)

    # KKT: y_i = sign(x_i) t_i with t_i + lam p t_i^(p-1) = |x_i|
    def excess(lam: float) -> float:
        return lp_norm(_shrink_magnitudes(magnitude, lam, p), p) - radius

    hi = 1.0
    while excess(hi) > 0:
        hi *= 4.0
    lam = brentq(excess, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return np.sign(x) * _shrink_magnitudes(magnitude, lam, p)


def _descend(weighted: np.ndarray, radius: float, p: float, config: OracleConfig) -> Tuple[np.ndarray, int]:
    """Minimize <weighted, y> over ||y||_p <= radius by projected gradient descent"""
    y = np.zeros_like(weighted)
    scale = lp_norm(weighted, 2.0)
    if radius == 0.0 or scale == 0.0:
        return y, 0
    step = config.step_size if config.step_size is not None else config.step_scale * radius / scale
    for iteration in range(1, config.max_iters + 1):
        y_next = project_lp_ball(y - step * weighted, radius, p)
        change = float(np.max(np.abs(y_next - y)))
        y = y_next
        if change <= config.tol * radius:
            return y, iteration
    return y, config.max_iters


def holder_certificate(
    weighted: np.ndarray, y: np.ndarray, radius: float, p: float, tol: float
) -> bool:
    """
    Global optimality of y for min <weighted, y> over the p-ball.

    Requires opposite signs (y_i weighted_i <= 0), feasibility and the
    equality case <weighted, y> = -||weighted||_q ||y||_p at full radius.
    """
    q = holder_conjugate(p)
    dual = lp_norm(weighted, q)
    if radius == 0.0 or dual == 0.0:
        return True
    size = lp_norm(y, p)
    feasible = size <= radius * (1.0 + 1e-9)
    signs = bool(np.all(y * weighted <= tol * radius * dual))
    attained = abs(float(weighted @ y) + radius * dual) <= tol * radius * dual
    return feasible and signs and attained


def _blocks(mdp: TabularMdp, spec: UncertaintySpec) -> List[Tuple[Tuple[np.ndarray, ...], float]]:
    """Index sets of the independent balls, with their radii"""
    s_idx, a_idx = np.indices((mdp.num_states, mdp.num_actions))
    if spec.flavor is Flavor.COUPLED:
        return [((s_idx.ravel(), a_idx.ravel()), spec.radius)]
    if spec.flavor is Flavor.S_RECT:
        assert spec.state_radii is not None
        return [((s_idx[s], a_idx[s]), float(spec.state_radii[s])) for s in range(mdp.num_states)]
    assert spec.pair_radii is not None
    return [
        ((np.array([s]), np.array([a])), float(spec.pair_radii[s, a]))
        for s in range(mdp.num_states)
        for a in range(mdp.num_actions)
    ]


def brute_force_worst_reward(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    config: OracleConfig = OracleConfig(),
) -> OracleResult:
    """
    Minimize <R, d^pi> over the uncertainty set numerically.

    Works in the rescaled coordinates y = w^(1/p) (R - R0), where the weighted
    ball becomes a plain p-ball and the objective gradient is d / w^(1/p).
    Rectangular flavors are solved ball by ball.
    """
    if mdp.num_states * mdp.num_actions > MAX_PAIRS:
        raise ValueError(f"oracle is limited to S*A <= {MAX_PAIRS}")
    spec.check_dimensions(mdp)
    occupancy: OccupancyMeasure = occupancy_exact(mdp, policy)
    d_sa = occupancy.state_action
    scale = spec.weight_scale(d_sa.shape)
    weighted = d_sa / scale

    shift = np.zeros_like(d_sa)
    certified = True
    iterations = 0
    for index, radius in _blocks(mdp, spec):
        block = weighted[index]
        y, used = _descend(block, radius, spec.p, config)
        iterations = max(iterations, used)
        shift[index] = y / scale[index]
        if not holder_certificate(block, y, radius, spec.p, config.certificate_tol):
            certified = False

    if not certified:
        logger.warning("oracle optimum failed the Hoelder optimality conditions")

    worst = mdp.reward + shift
    nominal = float(np.sum(d_sa * mdp.reward))
    robust = float(np.sum(d_sa * worst))
    report = WorstCaseReport(
        worst_reward=worst,
        penalty=-shift,
        robust_return=robust,
        nominal_return=nominal,
        regularizer_value=nominal - robust,
        regularizer=REGULARIZER_NAMES[spec.flavor],
        spec=spec,
        occupancy=occupancy,
    )
    return OracleResult(report, certified, iterations)
