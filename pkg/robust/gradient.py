"""
Robust policy gradients (direct and softmax parametrizations), simplex
projection and the smoothness constant of the robust return.
"""

import logging
from typing import Optional

import numpy as np
from scipy.special import softmax

from .exceptions import SpecError
from .mdp import Policy, TabularMdp
from .uncertainty import Flavor, UncertaintySpec, WorstCaseReport, robust_q, robust_return

logger = logging.getLogger(__name__)


def project_simplex(x: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorted-threshold method)"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("project_simplex expects a non-empty vector")
    u = np.sort(x)[::-1]
    cumulative = np.cumsum(u) - 1.0
    index = np.arange(1, x.size + 1)
    rho = np.nonzero(u - cumulative / index > 0)[0][-1]
    theta = cumulative[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def project_rows(table: np.ndarray) -> np.ndarray:
    """Project every row of a table onto the simplex"""
    table = np.asarray(table, dtype=float)
    n, k = table.shape
    u = -np.sort(-table, axis=1)
    cumulative = np.cumsum(u, axis=1) - 1.0
    index = np.arange(1, k + 1)
    active = u - cumulative / index > 0
    rho = k - 1 - np.argmax(active[:, ::-1], axis=1)
    theta = cumulative[np.arange(n), rho] / (rho + 1.0)
    return np.maximum(table - theta[:, None], 0.0)


def softmax_policy(theta: np.ndarray, temperature: float = 1.0) -> Policy:
    """pi_theta(a|s) proportional to exp(temperature * theta(s, a))"""
    return Policy(softmax(temperature * np.asarray(theta, dtype=float), axis=1))


def _check_differentiable(spec: UncertaintySpec) -> None:
    if spec.p == 1.0 and spec.flavor is not Flavor.SA_RECT and spec.max_radius > 0:
        raise SpecError("the robust return is not differentiable at p = 1")
    if np.isinf(spec.p) and spec.flavor is Flavor.COUPLED and spec.radius > 0:
        logger.warning(
            "p = inf: the coupled penalty alpha ||d||_1 is constant in pi, "
            "so the robust gradient equals the nominal one"
        )


def robust_policy_gradient(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    report: Optional[WorstCaseReport] = None,
) -> np.ndarray:
    """
    d rho_robust / d pi(a|s) = d(s) Q_robust(s, a).

    By the envelope theorem the worst reward is held fixed at its value for
    ``policy``; Q_robust is the non-robust Q under that reward.
    """
    _check_differentiable(spec)
    if report is None:
        report = robust_return(mdp, policy, spec)
    q = robust_q(mdp, policy, spec, report=report)
    return report.occupancy.state[:, None] * q.values


def robust_policy_gradient_softmax(
    mdp: TabularMdp,
    theta: np.ndarray,
    spec: UncertaintySpec,
    temperature: float = 1.0,
    report: Optional[WorstCaseReport] = None,
) -> np.ndarray:
    """d rho_robust / d theta(s, a) = temperature d(s) pi(a|s) A_robust(s, a)"""
    _check_differentiable(spec)
    policy = softmax_policy(theta, temperature)
    if report is None:
        report = robust_return(mdp, policy, spec)
    q = robust_q(mdp, policy, spec, report=report).values
    v = np.sum(policy.probs * q, axis=1)
    advantage = q - v[:, None]
    return temperature * report.occupancy.state[:, None] * policy.probs * advantage


def smoothness_constant(mdp: TabularMdp, spec: UncertaintySpec, exponent: str = "q") -> float:
    """
    beta = L + alpha (2 N^((e+1)/e) (e-1) K^2 + N^(1/e) L)

    with N = SA, L = 2 gamma A / (1-gamma)^3, K = A / (1-gamma)^2. ``e`` is the
    conjugate q by default (the penalized norm is ||d||_q); pass
    ``exponent="p"`` for the literal appendix reading.
    """
    if spec.p == 1.0 or np.isinf(spec.p):
        raise SpecError("smoothness constant is only defined for finite p > 1")
    if exponent not in ("p", "q"):
        raise ValueError("exponent must be 'p' or 'q'")
    e = spec.q if exponent == "q" else spec.p
    n = mdp.num_states * mdp.num_actions
    a = mdp.num_actions
    gamma = mdp.gamma
    lipschitz_smooth = 2.0 * gamma * a / (1.0 - gamma) ** 3
    lipschitz = a / (1.0 - gamma) ** 2
    norm_smooth = 2.0 * n ** ((e + 1.0) / e) * (e - 1.0) * lipschitz**2 + n ** (
        1.0 / e
    ) * lipschitz_smooth
    return lipschitz_smooth + spec.max_radius * norm_smooth
