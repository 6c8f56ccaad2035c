"""
Lp-ball reward uncertainty: coupled and rectangular worst-case rewards,
robust returns, robust value/Q evaluation and the rectangularized fixed point.

A coupled ball ``{R : ||R - R0||_{w,p} <= alpha}`` is handled through the
substitution d_hat = d / w^(1/p), which turns the weighted problem into an
unweighted one. The same substitution is applied block-wise for the
rectangular flavors.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .exceptions import SpecError
from .mdp import (
    OccupancyMeasure,
    Policy,
    QFunction,
    TabularMdp,
    ValueFunction,
    fixed_point,
    occupancy_exact,
    optimal_value_iteration,
    policy_kernel,
    policy_reward,
    q_from_value,
    solve_value_exact,
    value_iteration,
)

logger = logging.getLogger(__name__)

ARGMAX_RTOL = 1e-9


class Flavor(str, Enum):
    COUPLED = "coupled"
    S_RECT = "s-rect"
    SA_RECT = "sa-rect"


REGULARIZER_NAMES = {
    Flavor.COUPLED: "frequency",
    Flavor.S_RECT: "averaged policy norm",
    Flavor.SA_RECT: "averaged reward radius",
}


def holder_conjugate(p: float) -> float:
    """q with 1/p + 1/q = 1, using q(1) = inf and q(inf) = 1"""
    p = float(p)
    if not p >= 1.0:
        raise SpecError(f"norm order p={p} must be >= 1")
    if p == 1.0:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def lp_norm(x: np.ndarray, p: float) -> float:
    return float(np.linalg.norm(np.ravel(x), ord=p))


def _optional_table(value: Any) -> Optional[np.ndarray]:
    if value is None:
        return None
    table = np.array(value, dtype=float)
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class UncertaintySpec:
    """
    Reward uncertainty around the nominal reward.

    ``radius`` is the coupled radius alpha. Rectangular flavors carry their
    own ``state_radii`` (s-rect) or ``pair_radii`` (sa-rect); see
    :meth:`matched` for radii copied from a single alpha.
    """

    radius: float = 0.0
    p: float = 2.0
    flavor: Flavor = Flavor.COUPLED
    weights: Optional[np.ndarray] = None
    state_radii: Optional[np.ndarray] = None
    pair_radii: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "radius", float(self.radius))
        for name in ("weights", "state_radii", "pair_radii"):
            object.__setattr__(self, name, _optional_table(getattr(self, name)))

        if self.radius < 0 or not np.isfinite(self.radius):
            raise SpecError(f"radius alpha={self.radius} must be finite and >= 0")
        holder_conjugate(self.p)
        if self.weights is not None and not np.all(self.weights > 0):
            raise SpecError("weights must be entrywise > 0")

        if self.flavor is Flavor.S_RECT and self.state_radii is None:
            raise SpecError("s-rect flavor requires state_radii")
        if self.flavor is Flavor.SA_RECT and self.pair_radii is None:
            raise SpecError("sa-rect flavor requires pair_radii")
        if self.flavor is not Flavor.S_RECT and self.state_radii is not None:
            raise SpecError("state_radii are only defined for the s-rect flavor")
        if self.flavor is not Flavor.SA_RECT and self.pair_radii is not None:
            raise SpecError("pair_radii are only defined for the sa-rect flavor")
        for radii in (self.state_radii, self.pair_radii):
            if radii is not None and not np.all(radii >= 0):
                raise SpecError("rectangular radii must be >= 0")

    @classmethod
    def matched(
        cls,
        flavor: "Flavor | str",
        alpha: float,
        p: float,
        num_states: int,
        num_actions: int,
        weights: Optional[np.ndarray] = None,
    ) -> "UncertaintySpec":
        """Spec of the given flavor with every radius equal to alpha"""
        flavor = Flavor(flavor)
        if flavor is Flavor.S_RECT:
            return cls(alpha, p, flavor, weights, state_radii=np.full(num_states, alpha))
        if flavor is Flavor.SA_RECT:
            return cls(
                alpha,
                p,
                flavor,
                weights,
                pair_radii=np.full((num_states, num_actions), alpha),
            )
        return cls(alpha, p, flavor, weights)

    @property
    def q(self) -> float:
        return holder_conjugate(self.p)

    @property
    def max_radius(self) -> float:
        if self.flavor is Flavor.S_RECT:
            assert self.state_radii is not None
            return float(np.max(self.state_radii, initial=0.0))
        if self.flavor is Flavor.SA_RECT:
            assert self.pair_radii is not None
            return float(np.max(self.pair_radii, initial=0.0))
        return self.radius

    def weight_scale(self, shape: Tuple[int, int]) -> np.ndarray:
        """w^(1/p) per pair (all ones without weights or at p = inf)"""
        if self.weights is None or np.isinf(self.p):
            return np.ones(shape)
        if self.weights.shape != shape:
            raise SpecError(f"weights shape {self.weights.shape} != {shape}")
        return self.weights ** (1.0 / self.p)

    def check_dimensions(self, mdp: TabularMdp) -> None:
        shape = (mdp.num_states, mdp.num_actions)
        if self.state_radii is not None and self.state_radii.shape != (mdp.num_states,):
            raise SpecError(f"state_radii shape {self.state_radii.shape} != ({mdp.num_states},)")
        if self.pair_radii is not None and self.pair_radii.shape != shape:
            raise SpecError(f"pair_radii shape {self.pair_radii.shape} != {shape}")
        if self.weights is not None and self.weights.shape != shape:
            raise SpecError(f"weights shape {self.weights.shape} != {shape}")

    def to_dict(self) -> Dict[str, Any]:
        def encode(table: Optional[np.ndarray]) -> Any:
            return None if table is None else table.tolist()

        return {
            "radius": self.radius,
            "p": "inf" if np.isinf(self.p) else self.p,
            "flavor": self.flavor.value,
            "weights": encode(self.weights),
            "state_radii": encode(self.state_radii),
            "pair_radii": encode(self.pair_radii),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UncertaintySpec":
        return cls(
            radius=data.get("radius", 0.0),
            p=float(data.get("p", 2.0)),
            flavor=data.get("flavor", Flavor.COUPLED.value),
            weights=data.get("weights"),
            state_radii=data.get("state_radii"),
            pair_radii=data.get("pair_radii"),
        )


@dataclass(frozen=True)
class WorstCaseReport:
    """Worst-case reward and robust return of one policy under one spec"""

    worst_reward: np.ndarray
    penalty: np.ndarray
    robust_return: float
    nominal_return: float
    regularizer_value: float
    regularizer: str
    spec: UncertaintySpec
    occupancy: OccupancyMeasure

    def summary(self) -> Dict[str, Any]:
        return {
            "nominal_return": self.nominal_return,
            "robust_return": self.robust_return,
            "regularizer": self.regularizer,
            "regularizer_value": self.regularizer_value,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "penalty": self.penalty.tolist(),
            "worst_reward": self.worst_reward.tolist(),
            "robust_return": self.robust_return,
            "nominal_return": self.nominal_return,
            "regularizer": self.regularizer,
            "regularizer_value": self.regularizer_value,
            "spec": self.spec.to_dict(),
        }


def worst_direction(weighted: np.ndarray, q: float, radius: float) -> Tuple[np.ndarray, float]:
    """
    Minimizer magnitude of <weighted, y> over ||y||_p <= radius, and ||weighted||_q.

    Returns ``(y, norm)`` with y >= 0; the minimizer itself is -y. ``weighted``
    must be entrywise >= 0.
    """
    weighted = np.asarray(weighted, dtype=float)
    norm = lp_norm(weighted, q)
    if radius == 0.0 or norm == 0.0:
        return np.zeros_like(weighted), norm
    if np.isinf(q):
        top = weighted.max()
        support = weighted >= top - ARGMAX_RTOL * top
        return np.where(support, radius / support.sum(), 0.0), norm
    if q == 1.0:
        return np.full_like(weighted, radius), norm
    return radius * (weighted / norm) ** (q - 1.0), norm


def penalty_from_occupancy(
    occupancy: OccupancyMeasure, policy: Policy, spec: UncertaintySpec
) -> Tuple[np.ndarray, float]:
    """
    Penalty table (worst reward = R0 - penalty) and regularizer value for any
    flavor, given an occupancy measure.

    The occupancy may be an estimate; the actor-critic feeds its running
    occupancy here.
    """
    d_sa = occupancy.state_action
    scale = spec.weight_scale(d_sa.shape)
    q = spec.q

    if spec.flavor is Flavor.COUPLED:
        y, norm = worst_direction((d_sa / scale).ravel(), q, spec.radius)
        return y.reshape(d_sa.shape) / scale, spec.radius * norm

    if spec.flavor is Flavor.S_RECT:
        assert spec.state_radii is not None
        penalty = np.zeros_like(d_sa)
        regularizer = 0.0
        for s in range(d_sa.shape[0]):
            y, norm = worst_direction(policy.probs[s] / scale[s], q, spec.state_radii[s])
            penalty[s] = y / scale[s]
            regularizer += occupancy.state[s] * spec.state_radii[s] * norm
        return penalty, float(regularizer)

    assert spec.pair_radii is not None
    penalty = spec.pair_radii / scale
    return penalty, float(np.sum(d_sa * penalty))


def _report(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    occupancy: Optional[OccupancyMeasure],
) -> WorstCaseReport:
    spec.check_dimensions(mdp)
    if occupancy is None:
        occupancy = occupancy_exact(mdp, policy)
    penalty, regularizer_value = penalty_from_occupancy(occupancy, policy, spec)
    nominal = float(np.sum(occupancy.state_action * mdp.reward))
    return WorstCaseReport(
        worst_reward=mdp.reward - penalty,
        penalty=penalty,
        robust_return=nominal - regularizer_value,
        nominal_return=nominal,
        regularizer_value=regularizer_value,
        regularizer=REGULARIZER_NAMES[spec.flavor],
        spec=spec,
        occupancy=occupancy,
    )


def worst_case_reward(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    occupancy: Optional[OccupancyMeasure] = None,
) -> WorstCaseReport:
    """
    Closed-form worst reward over the coupled (weighted) Lp ball.

    R(s, a) = R0(s, a) - alpha (d_hat(s, a) / ||d_hat||_q)^(q-1) / w(s, a)^(1/p),
    uniform alpha at p = inf and alpha / |X*| on the argmax set X* at p = 1.
    """
    if spec.flavor is not Flavor.COUPLED:
        raise SpecError(f"worst_case_reward needs a coupled spec, got {spec.flavor.value}")
    return _report(mdp, policy, spec, occupancy)


def worst_case_reward_rectangular(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    occupancy: Optional[OccupancyMeasure] = None,
) -> WorstCaseReport:
    if spec.flavor is Flavor.COUPLED:
        raise SpecError("worst_case_reward_rectangular needs an s-rect or sa-rect spec")
    return _report(mdp, policy, spec, occupancy)


def robust_return(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    occupancy: Optional[OccupancyMeasure] = None,
) -> WorstCaseReport:
    """Worst-case report for any flavor"""
    return _report(mdp, policy, spec, occupancy)


def robust_value_iteration(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    tol: float = 1e-10,
    v0: Optional[np.ndarray] = None,
) -> ValueFunction:
    """
    v_{n+1} = T^pi_{R0} v_n - sum_a pi_s(a) penalty(s, a).

    The occupancy, and so the penalty, does not depend on v and is computed once.
    """
    report = robust_return(mdp, policy, spec)
    return value_iteration(mdp, policy, report.worst_reward, tol=tol, v0=v0)


def robust_q(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    report: Optional[WorstCaseReport] = None,
) -> QFunction:
    """Q(s, a) = R0(s, a) + gamma P v_robust - penalty(s, a)"""
    if report is None:
        report = robust_return(mdp, policy, spec)
    value = solve_value_exact(mdp, policy, report.worst_reward)
    return QFunction(q_from_value(mdp, value.values, report.worst_reward))


def rectangularized_value(
    mdp: TabularMdp,
    policy: Policy,
    spec: UncertaintySpec,
    tol: float = 1e-10,
) -> ValueFunction:
    """
    Fixed point of the state-wise robust Bellman operator on a coupled ball.

    Minimizing state by state only sees each state's slice of the ball, which
    is an Lp ball of the same radius, so
    v(s) <- T^pi_{R0} v(s) - alpha ||pi_s / w_s^(1/p)||_q.
    """
    if spec.flavor is not Flavor.COUPLED:
        raise SpecError("rectangularized_value needs a coupled spec")
    spec.check_dimensions(mdp)
    scale = spec.weight_scale((mdp.num_states, mdp.num_actions))
    q = spec.q
    state_penalty = np.array(
        [spec.radius * lp_norm(policy.probs[s] / scale[s], q) for s in range(mdp.num_states)]
    )
    p_pi = policy_kernel(mdp, policy)
    r_pi = policy_reward(policy, mdp.reward)

    def operator(v: np.ndarray) -> np.ndarray:
        return r_pi - state_penalty + mdp.gamma * p_pi @ v

    return fixed_point(operator, np.zeros(mdp.num_states), mdp.gamma, tol)


@dataclass(frozen=True)
class SaddleCertificate:
    robust_return: float
    best_response_return: float
    best_response: Policy

    @property
    def gap(self) -> float:
        return self.best_response_return - self.robust_return


def saddle_gap(
    mdp: TabularMdp, policy: Policy, spec: UncertaintySpec, tol: float = 1e-12
) -> SaddleCertificate:
    """
    Optimal non-robust return under the policy's own worst reward, against
    its robust return. A gap near zero certifies max-min = min-max at ``policy``.
    """
    report = robust_return(mdp, policy, spec)
    solution = optimal_value_iteration(mdp, report.worst_reward, tol=tol)
    best = float(mdp.mu @ solution.value.values)
    return SaddleCertificate(report.robust_return, best, solution.policy)
