"""
Exact tabular MDP machinery: kernels, values, returns, occupancy measures and
Bellman operators.

Everything here is a pure function of its inputs. Arrays stored on the
dataclasses are made read-only at construction so instances can be shared
freely between threads and worker processes.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import linalg

from .exceptions import MdpValidationError, NumericalError

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
DENSE_SOLVE_MAX_STATES = 2000
RESIDUAL_TOL = 1e-10


def _frozen(array: Any) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


class SolveCounter:
    """Counts dense occupancy/value solves, used to check batch evaluation cost"""

    def __init__(self) -> None:
        self.count = 0

    def reset(self) -> None:
        self.count = 0

    def increment(self) -> None:
        self.count += 1


SOLVE_COUNTER = SolveCounter()


@dataclass(frozen=True)
class TabularMdp:
    """Finite discounted MDP (S, A, P, R0, gamma, mu)"""

    kernel: np.ndarray
    reward: np.ndarray
    gamma: float
    mu: np.ndarray

    def __post_init__(self) -> None:
        kernel = _frozen(self.kernel)
        reward = _frozen(self.reward)
        mu = _frozen(self.mu)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise ValueError(f"kernel must have shape (S, A, S), got {kernel.shape}")
        if reward.shape != kernel.shape[:2]:
            raise ValueError(
                f"reward shape {reward.shape} does not match kernel {kernel.shape}"
            )
        if mu.shape != (kernel.shape[0],):
            raise ValueError(f"mu shape {mu.shape} does not match {kernel.shape[0]} states")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return int(self.kernel.shape[0])

    @property
    def num_actions(self) -> int:
        return int(self.kernel.shape[1])

    def with_reward(self, reward: np.ndarray) -> "TabularMdp":
        return TabularMdp(self.kernel, reward, self.gamma, self.mu)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.gamma,
            "mu": self.mu.tolist(),
            "P": self.kernel.tolist(),
            "R0": self.reward.tolist(),
        }


@dataclass(frozen=True)
class Policy:
    """Stationary policy; row s is the action distribution pi_s"""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _frozen(self.probs)
        if probs.ndim != 2:
            raise ValueError(f"policy table must be 2-d, got shape {probs.shape}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions: Any, num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @property
    def shape(self) -> Tuple[int, int]:
        return (int(self.probs.shape[0]), int(self.probs.shape[1]))

    def to_dict(self) -> Dict[str, Any]:
        return {"probs": self.probs.tolist()}


@dataclass(frozen=True)
class ValueFunction:
    """State values plus the residual history of the iteration that produced them"""

    values: np.ndarray
    residuals: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "residuals", tuple(float(r) for r in self.residuals))

    @property
    def iterations(self) -> int:
        return len(self.residuals)


@dataclass(frozen=True)
class QFunction:
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True)
class OccupancyMeasure:
    """Discounted visitation mass d(s) and d(s, a) = d(s) pi(a|s)"""

    state: np.ndarray
    state_action: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "state", _frozen(self.state))
        object.__setattr__(self, "state_action", _frozen(self.state_action))

    @classmethod
    def from_state_mass(cls, state: np.ndarray, policy: Policy) -> "OccupancyMeasure":
        state = np.asarray(state, dtype=float)
        return cls(state, state[:, None] * policy.probs)

    @property
    def total_mass(self) -> float:
        return float(self.state.sum())


@dataclass(frozen=True)
class OccupancyIteration:
    """Result of the bootstrapped occupancy recursion"""

    occupancy: OccupancyMeasure
    iterations: int
    converged: bool
    deltas: Tuple[float, ...] = ()
    errors: Tuple[float, ...] = ()


@dataclass(frozen=True)
class OptimalSolution:
    value: ValueFunction
    policy: Policy


@dataclass(frozen=True)
class ValidationIssue:
    rule: str
    location: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.location}: {self.detail}"


@dataclass
class ValidationReport:
    """Outcome of validating an MDP, a policy or an input file"""

    subject: str
    issues: List[ValidationIssue] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.issues

    def add(self, rule: str, location: str, detail: str) -> None:
        self.issues.append(ValidationIssue(rule, location, detail))

    def raise_for_issues(self) -> None:
        if not self.passed:
            raise MdpValidationError(self)

    def __str__(self) -> str:
        if self.passed:
            return f"{self.subject}: ok"
        lines = [f"{self.subject}: {len(self.issues)} issue(s)"]
        lines.extend(f"  {issue}" for issue in self.issues)
        return "\n".join(lines)


def validate_mdp(mdp: TabularMdp) -> ValidationReport:
    """Check every TabularMdp invariant, listing each violation with its location"""
    report = ValidationReport("mdp")

    if not 0.0 <= mdp.gamma < 1.0:
        report.add("discount", "gamma", f"gamma={mdp.gamma} is outside [0, 1)")

    if not np.all(np.isfinite(mdp.reward)):
        bad = np.argwhere(~np.isfinite(mdp.reward))
        for s, a in bad:
            report.add("reward-finite", f"R0[{s}][{a}]", "reward is not finite")

    negative = np.argwhere(mdp.kernel < 0)
    for s, a, t in negative:
        report.add("kernel-nonnegative", f"P[{s}][{a}][{t}]", f"{mdp.kernel[s, a, t]!r} < 0")

    row_sums = mdp.kernel.sum(axis=2)
    for s, a in np.argwhere(np.abs(row_sums - 1.0) > PROB_TOL):
        report.add(
            "kernel-row-sum", f"(s={s}, a={a})", f"row sums to {row_sums[s, a]!r}"
        )

    if abs(mdp.mu.sum() - 1.0) > PROB_TOL:
        report.add("initial-sum", "mu", f"sums to {mdp.mu.sum()!r}")
    for s in np.flatnonzero(mdp.mu <= 0):
        report.add("initial-positive", f"mu[{s}]", f"{mdp.mu[s]!r} is not > 0")

    return report


def validate_policy(mdp: TabularMdp, policy: Policy) -> ValidationReport:
    report = ValidationReport("policy")
    if policy.shape != (mdp.num_states, mdp.num_actions):
        report.add(
            "policy-shape",
            "probs",
            f"shape {policy.shape} != ({mdp.num_states}, {mdp.num_actions})",
        )
        return report
    for s, a in np.argwhere(policy.probs < 0):
        report.add("policy-nonnegative", f"pi[{s}][{a}]", "probability < 0")
    row_sums = policy.probs.sum(axis=1)
    for s in np.flatnonzero(np.abs(row_sums - 1.0) > PROB_TOL):
        report.add("policy-row-sum", f"pi[{s}]", f"row sums to {row_sums[s]!r}")
    return report


def _check_policy(mdp: TabularMdp, policy: Policy) -> None:
    if policy.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(
            f"policy shape {policy.shape} does not match MDP "
            f"({mdp.num_states}, {mdp.num_actions})"
        )


def _check_reward(mdp: TabularMdp, reward: np.ndarray) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(
            f"reward shape {reward.shape} does not match MDP "
            f"({mdp.num_states}, {mdp.num_actions})"
        )
    return reward


def policy_kernel(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """P^pi(s'|s) = sum_a pi_s(a) P(s'|s, a)"""
    _check_policy(mdp, policy)
    return np.einsum("sa,sat->st", policy.probs, mdp.kernel)


def policy_reward(policy: Policy, reward: np.ndarray) -> np.ndarray:
    return np.einsum("sa,sa->s", policy.probs, reward)


def bellman_operator(
    mdp: TabularMdp, policy: Policy, reward: np.ndarray
) -> Callable[[np.ndarray], np.ndarray]:
    """T^pi_R v = R^pi + gamma P^pi v"""
    reward = _check_reward(mdp, reward)
    p_pi = policy_kernel(mdp, policy)
    r_pi = policy_reward(policy, reward)

    def apply(v: np.ndarray) -> np.ndarray:
        return r_pi + mdp.gamma * p_pi @ v

    return apply


def _dense_solve(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    SOLVE_COUNTER.increment()
    try:
        solution = linalg.solve(matrix, rhs)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"{what}: linear solve failed ({exc})") from exc
    residual = np.max(np.abs(matrix @ solution - rhs), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    if not np.all(np.isfinite(solution)) or residual > RESIDUAL_TOL * scale:
        raise NumericalError(f"{what}: residual {residual:.3e} after linear solve")
    return solution


def fixed_point(
    operator: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    gamma: float,
    tol: float,
    max_iters: Optional[int] = None,
) -> ValueFunction:
    """
    Iterate a gamma-contraction until the a-posteriori bound guarantees
    ||v - v*||_inf <= tol.

    Stops once ||T v_n - v_n||_inf <= tol (1 - gamma) / gamma and returns
    T v_n, recording every residual along the way.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    threshold = tol * (1.0 - gamma) / gamma if gamma > 0 else np.inf
    v = np.array(v0, dtype=float)
    residuals: List[float] = []
    while True:
        v_next = operator(v)
        residual = float(np.max(np.abs(v_next - v), initial=0.0))
        residuals.append(residual)
        v = v_next
        if not np.isfinite(residual):
            raise NumericalError("fixed-point iteration produced non-finite values")
        if residual <= threshold:
            break
        if max_iters is not None and len(residuals) >= max_iters:
            logger.warning(
                "fixed-point iteration stopped at max_iters=%d, residual %.3e",
                max_iters,
                residual,
            )
            break
    return ValueFunction(v, residuals)


def value_iteration(
    mdp: TabularMdp,
    policy: Policy,
    reward: np.ndarray,
    tol: float = 1e-10,
    v0: Optional[np.ndarray] = None,
) -> ValueFunction:
    operator = bellman_operator(mdp, policy, reward)
    start = np.zeros(mdp.num_states) if v0 is None else v0
    return fixed_point(operator, start, mdp.gamma, tol)


def solve_value_exact(
    mdp: TabularMdp, policy: Policy, reward: np.ndarray
) -> ValueFunction:
    """v = (I - gamma P^pi)^-1 R^pi, by dense solve up to DENSE_SOLVE_MAX_STATES"""
    reward = _check_reward(mdp, reward)
    if mdp.num_states > DENSE_SOLVE_MAX_STATES:
        return value_iteration(mdp, policy, reward, tol=1e-10)
    p_pi = policy_kernel(mdp, policy)
    matrix = np.eye(mdp.num_states) - mdp.gamma * p_pi
    values = _dense_solve(matrix, policy_reward(policy, reward), "value solve")
    return ValueFunction(values)


def q_from_value(mdp: TabularMdp, values: np.ndarray, reward: np.ndarray) -> np.ndarray:
    """Q(s, a) = R(s, a) + gamma sum_s' P(s'|s, a) v(s')"""
    reward = _check_reward(mdp, reward)
    return reward + mdp.gamma * np.einsum("sat,t->sa", mdp.kernel, values)


def q_function(mdp: TabularMdp, policy: Policy, reward: np.ndarray) -> QFunction:
    value = solve_value_exact(mdp, policy, reward)
    return QFunction(q_from_value(mdp, value.values, reward))


def occupancy_exact(mdp: TabularMdp, policy: Policy) -> OccupancyMeasure:
    """d^pi = mu^T (I - gamma P^pi)^-1, solved as a transposed linear system"""
    _check_policy(mdp, policy)
    if mdp.num_states > DENSE_SOLVE_MAX_STATES:
        result = occupancy_iterative(mdp, policy, n_max=100_000, tol=1e-10)
        return result.occupancy
    p_pi = policy_kernel(mdp, policy)
    matrix = (np.eye(mdp.num_states) - mdp.gamma * p_pi).T
    state = _dense_solve(matrix, mdp.mu, "occupancy solve")
    return OccupancyMeasure.from_state_mass(state, policy)


def occupancy_iterative(
    mdp: TabularMdp,
    policy: Policy,
    n_max: int = 10_000,
    tol: float = 1e-10,
    d0: Optional[np.ndarray] = None,
    reference: Optional[OccupancyMeasure] = None,
) -> OccupancyIteration:
    """
    Bootstrapped occupancy recursion d_{n+1} = mu + gamma (P^pi)^T d_n.

    The map is a gamma-contraction in L1, so the iteration stops once
    gamma / (1 - gamma) * ||d_{n+1} - d_n||_1 <= tol. When ``reference`` is
    given, ``errors[n]`` holds ||d_n - d*||_1 for every iterate including d_0.
    Running out of ``n_max`` returns the last iterate with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    p_pi_t = policy_kernel(mdp, policy).T
    d = np.array(mdp.mu if d0 is None else d0, dtype=float)
    factor = mdp.gamma / (1.0 - mdp.gamma)
    deltas: List[float] = []
    errors: List[float] = []
    if reference is not None:
        errors.append(float(np.abs(d - reference.state).sum()))

    converged = False
    for _ in range(n_max):
        d_next = mdp.mu + mdp.gamma * p_pi_t @ d
        delta = float(np.abs(d_next - d).sum())
        deltas.append(delta)
        d = d_next
        if reference is not None:
            errors.append(float(np.abs(d - reference.state).sum()))
        if factor * delta <= tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "occupancy iteration exhausted n_max=%d (last delta %.3e)",
            n_max,
            deltas[-1] if deltas else float("nan"),
        )
    return OccupancyIteration(
        occupancy=OccupancyMeasure.from_state_mass(d, policy),
        iterations=len(deltas),
        converged=converged,
        deltas=tuple(deltas),
        errors=tuple(errors),
    )


def return_of(mdp: TabularMdp, policy: Policy, reward: np.ndarray) -> float:
    """rho^pi_R = <mu, v^pi_R>"""
    value = solve_value_exact(mdp, policy, reward)
    return float(mdp.mu @ value.values)


def optimal_value_iteration(
    mdp: TabularMdp, reward: np.ndarray, tol: float = 1e-10
) -> OptimalSolution:
    """
    Iterate T*_R v = max_a (R + gamma P v) and return the greedy policy.

    Ties go to the lowest action index.
    """
    reward = _check_reward(mdp, reward)

    def operator(v: np.ndarray) -> np.ndarray:
        return np.max(q_from_value(mdp, v, reward), axis=1)

    value = fixed_point(operator, np.zeros(mdp.num_states), mdp.gamma, tol)
    greedy = np.argmax(q_from_value(mdp, value.values, reward), axis=1)
    return OptimalSolution(value, Policy.deterministic(greedy, mdp.num_actions))


PathLike = Union[str, Path]


def mdp_from_dict(data: Dict[str, Any]) -> TabularMdp:
    """Build and validate an MDP from its JSON document"""
    report = ValidationReport("mdp file")
    required = ("num_states", "num_actions", "gamma", "mu", "P", "R0")
    for key in required:
        if key not in data:
            report.add("format", key, "missing field")
    report.raise_for_issues()

    try:
        mdp = TabularMdp(
            kernel=np.asarray(data["P"], dtype=float),
            reward=np.asarray(data["R0"], dtype=float),
            gamma=float(data["gamma"]),
            mu=np.asarray(data["mu"], dtype=float),
        )
    except (TypeError, ValueError) as exc:
        report.add("format", "arrays", str(exc))
        raise MdpValidationError(report) from exc

    if (mdp.num_states, mdp.num_actions) != (data["num_states"], data["num_actions"]):
        report.add(
            "format",
            "num_states/num_actions",
            f"declared ({data['num_states']}, {data['num_actions']}) but arrays are "
            f"({mdp.num_states}, {mdp.num_actions})",
        )
        report.raise_for_issues()

    validate_mdp(mdp).raise_for_issues()
    return mdp


def _read_json(path: PathLike, subject: str) -> Any:
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        report = ValidationReport(subject)
        report.add("format", str(path), str(exc))
        raise MdpValidationError(report) from exc


def load_mdp(path: PathLike) -> TabularMdp:
    return mdp_from_dict(_read_json(path, "mdp file"))


def dump_mdp(mdp: TabularMdp, path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump(mdp.to_dict(), f)


def load_policy(path: PathLike, mdp: Optional[TabularMdp] = None) -> Policy:
    """Load ``{"probs": [[...]]}`` (or a bare table), validating against ``mdp``"""
    data = _read_json(path, "policy file")
    table = data.get("probs") if isinstance(data, dict) else data
    try:
        policy = Policy(np.asarray(table, dtype=float))
    except (TypeError, ValueError) as exc:
        report = ValidationReport("policy file")
        report.add("format", "probs", str(exc))
        raise MdpValidationError(report) from exc
    if mdp is not None:
        validate_policy(mdp, policy).raise_for_issues()
    return policy


def dump_policy(policy: Policy, path: PathLike) -> None:
    with open(path, "w") as f:
        json.dump(policy.to_dict(), f)
