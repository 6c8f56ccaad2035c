"""
Model-based robust policy gradient: projected ascent on the simplex and
softmax ascent, with Armijo or fixed steps and convergence monitoring.
"""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .exceptions import NumericalError, SpecError
from .gradient import (
    project_rows,
    robust_policy_gradient,
    robust_policy_gradient_softmax,
    smoothness_constant,
    softmax_policy,
)
from .mdp import Policy, TabularMdp
from .uncertainty import UncertaintySpec, WorstCaseReport, robust_return

logger = logging.getLogger(__name__)

PARAMETRIZATIONS = ("direct", "softmax")
STEP_RULES = ("armijo", "fixed")
TRACE_COLUMNS = ("iter", "robust_return", "grad_norm", "step_size")


@dataclass(frozen=True)
class PgConfig:
    parametrization: str = "direct"
    temperature: float = 1.0
    step_rule: str = "armijo"
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    step_growth: float = 2.0
    max_step: float = 1e6
    min_step: float = 1e-14
    # None means 1/beta from the smoothness constant
    learning_rate: Optional[float] = None
    max_iters: int = 1000
    grad_tol: float = 1e-6
    smoothness_exponent: str = "q"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"unknown parametrization {self.parametrization!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.temperature <= 0:
            raise ValueError("softmax temperature must be > 0")
        if not (0 < self.armijo_c1 < 1 and 0 < self.backtrack < 1):
            raise ValueError("Armijo constants must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.initial_step <= 0 or self.grad_tol <= 0:
            raise ValueError("initial_step and grad_tol must be > 0")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TrainRecord:
    iteration: int
    robust_return: float
    grad_norm: float
    step_size: float
    update_norm: float
    gradient_mapping: float
    gap: Optional[float] = None
    bound: Optional[float] = None


@dataclass
class TrainTrace:
    records: List[TrainRecord] = field(default_factory=list)
    converged: bool = False
    hit_max_iters: bool = False
    # line search found no ascent step above min_step
    stalled: bool = False

    @property
    def status(self) -> str:
        if self.converged:
            return "converged"
        if self.stalled:
            return "stalled"
        return "hit max_iters" if self.hit_max_iters else "running"

    @property
    def returns(self) -> np.ndarray:
        return np.array([r.robust_return for r in self.records])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [r.iteration, repr(r.robust_return), repr(r.grad_norm), repr(r.step_size)]
                )


@dataclass(frozen=True)
class TrainResult:
    policy: Policy
    trace: TrainTrace
    spec: UncertaintySpec
    config: PgConfig
    theta: Optional[np.ndarray] = None

    @property
    def robust_return(self) -> float:
        return self.trace.records[-1].robust_return if self.trace.records else float("nan")


def _fixed_step(mdp: TabularMdp, spec: UncertaintySpec, config: PgConfig) -> float:
    if config.learning_rate is not None:
        return config.learning_rate
    if spec.p == 1.0 or np.isinf(spec.p):
        raise SpecError("fixed 1/beta steps need a finite p > 1")
    return 1.0 / smoothness_constant(mdp, spec, exponent=config.smoothness_exponent)


class _Monitor:
    """Suboptimality gap and its |S| beta (rho* - rho0) / k bound"""

    def __init__(
        self,
        mdp: TabularMdp,
        spec: UncertaintySpec,
        reference: Optional[float],
        initial: float,
        exponent: str,
    ) -> None:
        self.reference = reference
        self.scale: Optional[float] = None
        if reference is not None and 1.0 < spec.p < np.inf:
            beta = smoothness_constant(mdp, spec, exponent=exponent)
            self.scale = mdp.num_states * beta * (reference - initial)

    def __call__(self, k: int, value: float) -> Tuple[Optional[float], Optional[float]]:
        if self.reference is None:
            return None, None
        bound = None if self.scale is None else self.scale / k
        return self.reference - value, bound


def _armijo(
    objective: Callable[[np.ndarray], Tuple[float, Any]],
    project: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    value: float,
    grad: np.ndarray,
    step: float,
    config: PgConfig,
) -> Tuple[np.ndarray, float, Any, float, bool]:
    """Backtrack until f(x+) >= f(x) + c1 <grad, x+ - x>; returns (x+, f, aux, step, ok)"""
    while step >= config.min_step:
        candidate = project(x + step * grad)
        cand_value, aux = objective(candidate)
        if cand_value >= value + config.armijo_c1 * float(np.sum(grad * (candidate - x))):
            return candidate, cand_value, aux, step, True
        step *= config.backtrack
    return x, value, None, step, False


def _check_finite(value: float, iteration: int) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"robust return became non-finite at iteration {iteration}")


def train_projected_pg(
    mdp: TabularMdp,
    spec: UncertaintySpec,
    config: PgConfig = PgConfig(),
    initial_policy: Optional[Policy] = None,
    reference_return: Optional[float] = None,
) -> TrainResult:
    """
    pi_{k+1} = proj_Pi[pi_k + eta_k d rho / d pi].

    Stops once the gradient mapping ||pi - proj(pi + eta0 g)||_2 / eta0 at the
    reference step eta0 = ``config.initial_step`` drops to ``grad_tol``.
    """
    if config.parametrization == "softmax":
        return train_softmax_pg(mdp, spec, config, reference_return=reference_return)

    armijo = config.step_rule == "armijo"
    step = config.initial_step if armijo else _fixed_step(mdp, spec, config)

    def objective(probs: np.ndarray) -> Tuple[float, WorstCaseReport]:
        report = robust_return(mdp, Policy(probs), spec)
        return report.robust_return, report

    probs = np.array(
        Policy.uniform(mdp.num_states, mdp.num_actions).probs
        if initial_policy is None
        else initial_policy.probs
    )
    value, report = objective(probs)
    monitor = _Monitor(mdp, spec, reference_return, value, config.smoothness_exponent)
    trace = TrainTrace()

    for k in range(1, config.max_iters + 1):
        grad = robust_policy_gradient(mdp, Policy(probs), spec, report=report)
        ref_step = config.initial_step if armijo else step
        mapping = float(np.linalg.norm(probs - project_rows(probs + ref_step * grad))) / ref_step

        if armijo:
            trial = min(step * config.step_growth, config.max_step)
            new_probs, new_value, new_report, step, moved = _armijo(
                objective, project_rows, probs, value, grad, trial, config
            )
            if not moved:
                new_report = report
        else:
            new_probs = project_rows(probs + step * grad)
            new_value, new_report = objective(new_probs)
            moved = True

        _check_finite(new_value, k)
        update_norm = float(np.linalg.norm(new_probs - probs))
        probs, value, report = new_probs, new_value, new_report
        gap, bound = monitor(k, value)
        trace.records.append(
            TrainRecord(k, value, float(np.max(np.abs(grad))), step, update_norm, mapping, gap, bound)
        )
        logger.debug("iter %d: robust return %.10f, mapping %.3e, step %.3e", k, value, mapping, step)

        if mapping <= config.grad_tol:
            trace.converged = True
            break
        if not moved:
            trace.stalled = True
            logger.warning(
                "projected PG stalled at iteration %d: no Armijo step above %.1e, mapping %.3e > grad_tol %.1e",
                k,
                config.min_step,
                mapping,
                config.grad_tol,
            )
            break
    else:
        trace.hit_max_iters = True
        logger.warning("projected PG hit max_iters=%d", config.max_iters)

    logger.info("projected PG finished: robust return %.8f after %d iterations", value, len(trace.records))
    return TrainResult(Policy(probs), trace, spec, config)


def train_softmax_pg(
    mdp: TabularMdp,
    spec: UncertaintySpec,
    config: PgConfig = PgConfig(parametrization="softmax"),
    initial_theta: Optional[np.ndarray] = None,
    reference_return: Optional[float] = None,
) -> TrainResult:
    """Gradient ascent on softmax logits; stops when ||grad||_inf <= grad_tol"""
    armijo = config.step_rule == "armijo"
    step = config.initial_step if armijo else _fixed_step(mdp, spec, config)
    temperature = config.temperature

    def objective(theta: np.ndarray) -> Tuple[float, WorstCaseReport]:
        report = robust_return(mdp, softmax_policy(theta, temperature), spec)
        return report.robust_return, report

    theta = (
        np.zeros((mdp.num_states, mdp.num_actions))
        if initial_theta is None
        else np.array(initial_theta, dtype=float)
    )
    value, report = objective(theta)
    monitor = _Monitor(mdp, spec, reference_return, value, config.smoothness_exponent)
    trace = TrainTrace()

    for k in range(1, config.max_iters + 1):
        grad = robust_policy_gradient_softmax(mdp, theta, spec, temperature, report=report)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= config.grad_tol:
            trace.records.append(TrainRecord(k, value, grad_norm, 0.0, 0.0, grad_norm, *monitor(k, value)))
            trace.converged = True
            break

        if armijo:
            trial = min(step * config.step_growth, config.max_step)
            new_theta, new_value, new_report, step, moved = _armijo(
                objective, lambda x: x, theta, value, grad, trial, config
            )
            if not moved:
                new_report = report
        else:
            new_theta = theta + step * grad
            new_value, new_report = objective(new_theta)
            moved = True

        _check_finite(new_value, k)
        update_norm = float(np.linalg.norm(new_theta - theta))
        theta, value, report = new_theta, new_value, new_report
        trace.records.append(
            TrainRecord(k, value, grad_norm, step, update_norm, grad_norm, *monitor(k, value))
        )
        if not moved:
            trace.stalled = True
            logger.warning(
                "softmax PG stalled at iteration %d: no Armijo step above %.1e, grad %.3e > grad_tol %.1e",
                k,
                config.min_step,
                grad_norm,
                config.grad_tol,
            )
            break
    else:
        trace.hit_max_iters = True
        logger.warning("softmax PG hit max_iters=%d", config.max_iters)

    policy = softmax_policy(theta, temperature)
    logger.info("softmax PG finished: robust return %.8f", value)
    return TrainResult(policy, trace, spec, config, theta=theta)


def checkpoint(result: TrainResult, seed: Optional[int] = None) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "parametrization": result.config.parametrization,
        "policy": result.policy.probs.tolist(),
        "spec": result.spec.to_dict(),
        "config": result.config.to_dict(),
        "seed": result.config.seed if seed is None else seed,
        "robust_return": result.robust_return,
        "converged": result.trace.converged,
        "stalled": result.trace.stalled,
    }
    if result.theta is not None:
        data["theta"] = np.asarray(result.theta).tolist()
    return data


def save_checkpoint(result: TrainResult, path: Union[str, Path], seed: Optional[int] = None) -> None:
    with open(path, "w") as f:
        json.dump(checkpoint(result, seed), f, indent=2)


def load_checkpoint(path: Union[str, Path]) -> Tuple[Policy, UncertaintySpec, Dict[str, Any]]:
    with open(path) as f:
        data = json.load(f)
    return Policy(np.asarray(data["policy"])), UncertaintySpec.from_dict(data["spec"]), data
