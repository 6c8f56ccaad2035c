"""
Tabular robustness study: seeded random MDPs, correlated Gaussian reward
perturbations, CVaR evaluation and alpha sweeps comparing coupled,
s-rectangular and nominal training.
"""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .exceptions import RobustMdpError
from .mdp import Policy, TabularMdp, occupancy_exact, validate_mdp
from .training import PgConfig, train_projected_pg
from .uncertainty import Flavor, UncertaintySpec

logger = logging.getLogger(__name__)

METHODS = ("coupled", "s-rect", "nominal")
CSV_COLUMNS = ("alpha", "method", "S", "A", "seed", "cvar", "mean")
PSD_TOL = 1e-10


def derive_seed(root: int, *keys: int) -> int:
    """Child seed of ``root`` for the given spawn path"""
    sequence = np.random.SeedSequence(entropy=root, spawn_key=tuple(keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def sample_random_mdp(seed: int, num_states: int, num_actions: int, gamma: float) -> TabularMdp:
    """Uniform(0, 1) kernel rows, rewards and initial weights, normalized"""
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be >= 1")
    rng = np.random.default_rng(seed)
    kernel = rng.uniform(size=(num_states, num_actions, num_states))
    kernel /= kernel.sum(axis=2, keepdims=True)
    reward = rng.uniform(size=(num_states, num_actions))
    mu = rng.uniform(size=num_states)
    mu /= mu.sum()
    mdp = TabularMdp(kernel, reward, gamma, mu)
    validate_mdp(mdp).raise_for_issues()
    return mdp


def sample_psd_covariance(seed: int, dim: int, sigma2: float) -> np.ndarray:
    """sigma2 M M^T / max diag(M M^T) with M ~ Uniform(-1, 1)"""
    if dim < 1 or sigma2 <= 0:
        raise ValueError("dim must be >= 1 and sigma2 > 0")
    rng = np.random.default_rng(seed)
    m = rng.uniform(-1.0, 1.0, size=(dim, dim))
    gram = m @ m.T
    gram = 0.5 * (gram + gram.T)
    return sigma2 * gram / np.max(np.diag(gram))


@dataclass(frozen=True)
class GaussianRewardModel:
    nominal_reward: np.ndarray
    covariance: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        dim = np.size(self.nominal_reward)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (dim, dim):
            raise ValueError(f"covariance shape {cov.shape} != ({dim}, {dim})")
        if np.max(np.abs(cov - cov.T), initial=0.0) > PSD_TOL:
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min(initial=0.0) < -PSD_TOL:
            raise ValueError("covariance is not positive semi-definite")

    def factor(self) -> np.ndarray:
        """L with L L^T = Sigma, by Cholesky or clipped eigendecomposition"""
        cov = np.asarray(self.covariance, dtype=float)
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            eigenvalues, eigenvectors = np.linalg.eigh(cov)
            return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def sample_perturbed_rewards(model: GaussianRewardModel, n: int) -> np.ndarray:
    """n i.i.d. draws R ~ N(R0, Sigma), shape (n, S, A)"""
    if n < 1:
        raise ValueError("n must be >= 1")
    nominal = np.asarray(model.nominal_reward, dtype=float)
    rng = np.random.default_rng(model.seed)
    z = rng.standard_normal((n, nominal.size))
    return nominal + (z @ model.factor().T).reshape((n,) + nominal.shape)


@dataclass(frozen=True)
class CvarResult:
    level: float
    cvar: float
    mean: float
    n_samples: int
    returns: Optional[np.ndarray] = None


def cvar_of(returns: np.ndarray, level: float) -> float:
    """Mean of the ceil(level n) smallest returns; ties keep sample order"""
    if not 0.0 < level <= 1.0:
        raise ValueError("CVaR level must lie in (0, 1]")
    returns = np.asarray(returns, dtype=float)
    if returns.size == 0:
        raise ValueError("no returns to evaluate")
    k = max(1, math.ceil(level * returns.size - 1e-9))
    ordered = np.sort(returns, kind="stable")
    return float(ordered[:k].mean())


def evaluate_cvar(
    mdp: TabularMdp,
    policy: Policy,
    rewards: np.ndarray,
    level: float = 0.05,
    keep_returns: bool = False,
) -> CvarResult:
    """Returns <d_sa, R_i> for each sampled reward from a single occupancy solve"""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 3 or rewards.shape[0] == 0:
        raise ValueError("expected a non-empty (n, S, A) batch of rewards")
    occupancy = occupancy_exact(mdp, policy)
    returns = rewards.reshape(rewards.shape[0], -1) @ occupancy.state_action.ravel()
    return CvarResult(
        level=level,
        cvar=cvar_of(returns, level),
        mean=float(returns.mean()),
        n_samples=int(returns.size),
        returns=returns if keep_returns else None,
    )


@dataclass(frozen=True)
class SweepConfig:
    seed: int = 1
    state_sizes: Tuple[int, ...] = (5, 10, 15)
    num_actions: int = 5
    gamma: float = 0.99
    p: float = 2.0
    alpha_grid: Tuple[float, ...] = (0.0, 0.01, 0.05, 0.1, 0.5, 1.0)
    n_samples: int = 1000
    cvar_level: float = 0.05
    sigma2: float = 0.1
    methods: Tuple[str, ...] = METHODS
    pg: PgConfig = PgConfig(max_iters=300)

    def __post_init__(self) -> None:
        grid = np.asarray(self.alpha_grid, dtype=float)
        if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
            raise ValueError("alpha grid must be non-empty, >= 0 and strictly increasing")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if not self.state_sizes or min(self.state_sizes) < 1 or self.num_actions < 1:
            raise ValueError("state sizes and num_actions must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["state_sizes"] = list(self.state_sizes)
        data["alpha_grid"] = list(self.alpha_grid)
        data["methods"] = list(self.methods)
        return data


@dataclass(frozen=True)
class CellResult:
    alpha: float
    method: str
    num_states: int
    num_actions: int
    seed: int
    cvar: Optional[float]
    mean: Optional[float]
    robust_return: Optional[float] = None
    policy: Optional[List[List[float]]] = None
    error: str = ""

    def csv_row(self) -> List[Any]:
        return [self.alpha, self.method, self.num_states, self.num_actions, self.seed, self.cvar, self.mean]


@dataclass
class SweepResult:
    alpha_grid: List[float]
    cells: List[CellResult] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def cell(self, alpha: float, method: str, num_states: int) -> CellResult:
        for c in self.cells:
            if c.alpha == alpha and c.method == method and c.num_states == num_states:
                return c
        raise KeyError((alpha, method, num_states))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha_grid": list(self.alpha_grid),
            "cells": [asdict(c) for c in self.cells],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SweepResult":
        return cls(
            alpha_grid=list(data["alpha_grid"]),
            cells=[CellResult(**c) for c in data["cells"]],
            metadata=dict(data.get("metadata", {})),
        )


def method_spec(method: str, alpha: float, p: float, num_states: int, num_actions: int) -> UncertaintySpec:
    if method == "coupled":
        return UncertaintySpec(alpha, p, Flavor.COUPLED)
    if method == "s-rect":
        return UncertaintySpec.matched(Flavor.S_RECT, alpha, p, num_states, num_actions)
    if method == "nominal":
        return UncertaintySpec(0.0, p, Flavor.COUPLED)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class _CellTask:
    index: int
    alpha: float
    method: str
    seed: int
    mdp: TabularMdp
    rewards: np.ndarray
    p: float
    cvar_level: float
    pg: PgConfig


def _run_cell(task: _CellTask) -> CellResult:
    mdp = task.mdp
    spec = method_spec(task.method, task.alpha, task.p, mdp.num_states, mdp.num_actions)
    base = dict(
        alpha=task.alpha,
        method=task.method,
        num_states=mdp.num_states,
        num_actions=mdp.num_actions,
        seed=task.seed,
    )
    try:
        result = train_projected_pg(mdp, spec, replace(task.pg, seed=task.seed))
        evaluation = evaluate_cvar(mdp, result.policy, task.rewards, task.cvar_level)
    except (RobustMdpError, ValueError, ArithmeticError) as exc:
        logger.error("sweep cell %d (%s, alpha=%g) failed: %s", task.index, task.method, task.alpha, exc)
        return CellResult(cvar=None, mean=None, error=str(exc), **base)
    logger.info(
        "cell S=%d alpha=%g %s: CVaR %.6f mean %.6f",
        mdp.num_states,
        task.alpha,
        task.method,
        evaluation.cvar,
        evaluation.mean,
    )
    return CellResult(
        cvar=evaluation.cvar,
        mean=evaluation.mean,
        robust_return=result.robust_return,
        policy=result.policy.probs.tolist(),
        **base,
    )


def _tasks(config: SweepConfig) -> List[_CellTask]:
    tasks: List[_CellTask] = []
    for s_index, num_states in enumerate(config.state_sizes):
        mdp = sample_random_mdp(config.seed, num_states, config.num_actions, config.gamma)
        covariance = sample_psd_covariance(
            derive_seed(config.seed, s_index, 0), num_states * config.num_actions, config.sigma2
        )
        model = GaussianRewardModel(mdp.reward, covariance, derive_seed(config.seed, s_index, 1))
        # every method in this block is scored on the same draws
        rewards = sample_perturbed_rewards(model, config.n_samples)
        for alpha in config.alpha_grid:
            for method in config.methods:
                index = len(tasks)
                tasks.append(
                    _CellTask(
                        index=index,
                        alpha=float(alpha),
                        method=method,
                        seed=derive_seed(config.seed, index),
                        mdp=mdp,
                        rewards=rewards,
                        p=config.p,
                        cvar_level=config.cvar_level,
                        pg=config.pg,
                    )
                )
    return tasks


def run_alpha_sweep(config: SweepConfig, jobs: int = 1) -> SweepResult:
    """Train and CVaR-score every (S, alpha, method) cell; failures are recorded, not raised"""
    tasks = _tasks(config)
    logger.info("running %d sweep cells with %d job(s)", len(tasks), jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(task) for task in tasks]
    return SweepResult(
        alpha_grid=[float(a) for a in config.alpha_grid],
        cells=cells,
        metadata=config.to_dict(),
    )


def export_results(result: SweepResult, path: Union[str, Path], fmt: str = "csv") -> Path:
    """Write CSV (one row per cell) or the full JSON document"""
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(CSV_COLUMNS)
                for cell in result.cells:
                    writer.writerow(cell.csv_row())
        elif fmt == "json":
            with open(path, "w") as f:
                json.dump(result.to_dict(), f, indent=2)
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise OSError(f"could not write sweep results to {path}: {exc}") from exc
    return path


def load_results(path: Union[str, Path]) -> SweepResult:
    with open(path) as f:
        return SweepResult.from_dict(json.load(f))
