"""
Tabular online actor-critic for coupled reward-robust MDPs.

The agent only sees sampled transitions, trajectory starts and nominal
rewards. It keeps three estimates updated on two timescales: a softmax actor
theta (slow), a robust Q-table omega and a state occupancy estimate zeta
(both fast). The critic's TD target penalizes the sampled reward with the
closed-form worst-case penalty evaluated at the current occupancy estimate.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np

from .exceptions import NumericalError
from .gradient import softmax_policy
from .mdp import OccupancyMeasure, Policy, TabularMdp
from .training import TrainRecord, TrainTrace
from .uncertainty import UncertaintySpec, penalty_from_occupancy, robust_return

logger = logging.getLogger(__name__)

OCCUPANCY_ESTIMATORS = ("bootstrap", "frequency")


class Transitions(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    # start states drawn for the chains that restarted after this step
    starts: np.ndarray


class MdpSimulator:
    """
    Batch of independent on-policy chains over a tabular MDP.

    After every transition a chain restarts from mu with probability
    1 - gamma, so its long-run state visitation is (1 - gamma) d^pi.
    """

    def __init__(self, mdp: TabularMdp, batch_size: int, rng: np.random.Generator) -> None:
        self.mdp = mdp
        self.batch_size = batch_size
        self.rng = rng
        self._kernel_cdf = np.cumsum(mdp.kernel, axis=2)
        self._mu_cdf = np.cumsum(mdp.mu)
        self.states = self._draw_starts(batch_size)

    def reset(self) -> np.ndarray:
        """Restart every chain from mu"""
        self.states = self._draw_starts(self.batch_size)
        return self.states

    def _draw_starts(self, n: int) -> np.ndarray:
        u = self.rng.random(n)
        return np.minimum(np.searchsorted(self._mu_cdf, u, side="right"), self.mdp.num_states - 1)

    def step(self, policy: Policy) -> Transitions:
        """One transition per chain, r being the nominal reward"""
        s = self.states
        action_cdf = np.cumsum(policy.probs[s], axis=1)
        a = np.minimum(
            (self.rng.random(s.size)[:, None] >= action_cdf).sum(axis=1),
            self.mdp.num_actions - 1,
        )
        next_cdf = self._kernel_cdf[s, a]
        s_next = np.minimum(
            (self.rng.random(s.size)[:, None] >= next_cdf).sum(axis=1),
            self.mdp.num_states - 1,
        )
        r = self.mdp.reward[s, a]

        restart = self.rng.random(s.size) >= self.mdp.gamma
        fresh = self._draw_starts(s.size)
        self.states = np.where(restart, fresh, s_next)
        return Transitions(s, a, r, s_next, fresh[restart])


@dataclass(frozen=True)
class ActorCriticConfig:
    batch_size: int = 64
    c_fast: float = 1.0
    c_slow: float = 0.5
    fast_exponent: float = 0.4
    slow_exponent: float = 0.5
    occupancy_estimator: str = "bootstrap"
    freeze_actor: bool = False
    record_every: int = 100
    # |omega| beyond this multiple of the reward scale counts as divergence
    divergence_factor: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.c_fast <= 0 or self.c_slow <= 0:
            raise ValueError("step-size constants must be > 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.occupancy_estimator not in OCCUPANCY_ESTIMATORS:
            raise ValueError(f"unknown occupancy estimator {self.occupancy_estimator!r}")

    def fast_rate(self, t: int) -> float:
        return min(1.0, self.c_fast / (1.0 + t) ** self.fast_exponent)

    def slow_rate(self, t: int) -> float:
        return self.c_slow / (1.0 + t) ** self.slow_exponent

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ActorCriticState:
    """Mutable learner state, confined to one run"""

    theta: np.ndarray
    omega: np.ndarray
    zeta: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, mdp: TabularMdp) -> "ActorCriticState":
        """Uniform policy, zero critic, occupancy estimate at mu"""
        shape = (mdp.num_states, mdp.num_actions)
        return cls(np.zeros(shape), np.zeros(shape), np.array(mdp.mu, dtype=float))

    def policy(self) -> Policy:
        return softmax_policy(self.theta)

    def occupancy(self) -> OccupancyMeasure:
        return OccupancyMeasure.from_state_mass(self.zeta, self.policy())


@dataclass(frozen=True)
class ActorCriticResult:
    policy: Policy
    state: ActorCriticState
    trace: TrainTrace


def _batch_mean(values: np.ndarray, index: np.ndarray, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-entry mean of ``values`` grouped by flat ``index``, and the visit mask"""
    counts = np.bincount(index, minlength=size)
    sums = np.bincount(index, weights=values, minlength=size)
    visited = counts > 0
    means = np.zeros(size)
    means[visited] = sums[visited] / counts[visited]
    return means, visited


def bootstrap_occupancy_target(zeta: np.ndarray, batch: Transitions, gamma: float) -> np.ndarray:
    """
    One-batch estimate of mu + gamma P_pi^T zeta.

    Each sampled transition s -> s' carries zeta(s) / n(s) of mass into s',
    n(s) being the visits to s in the batch. Restarts happen with probability
    1 - gamma, so the start counts scaled by 1 / (N (1 - gamma)) estimate mu
    without bias. Mass of states missing from the batch is not carried.
    """
    num_states = zeta.size
    n = batch.states.size
    visits = np.bincount(batch.states, minlength=num_states)
    flow = np.bincount(
        batch.next_states, weights=zeta[batch.states] / visits[batch.states], minlength=num_states
    )
    starts = np.bincount(batch.starts, minlength=num_states) / (n * (1.0 - gamma))
    return starts + gamma * flow


def frequency_occupancy_target(batch: Transitions, num_states: int, gamma: float) -> np.ndarray:
    """Visit frequency over 1 - gamma; the restarting chains visit at (1 - gamma) d^pi"""
    return np.bincount(batch.states, minlength=num_states) / (batch.states.size * (1.0 - gamma))


def tabular_actor_critic(
    mdp: TabularMdp,
    spec: UncertaintySpec,
    total_steps: int,
    config: ActorCriticConfig = ActorCriticConfig(),
    state: Optional[ActorCriticState] = None,
) -> ActorCriticResult:
    """
    Run ``total_steps`` batches of the online robust actor-critic.

    Per batch of transitions (s, a, r, s') and restart draws:
      zeta  <- zeta + eta_f (starts / (N (1 - gamma)) + gamma flow_zeta - zeta)
      delta  = r - penalty_zeta(s, a) + gamma <pi(s'), omega(s')> - omega(s, a)
      omega <- omega + eta_f mean(delta) on visited pairs
      theta <- theta + eta_s mean(A_omega(s, a) (e_a - pi_s)) on visited states
    The model itself is only used to score the trace.
    """
    if state is None:
        state = ActorCriticState.initial(mdp)
    rng = np.random.default_rng(config.seed)
    sim = MdpSimulator(mdp, config.batch_size, rng)
    num_states, num_actions = mdp.num_states, mdp.num_actions
    pairs = num_states * num_actions
    reward_scale = float(np.max(np.abs(mdp.reward), initial=0.0)) + spec.max_radius
    divergence_limit = config.divergence_factor * max(reward_scale, 1.0) / (1.0 - mdp.gamma)
    trace = TrainTrace()

    for step in range(1, total_steps + 1):
        t = state.t
        eta_fast = config.fast_rate(t)
        eta_slow = config.slow_rate(t)
        policy = state.policy()
        batch = sim.step(policy)
        s, a, r, s_next = batch.states, batch.actions, batch.rewards, batch.next_states
        n = s.size

        if config.occupancy_estimator == "bootstrap":
            target = bootstrap_occupancy_target(state.zeta, batch, mdp.gamma)
        else:
            target = frequency_occupancy_target(batch, num_states, mdp.gamma)
        state.zeta += eta_fast * (target - state.zeta)

        penalty, _ = penalty_from_occupancy(state.occupancy(), policy, spec)
        next_value = np.sum(policy.probs[s_next] * state.omega[s_next], axis=1)
        delta = r - penalty[s, a] + mdp.gamma * next_value - state.omega[s, a]
        flat = s * num_actions + a
        mean_delta, visited = _batch_mean(delta, flat, pairs)
        state.omega += eta_fast * mean_delta.reshape(num_states, num_actions)

        actor_step = 0.0
        if not config.freeze_actor:
            q = state.omega[s]
            advantage = state.omega[s, a] - np.sum(policy.probs[s] * q, axis=1)
            score = -policy.probs[s] * advantage[:, None]
            score[np.arange(n), a] += advantage
            update = np.zeros((num_states, num_actions))
            for col in range(num_actions):
                update[:, col], _ = _batch_mean(score[:, col], s, num_states)
            state.theta += eta_slow * update
            actor_step = eta_slow * float(np.max(np.abs(update)))

        state.t += 1
        if not np.all(np.isfinite(state.omega)) or np.max(np.abs(state.omega)) > divergence_limit:
            raise NumericalError(
                f"critic diverged at step {state.t}: max |omega| = "
                f"{np.max(np.abs(state.omega)):.3e} (limit {divergence_limit:.3e}, "
                f"fast rate {eta_fast:.3e})"
            )

        if state.t % config.record_every == 0 or step == total_steps:
            value = robust_return(mdp, state.policy(), spec).robust_return
            trace.records.append(
                TrainRecord(
                    iteration=state.t,
                    robust_return=value,
                    grad_norm=actor_step / eta_slow if eta_slow > 0 else 0.0,
                    step_size=eta_slow,
                    update_norm=actor_step,
                    gradient_mapping=float(np.abs(mean_delta[visited]).max(initial=0.0)),
                )
            )
            logger.debug("actor-critic step %d: robust return %.6f", state.t, value)

    logger.info("actor-critic finished after %d batches", state.t)
    return ActorCriticResult(state.policy(), state, trace)


def actor_critic_checkpoint(
    result: ActorCriticResult, spec: UncertaintySpec, config: ActorCriticConfig
) -> Dict[str, Any]:
    return {
        "parametrization": "softmax",
        "theta": result.state.theta.tolist(),
        "omega": result.state.omega.tolist(),
        "zeta": result.state.zeta.tolist(),
        "steps": result.state.t,
        "policy": result.policy.probs.tolist(),
        "spec": spec.to_dict(),
        "config": config.to_dict(),
        "seed": config.seed,
    }
