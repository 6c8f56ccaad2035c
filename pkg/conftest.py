import json
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pytest

from robust.experiments import sample_random_mdp
from robust.mdp import Policy, TabularMdp, dump_mdp, dump_policy


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test inputs"""
    return np.random.default_rng(12345)


@pytest.fixture
def make_mdp() -> Callable[..., TabularMdp]:
    """Factory for seeded random MDPs"""

    def make(seed: int = 0, num_states: int = 4, num_actions: int = 3, gamma: float = 0.9) -> TabularMdp:
        return sample_random_mdp(seed, num_states, num_actions, gamma)

    return make


@pytest.fixture
def make_policy() -> Callable[..., Policy]:
    """Factory for seeded random stochastic policies; ``mix`` blends in the uniform policy"""

    def make(mdp: TabularMdp, seed: int = 0, mix: float = 0.0) -> Policy:
        generator = np.random.default_rng(seed)
        probs = generator.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states)
        return Policy((1.0 - mix) * probs + mix / mdp.num_actions)

    return make


@pytest.fixture
def small_mdp(make_mdp: Callable[..., TabularMdp]) -> TabularMdp:
    """A 4-state 3-action MDP with gamma = 0.9"""
    return make_mdp(seed=7)


@pytest.fixture
def one_state_mdp() -> TabularMdp:
    """Single state, single action, gamma = 0.9, R0 = 1: every return is 10"""
    return TabularMdp(
        kernel=np.ones((1, 1, 1)),
        reward=np.ones((1, 1)),
        gamma=0.9,
        mu=np.ones(1),
    )


@pytest.fixture
def two_state_mdp() -> TabularMdp:
    """Fixed 2-state 2-action benchmark with gamma = 0.5"""
    kernel = np.array(
        [
            [[0.9, 0.1], [0.2, 0.8]],
            [[0.7, 0.3], [0.05, 0.95]],
        ]
    )
    reward = np.array([[1.0, 0.0], [0.5, 0.8]])
    return TabularMdp(kernel, reward, 0.5, np.array([0.5, 0.5]))


@pytest.fixture
def uniform_policy(small_mdp: TabularMdp) -> Policy:
    return Policy.uniform(small_mdp.num_states, small_mdp.num_actions)


@pytest.fixture
def mdp_file(tmp_path: Path, small_mdp: TabularMdp) -> Path:
    """small_mdp written as JSON"""
    path = tmp_path / "mdp.json"
    dump_mdp(small_mdp, path)
    return path


@pytest.fixture
def policy_file(tmp_path: Path, small_mdp: TabularMdp, make_policy: Callable[..., Policy]) -> Path:
    """A random policy for small_mdp written as JSON"""
    path = tmp_path / "policy.json"
    dump_policy(make_policy(small_mdp, seed=3), path)
    return path


@pytest.fixture
def write_json(tmp_path: Path) -> Callable[[str, Any], Path]:
    """Write an object to tmp_path/<name> and return the path"""

    def write(name: str, data: Any) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write
