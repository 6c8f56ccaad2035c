"""
Test cases for exact tabular MDP machinery
"""

import itertools
import json

import numpy as np
import pytest

from robust import mdp as mdp_module
from robust.exceptions import MdpValidationError, NumericalError
from robust.mdp import (
    SOLVE_COUNTER,
    Policy,
    TabularMdp,
    bellman_operator,
    dump_mdp,
    fixed_point,
    load_mdp,
    load_policy,
    mdp_from_dict,
    occupancy_exact,
    occupancy_iterative,
    optimal_value_iteration,
    policy_kernel,
    q_function,
    return_of,
    solve_value_exact,
    validate_mdp,
    validate_policy,
    value_iteration,
)


class TestTabularMdp:
    """Test the MDP and policy containers"""

    def test_arrays_are_read_only(self, small_mdp):
        """Test that stored arrays cannot be mutated in place"""
        with pytest.raises(ValueError):
            small_mdp.reward[0, 0] = 5.0
        with pytest.raises(ValueError):
            small_mdp.kernel[0, 0, 0] = 1.0

    def test_shape_mismatch_rejected(self):
        """Test that reward and mu shapes must agree with the kernel"""
        kernel = np.full((2, 2, 2), 0.5)
        with pytest.raises(ValueError):
            TabularMdp(kernel, np.zeros((3, 2)), 0.9, np.full(2, 0.5))
        with pytest.raises(ValueError):
            TabularMdp(kernel, np.zeros((2, 2)), 0.9, np.full(3, 1 / 3))

    def test_deterministic_policy(self):
        """Test one-hot policy construction"""
        policy = Policy.deterministic([1, 0, 2], 3)
        assert policy.shape == (3, 3)
        np.testing.assert_array_equal(policy.probs.argmax(axis=1), [1, 0, 2])
        np.testing.assert_allclose(policy.probs.sum(axis=1), 1.0)

    def test_with_reward_keeps_dynamics(self, small_mdp):
        """Test that swapping the reward keeps kernel, gamma and mu"""
        other = small_mdp.with_reward(np.zeros((4, 3)))
        np.testing.assert_array_equal(other.kernel, small_mdp.kernel)
        assert other.gamma == small_mdp.gamma
        assert not other.reward.any()


class TestValidateMdp:
    """Test MDP and policy validation reports"""

    def test_valid_mdp_passes(self, small_mdp):
        """Test that a sampled MDP validates cleanly"""
        report = validate_mdp(small_mdp)
        assert report.passed
        assert str(report) == "mdp: ok"

    def test_bad_row_sum_reported_with_location(self):
        """Test that a kernel row that does not sum to one is located"""
        kernel = np.full((2, 2, 2), 0.5)
        kernel[0, 1] = [0.5, 0.4]
        mdp = TabularMdp(kernel, np.zeros((2, 2)), 0.9, np.full(2, 0.5))
        report = validate_mdp(mdp)
        assert not report.passed
        assert [issue.rule for issue in report.issues] == ["kernel-row-sum"]
        assert report.issues[0].location == "(s=0, a=1)"

    def test_every_violation_listed(self):
        """Test that all invariant violations are reported together"""
        kernel = np.full((2, 1, 2), 0.5)
        kernel[1, 0] = [1.5, -0.5]
        mdp = TabularMdp(kernel, np.array([[np.nan], [0.0]]), 1.0, np.array([1.0, 0.0]))
        rules = {issue.rule for issue in validate_mdp(mdp).issues}
        assert rules == {"discount", "reward-finite", "kernel-nonnegative", "initial-positive"}

    def test_raise_for_issues(self):
        """Test that a failed report raises with the report attached"""
        mdp = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 1.5, np.ones(1))
        report = validate_mdp(mdp)
        with pytest.raises(MdpValidationError) as excinfo:
            report.raise_for_issues()
        assert excinfo.value.report is report
        assert "discount" in str(excinfo.value)

    def test_gamma_zero_is_valid(self):
        """Test that gamma = 0 is allowed"""
        mdp = TabularMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.0, np.ones(1))
        assert validate_mdp(mdp).passed

    def test_policy_validation(self, small_mdp):
        """Test policy shape and row-sum checks"""
        assert validate_policy(small_mdp, Policy.uniform(4, 3)).passed
        wrong_shape = validate_policy(small_mdp, Policy.uniform(3, 3))
        assert [issue.rule for issue in wrong_shape.issues] == ["policy-shape"]
        probs = np.full((4, 3), 1 / 3)
        probs[2] = [0.5, 0.5, 0.5]
        bad_row = validate_policy(small_mdp, Policy(probs))
        assert [issue.location for issue in bad_row.issues] == ["pi[2]"]


class TestPolicyEvaluation:
    """Test exact and iterative policy evaluation"""

    def test_policy_kernel_is_stochastic(self, small_mdp, make_policy):
        """Test that P^pi rows sum to one"""
        p_pi = policy_kernel(small_mdp, make_policy(small_mdp))
        np.testing.assert_allclose(p_pi.sum(axis=1), 1.0, atol=1e-12)

    def test_one_state_value(self, one_state_mdp):
        """Test that the 1x1 fixture has value 1 / (1 - gamma) = 10"""
        policy = Policy.uniform(1, 1)
        value = solve_value_exact(one_state_mdp, policy, one_state_mdp.reward)
        np.testing.assert_allclose(value.values, [10.0], rtol=1e-12)
        assert return_of(one_state_mdp, policy, one_state_mdp.reward) == pytest.approx(10.0)

    def test_iteration_matches_exact(self, make_mdp, make_policy):
        """Test value iteration against the dense solve"""
        for seed in range(10):
            mdp = make_mdp(seed=seed, num_states=6, num_actions=3, gamma=0.95)
            policy = make_policy(mdp, seed=seed)
            exact = solve_value_exact(mdp, policy, mdp.reward)
            iterated = value_iteration(mdp, policy, mdp.reward, tol=1e-10)
            assert np.max(np.abs(exact.values - iterated.values)) <= 1e-9

    def test_residuals_contract_by_gamma(self, make_mdp, make_policy):
        """Test that successive residuals shrink by at least gamma"""
        mdp = make_mdp(seed=3, num_states=5, num_actions=2, gamma=0.9)
        result = value_iteration(mdp, make_policy(mdp), mdp.reward)
        residuals = np.array(result.residuals)
        assert result.iterations == residuals.size > 10
        assert np.all(residuals[1:] <= mdp.gamma * residuals[:-1] + 1e-12)

    def test_warm_start(self, small_mdp, uniform_policy):
        """Test that starting at the solution stops immediately"""
        exact = solve_value_exact(small_mdp, uniform_policy, small_mdp.reward)
        warm = value_iteration(small_mdp, uniform_policy, small_mdp.reward, v0=exact.values)
        assert warm.iterations == 1

    def test_reward_shape_checked(self, small_mdp, uniform_policy):
        """Test that a reward of the wrong shape is rejected"""
        with pytest.raises(ValueError):
            solve_value_exact(small_mdp, uniform_policy, np.zeros((3, 3)))
        with pytest.raises(ValueError):
            bellman_operator(small_mdp, uniform_policy, np.zeros(4))

    def test_q_function_averages_to_value(self, small_mdp, make_policy):
        """Test that sum_a pi(a|s) Q(s, a) = v(s)"""
        policy = make_policy(small_mdp, seed=5)
        q = q_function(small_mdp, policy, small_mdp.reward)
        v = solve_value_exact(small_mdp, policy, small_mdp.reward)
        np.testing.assert_allclose(np.sum(policy.probs * q.values, axis=1), v.values, atol=1e-10)

    def test_fixed_point_max_iters(self):
        """Test that a capped fixed-point iteration stops early"""
        result = fixed_point(lambda v: 0.99 * v + 1.0, np.zeros(1), 0.99, 1e-12, max_iters=5)
        assert result.iterations == 5

    def test_fixed_point_rejects_bad_tol(self):
        """Test that tol must be positive"""
        with pytest.raises(ValueError):
            fixed_point(lambda v: v, np.zeros(1), 0.5, 0.0)

    def test_fixed_point_non_finite(self):
        """Test that a blow-up is reported as a numerical failure"""
        with pytest.raises(NumericalError):
            fixed_point(lambda v: v * 1e300 + 1e300, np.ones(1), 0.5, 1e-10)


class TestOccupancy:
    """Test occupancy measures"""

    def test_total_mass(self, make_mdp, make_policy):
        """Test that d sums to 1 / (1 - gamma)"""
        mdp = make_mdp(seed=11, gamma=0.8)
        occupancy = occupancy_exact(mdp, make_policy(mdp))
        assert occupancy.total_mass == pytest.approx(5.0, rel=1e-12)
        assert np.all(occupancy.state > 0)

    def test_return_is_occupancy_inner_product(self, make_mdp, make_policy):
        """Test rho = <d, R> against the value-based return"""
        for seed in range(10):
            mdp = make_mdp(seed=seed, num_states=5, num_actions=4)
            policy = make_policy(mdp, seed=seed)
            occupancy = occupancy_exact(mdp, policy)
            expected = return_of(mdp, policy, mdp.reward)
            assert float(np.sum(occupancy.state_action * mdp.reward)) == pytest.approx(expected, abs=1e-9)

    def test_return_matches_rollouts(self, small_mdp, make_policy):
        """Test rho against the mean discounted reward of simulated episodes"""
        policy = make_policy(small_mdp, seed=4)
        rng = np.random.default_rng(2024)
        episodes, horizon = 50000, 200
        action_cdf = np.cumsum(policy.probs, axis=1)
        kernel_cdf = np.cumsum(small_mdp.kernel, axis=2)
        last_state, last_action = small_mdp.num_states - 1, small_mdp.num_actions - 1

        s = np.minimum(np.searchsorted(np.cumsum(small_mdp.mu), rng.random(episodes), side="right"), last_state)
        total = np.zeros(episodes)
        discount = 1.0
        for _ in range(horizon):
            a = np.minimum((rng.random(episodes)[:, None] >= action_cdf[s]).sum(axis=1), last_action)
            total += discount * small_mdp.reward[s, a]
            discount *= small_mdp.gamma
            s = np.minimum((rng.random(episodes)[:, None] >= kernel_cdf[s, a]).sum(axis=1), last_state)

        assert float(total.mean()) == pytest.approx(return_of(small_mdp, policy, small_mdp.reward), abs=0.05)

    def test_iterative_contracts_in_l1(self, make_mdp, make_policy):
        """Test ||d_n - d*||_1 <= gamma^n ||d_0 - d*||_1 along the recursion"""
        for seed in range(50):
            mdp = make_mdp(seed=seed, num_states=5, num_actions=3, gamma=0.9)
            policy = make_policy(mdp, seed=seed)
            reference = occupancy_exact(mdp, policy)
            result = occupancy_iterative(mdp, policy, n_max=200, tol=1e-14, reference=reference)
            errors = np.array(result.errors)
            bound = mdp.gamma ** np.arange(errors.size) * errors[0]
            assert np.all(errors <= bound + 1e-12)

    def test_iterative_matches_exact(self, small_mdp, uniform_policy):
        """Test the converged recursion against the linear solve"""
        result = occupancy_iterative(small_mdp, uniform_policy, tol=1e-11)
        exact = occupancy_exact(small_mdp, uniform_policy)
        assert result.converged
        assert np.abs(result.occupancy.state - exact.state).sum() <= 1e-10

    def test_iterative_from_zero_start(self, small_mdp, uniform_policy):
        """Test that any starting point converges to the same measure"""
        result = occupancy_iterative(small_mdp, uniform_policy, tol=1e-11, d0=np.zeros(4))
        exact = occupancy_exact(small_mdp, uniform_policy)
        np.testing.assert_allclose(result.occupancy.state, exact.state, atol=1e-10)

    def test_iterative_not_converged(self, small_mdp, uniform_policy):
        """Test that exhausting n_max returns the last iterate with a flag"""
        result = occupancy_iterative(small_mdp, uniform_policy, n_max=3, tol=1e-12)
        assert not result.converged
        assert result.iterations == 3
        assert len(result.deltas) == 3

    def test_solve_counter(self, small_mdp, uniform_policy):
        """Test that each dense solve is counted once"""
        SOLVE_COUNTER.reset()
        occupancy_exact(small_mdp, uniform_policy)
        solve_value_exact(small_mdp, uniform_policy, small_mdp.reward)
        assert SOLVE_COUNTER.count == 2

    def test_large_mdp_falls_back_to_iteration(self, monkeypatch, small_mdp, uniform_policy):
        """Test that above the dense threshold no linear solve is made"""
        exact = occupancy_exact(small_mdp, uniform_policy)
        monkeypatch.setattr(mdp_module, "DENSE_SOLVE_MAX_STATES", 2)
        SOLVE_COUNTER.reset()
        iterated = occupancy_exact(small_mdp, uniform_policy)
        assert SOLVE_COUNTER.count == 0
        np.testing.assert_allclose(iterated.state, exact.state, atol=1e-9)


class TestOptimalValueIteration:
    """Test the Bellman optimality solver"""

    def test_matches_best_deterministic_policy(self, make_mdp):
        """Test that the greedy policy is optimal among all deterministic policies"""
        mdp = make_mdp(seed=21, num_states=3, num_actions=2, gamma=0.9)
        solution = optimal_value_iteration(mdp, mdp.reward, tol=1e-11)
        best = max(
            return_of(mdp, Policy.deterministic(actions, 2), mdp.reward)
            for actions in itertools.product(range(2), repeat=3)
        )
        assert float(mdp.mu @ solution.value.values) == pytest.approx(best, abs=1e-8)
        assert return_of(mdp, solution.policy, mdp.reward) == pytest.approx(best, abs=1e-8)

    def test_ties_go_to_lowest_action(self):
        """Test deterministic tie-breaking"""
        kernel = np.full((2, 3, 2), 0.5)
        mdp = TabularMdp(kernel, np.ones((2, 3)), 0.9, np.full(2, 0.5))
        solution = optimal_value_iteration(mdp, mdp.reward)
        np.testing.assert_array_equal(solution.policy.probs.argmax(axis=1), [0, 0])


class TestSerialization:
    """Test MDP and policy files"""

    def test_mdp_round_trip(self, tmp_path, small_mdp):
        """Test dump then load preserves every array"""
        path = tmp_path / "mdp.json"
        dump_mdp(small_mdp, path)
        loaded = load_mdp(path)
        np.testing.assert_array_equal(loaded.kernel, small_mdp.kernel)
        np.testing.assert_array_equal(loaded.reward, small_mdp.reward)
        np.testing.assert_array_equal(loaded.mu, small_mdp.mu)
        assert loaded.gamma == small_mdp.gamma

    def test_missing_field(self, small_mdp):
        """Test that a missing field is a format issue"""
        data = small_mdp.to_dict()
        del data["R0"]
        with pytest.raises(MdpValidationError) as excinfo:
            mdp_from_dict(data)
        assert excinfo.value.report.issues[0].location == "R0"

    def test_declared_size_mismatch(self, small_mdp):
        """Test that declared sizes must match the arrays"""
        data = small_mdp.to_dict()
        data["num_states"] = 5
        with pytest.raises(MdpValidationError):
            mdp_from_dict(data)

    def test_invalid_mdp_file_rejected(self, small_mdp):
        """Test that loading validates the MDP"""
        data = small_mdp.to_dict()
        data["gamma"] = 1.0
        with pytest.raises(MdpValidationError) as excinfo:
            mdp_from_dict(data)
        assert excinfo.value.report.issues[0].rule == "discount"

    def test_unreadable_file(self, tmp_path):
        """Test that malformed JSON becomes a validation error"""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(MdpValidationError):
            load_mdp(path)
        with pytest.raises(MdpValidationError):
            load_mdp(tmp_path / "missing.json")

    def test_policy_bare_table(self, tmp_path, small_mdp):
        """Test that a policy file may hold just the table"""
        path = tmp_path / "policy.json"
        path.write_text(json.dumps(np.full((4, 3), 1 / 3).tolist()))
        policy = load_policy(path, small_mdp)
        np.testing.assert_allclose(policy.probs, 1 / 3)

    def test_policy_shape_checked_against_mdp(self, tmp_path, small_mdp):
        """Test that a policy for another MDP is rejected"""
        path = tmp_path / "policy.json"
        path.write_text(json.dumps({"probs": [[1.0, 0.0]]}))
        with pytest.raises(MdpValidationError):
            load_policy(path, small_mdp)
