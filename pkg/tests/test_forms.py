"""
Test cases for run config forms
"""

import numpy as np
import pytest

from robust.forms import (
    ActorCriticConfigForm,
    EvaluateRunForm,
    PgConfigForm,
    SweepConfigForm,
    TrainRunForm,
    UncertaintySpecForm,
    error_report,
    merge_defaults,
)
from robust.uncertainty import Flavor


class TestMergeDefaults:
    """Test deep merging of config dicts"""

    def test_nested_merge(self):
        defaults = {"a": 1, "pg": {"max_iters": 10, "grad_tol": 1e-6}}
        merged = merge_defaults(defaults, {"pg": {"max_iters": 5}, "b": 2})
        assert merged == {"a": 1, "b": 2, "pg": {"max_iters": 5, "grad_tol": 1e-6}}
        assert defaults["pg"]["max_iters"] == 10


class TestUncertaintySpecForm:
    """Test UncertaintySpecForm"""

    def test_defaults_fill_missing_keys(self):
        form = UncertaintySpecForm(data={})
        assert form.is_valid()
        assert form.cleaned_data["alpha"] == 0.0
        assert form.cleaned_data["p"] == 2.0
        assert form.cleaned_data["flavor"] == "coupled"

    def test_p_accepts_inf(self):
        form = UncertaintySpecForm(data={"alpha": 0.1, "p": "inf"})
        assert form.is_valid()
        assert np.isinf(form.cleaned_data["p"])
        assert form.resolved()["p"] == "inf"

    @pytest.mark.parametrize("p", [0.5, "nan", "two"])
    def test_p_rejected(self, p):
        form = UncertaintySpecForm(data={"p": p})
        assert not form.is_valid()
        assert "p" in form.errors

    def test_negative_alpha_rejected(self):
        form = UncertaintySpecForm(data={"alpha": -0.1})
        assert not form.is_valid()
        assert "alpha" in form.errors

    def test_unknown_key_rejected(self):
        form = UncertaintySpecForm(data={"alpha": 0.1, "radius": 0.2})
        assert not form.is_valid()
        assert "radius" in error_report(form)
        assert error_report(form).startswith("config: Unknown keys")

    def test_rectangular_spec_matches_alpha(self):
        form = UncertaintySpecForm(data={"alpha": 0.3, "flavor": "s-rect"})
        assert form.is_valid()
        spec = form.to_spec(4, 3)
        assert spec.flavor is Flavor.S_RECT
        np.testing.assert_array_equal(spec.state_radii, [0.3] * 4)

    def test_explicit_tables(self):
        form = UncertaintySpecForm(
            data={"alpha": 0.3, "flavor": "sa-rect", "pair_radii": [[0.1, 0.2], [0.3, 0.4]], "weights": [[1, 2], [3, 4]]}
        )
        assert form.is_valid(), form.errors
        spec = form.to_spec(2, 2)
        np.testing.assert_array_equal(spec.pair_radii, [[0.1, 0.2], [0.3, 0.4]])
        assert form.resolved()["weights"] == [[1.0, 2.0], [3.0, 4.0]]

    def test_table_rank_checked(self):
        form = UncertaintySpecForm(data={"weights": [1.0, 2.0]})
        assert not form.is_valid()
        assert "weights" in form.errors


class TestPgConfigForm:
    """Test PgConfigForm"""

    def test_defaults_build_config(self):
        form = PgConfigForm(data={"max_iters": 7})
        assert form.is_valid()
        config = form.to_config(seed=3)
        assert config.max_iters == 7
        assert config.seed == 3
        assert config.learning_rate is None

    def test_config_errors_become_form_errors(self):
        form = PgConfigForm(data={"armijo_c1": 2.0})
        assert not form.is_valid()
        assert "Armijo" in error_report(form)

    def test_unknown_step_rule(self):
        form = PgConfigForm(data={"step_rule": "adam"})
        assert not form.is_valid()
        assert "step_rule" in form.errors


class TestActorCriticConfigForm:
    def test_total_steps_not_passed_to_config(self):
        form = ActorCriticConfigForm(data={"total_steps": 50, "batch_size": 4})
        assert form.is_valid()
        config = form.to_config(seed=2)
        assert config.batch_size == 4
        assert config.seed == 2
        assert not config.freeze_actor


class TestSweepConfigForm:
    """Test SweepConfigForm"""

    def test_defaults(self):
        form = SweepConfigForm(data={})
        assert form.is_valid(), form.errors
        config = form.to_config()
        assert config.state_sizes == (5, 10, 15)
        assert config.pg.max_iters == 300
        assert config.pg.seed == 1

    def test_comma_separated_lists(self):
        form = SweepConfigForm(data={"S_list": "3, 4", "alpha_grid": "0,0.5", "methods": "coupled,nominal"})
        assert form.is_valid(), form.errors
        config = form.to_config()
        assert config.state_sizes == (3, 4)
        assert config.alpha_grid == (0.0, 0.5)
        assert config.methods == ("coupled", "nominal")

    def test_nested_pg_error(self):
        form = SweepConfigForm(data={"pg": {"max_iters": 0}})
        assert not form.is_valid()
        assert "pg" in form.errors
        assert "max_iters" in error_report(form)

    def test_nested_unknown_key(self):
        form = SweepConfigForm(data={"pg": {"momentum": 0.9}})
        assert not form.is_valid()
        assert "momentum" in error_report(form)

    def test_unknown_method(self):
        form = SweepConfigForm(data={"methods": ["coupled", "bayesian"]})
        assert not form.is_valid()
        assert "methods" in form.errors

    @pytest.mark.parametrize(
        "overrides, field",
        [
            ({"gamma": 1.0}, "gamma"),
            ({"cvar_level": 0.0}, "cvar_level"),
            ({"sigma2": 0.0}, "sigma2"),
            ({"n_samples": 0}, "n_samples"),
        ],
    )
    def test_field_ranges(self, overrides, field):
        form = SweepConfigForm(data=overrides)
        assert not form.is_valid()
        assert field in form.errors

    def test_decreasing_grid_rejected(self):
        form = SweepConfigForm(data={"alpha_grid": [0.5, 0.1]})
        assert not form.is_valid()
        assert "strictly increasing" in error_report(form)

    def test_resolved_is_json_safe(self):
        form = SweepConfigForm(data={"p": "inf"})
        assert form.is_valid()
        resolved = form.resolved()
        assert resolved["p"] == "inf"
        assert resolved["pg"]["max_iters"] == 300
        assert resolved["S_list"] == [5, 10, 15]


class TestRunForms:
    """Test the per-subcommand run forms"""

    def test_evaluate_requires_files(self):
        form = EvaluateRunForm(data={})
        assert not form.is_valid()
        assert "mdp" in form.errors
        assert "policy" in form.errors

    def test_train_defaults(self):
        form = TrainRunForm(data={"mdp": "mdp.json"})
        assert form.is_valid(), form.errors
        resolved = form.resolved()
        assert resolved["seed"] == 0
        assert resolved["spec"] == {
            "alpha": 0.0,
            "p": 2.0,
            "flavor": "coupled",
            "weights": None,
            "state_radii": None,
            "pair_radii": None,
        }
        assert resolved["pg"]["max_iters"] == 1000
        assert resolved["reference_return"] is None

    def test_train_nested_overrides(self):
        form = TrainRunForm(data={"mdp": "mdp.json", "spec": {"alpha": 0.2}, "pg": {"max_iters": 5}})
        assert form.is_valid()
        assert form.cleaned_data["spec"].cleaned_data["alpha"] == 0.2
        assert form.cleaned_data["pg"].to_config().max_iters == 5
