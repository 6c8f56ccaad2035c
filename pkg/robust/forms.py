"""
Validation of JSON run configs.

Each form is bound to a plain dict (a config file merged over the
``RRMDP_DEFAULTS`` settings and the command-line overrides). Keys the form
does not know are rejected, nested objects are validated by nested forms,
and ``form.errors`` is the validation report.
"""

import copy
import math
from typing import Any, ClassVar, Dict, List, Optional, Type

import numpy as np
from django import forms
from django.conf import settings
from django.core.exceptions import NON_FIELD_ERRORS

from .actor_critic import OCCUPANCY_ESTIMATORS, ActorCriticConfig
from .experiments import METHODS, SweepConfig
from .training import PARAMETRIZATIONS, STEP_RULES, PgConfig
from .uncertainty import Flavor, UncertaintySpec


def merge_defaults(defaults: Dict[str, Any], data: Dict[str, Any]) -> Dict[str, Any]:
    """``data`` over ``defaults``, merging nested objects key by key"""
    merged = copy.deepcopy(defaults)
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_defaults(merged[key], value)
        else:
            merged[key] = value
    return merged


class NormOrderField(forms.Field):
    """A norm order p >= 1; accepts numbers and "inf"."""

    def to_python(self, value: Any) -> Optional[float]:
        if value in self.empty_values:
            return None
        try:
            p = float(str(value).strip())
        except ValueError:
            raise forms.ValidationError("Enter a number or 'inf'.", code="invalid")
        if math.isnan(p) or p < 1.0:
            raise forms.ValidationError("Norm order must be >= 1.", code="min_value")
        return p


class ListField(forms.Field):
    """A JSON list, or a comma-separated string, of ``item_type`` values"""

    def __init__(self, item_type: type = float, allowed: Optional[tuple] = None, **kwargs: Any) -> None:
        super().__init__(**kwargs)
        self.item_type = item_type
        self.allowed = allowed

    def to_python(self, value: Any) -> Optional[List[Any]]:
        if value in self.empty_values:
            return None
        if isinstance(value, str):
            value = [item.strip() for item in value.split(",") if item.strip()]
        if not isinstance(value, (list, tuple)):
            raise forms.ValidationError("Enter a list.", code="invalid")
        try:
            items = [self.item_type(item) for item in value]
        except (TypeError, ValueError):
            raise forms.ValidationError(
                f"Every item must be a {self.item_type.__name__}.", code="invalid"
            )
        if self.allowed is not None:
            unknown = [item for item in items if item not in self.allowed]
            if unknown:
                raise forms.ValidationError(
                    f"Unknown values {unknown}; allowed: {list(self.allowed)}.", code="invalid_choice"
                )
        if not items:
            raise forms.ValidationError("Enter at least one value.", code="required")
        return items


class ArrayField(forms.Field):
    """A numeric table of fixed rank, e.g. weights or rectangular radii"""

    def __init__(self, ndim: int, **kwargs: Any) -> None:
        kwargs.setdefault("required", False)
        super().__init__(**kwargs)
        self.ndim = ndim

    def to_python(self, value: Any) -> Optional[np.ndarray]:
        if value in self.empty_values:
            return None
        try:
            table = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise forms.ValidationError("Enter a numeric table.", code="invalid")
        if table.ndim != self.ndim:
            raise forms.ValidationError(f"Expected a {self.ndim}-d table.", code="invalid")
        if not np.all(np.isfinite(table)):
            raise forms.ValidationError("Table entries must be finite.", code="invalid")
        return table

    # ``value in self.empty_values`` is ambiguous for arrays
    def validate(self, value: Any) -> None:
        if value is None and self.required:
            raise forms.ValidationError(self.error_messages["required"], code="required")

    def run_validators(self, value: Any) -> None:
        if value is None:
            return
        for validator in self.validators:
            validator(value)


class NestedFormField(forms.Field):
    """A nested JSON object validated by its own form; cleans to the bound form"""

    def __init__(self, form_class: Type["ConfigForm"], **kwargs: Any) -> None:
        kwargs.setdefault("required", False)
        super().__init__(**kwargs)
        self.form_class = form_class

    def clean(self, value: Any) -> "ConfigForm":
        if value is None or value == "":
            value = {}
        if not isinstance(value, dict):
            raise forms.ValidationError("Expected an object.", code="invalid")
        form = self.form_class(data=value)
        if not form.is_valid():
            raise forms.ValidationError(
                [f"{field}: {' '.join(errors)}" for field, errors in form.errors.items()],
                code="invalid",
            )
        return form


class ConfigForm(forms.Form):
    """Base for config forms: defaults from settings, unknown keys rejected"""

    defaults_key: ClassVar[Optional[str]] = None
    base_defaults: ClassVar[Dict[str, Any]] = {}

    def __init__(self, data: Optional[Dict[str, Any]] = None, **kwargs: Any) -> None:
        defaults = dict(self.base_defaults)
        if self.defaults_key is not None:
            defaults.update(settings.RRMDP_DEFAULTS.get(self.defaults_key, {}))
        self.provided = dict(data or {})
        super().__init__(data=merge_defaults(defaults, self.provided), **kwargs)

    def clean(self) -> Dict[str, Any]:
        cleaned = super().clean() or {}
        unknown = sorted(set(self.provided) - set(self.fields))
        if unknown:
            raise forms.ValidationError(
                "Unknown keys: %(keys)s", code="unknown", params={"keys": ", ".join(unknown)}
            )
        return cleaned

    def resolved(self) -> Dict[str, Any]:
        """JSON-safe fully resolved config"""
        out: Dict[str, Any] = {}
        for name in self.fields:
            value = self.cleaned_data.get(name)
            if isinstance(value, ConfigForm):
                value = value.resolved()
            elif isinstance(value, np.ndarray):
                value = value.tolist()
            elif isinstance(value, float) and math.isinf(value):
                value = "inf"
            out[name] = value
        return out

    def _build(self, factory: Any, **kwargs: Any) -> Any:
        try:
            return factory(**kwargs)
        except ValueError as exc:
            raise forms.ValidationError(str(exc), code="invalid")


class UncertaintySpecForm(ConfigForm):
    defaults_key = "spec"

    alpha = forms.FloatField(min_value=0.0)
    p = NormOrderField()
    flavor = forms.ChoiceField(choices=[(f.value, f.value) for f in Flavor])
    weights = ArrayField(ndim=2)
    state_radii = ArrayField(ndim=1)
    pair_radii = ArrayField(ndim=2)

    def to_spec(self, num_states: int, num_actions: int) -> UncertaintySpec:
        """Build the spec; rectangular radii default to alpha everywhere"""
        data = self.cleaned_data
        flavor = Flavor(data["flavor"])
        radii_given = data.get("state_radii") is not None or data.get("pair_radii") is not None
        if flavor is not Flavor.COUPLED and not radii_given:
            return UncertaintySpec.matched(
                flavor, data["alpha"], data["p"], num_states, num_actions, data.get("weights")
            )
        return UncertaintySpec(
            radius=data["alpha"],
            p=data["p"],
            flavor=flavor,
            weights=data.get("weights"),
            state_radii=data.get("state_radii"),
            pair_radii=data.get("pair_radii"),
        )


class PgConfigForm(ConfigForm):
    defaults_key = "pg"

    parametrization = forms.ChoiceField(choices=[(p, p) for p in PARAMETRIZATIONS])
    temperature = forms.FloatField()
    step_rule = forms.ChoiceField(choices=[(r, r) for r in STEP_RULES])
    armijo_c1 = forms.FloatField()
    backtrack = forms.FloatField()
    learning_rate = forms.FloatField(required=False)
    max_iters = forms.IntegerField(min_value=1)
    grad_tol = forms.FloatField()
    smoothness_exponent = forms.ChoiceField(choices=[("q", "q"), ("p", "p")])

    def clean(self) -> Dict[str, Any]:
        cleaned = super().clean()
        if not self.errors:
            self.to_config()
        return cleaned

    def to_config(self, seed: int = 0) -> PgConfig:
        return self._build(PgConfig, seed=seed, **self.cleaned_data)


class ActorCriticConfigForm(ConfigForm):
    defaults_key = "ac"

    total_steps = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=1)
    c_fast = forms.FloatField()
    c_slow = forms.FloatField()
    fast_exponent = forms.FloatField(min_value=0.0)
    slow_exponent = forms.FloatField(min_value=0.0)
    occupancy_estimator = forms.ChoiceField(choices=[(e, e) for e in OCCUPANCY_ESTIMATORS])
    record_every = forms.IntegerField(min_value=1)
    freeze_actor = forms.BooleanField(required=False)

    def clean(self) -> Dict[str, Any]:
        cleaned = super().clean()
        if not self.errors:
            self.to_config()
        return cleaned

    def to_config(self, seed: int = 0) -> ActorCriticConfig:
        kwargs = {k: v for k, v in self.cleaned_data.items() if k != "total_steps"}
        return self._build(ActorCriticConfig, seed=seed, **kwargs)


class SweepConfigForm(ConfigForm):
    defaults_key = "sweep"

    seed = forms.IntegerField(min_value=0)
    S_list = ListField(item_type=int)
    A = forms.IntegerField(min_value=1)
    gamma = forms.FloatField(min_value=0.0)
    p = NormOrderField()
    alpha_grid = ListField(item_type=float)
    n_samples = forms.IntegerField(min_value=1)
    cvar_level = forms.FloatField()
    sigma2 = forms.FloatField()
    methods = ListField(item_type=str, allowed=METHODS)
    pg = NestedFormField(PgConfigForm)

    def clean_gamma(self) -> float:
        gamma = self.cleaned_data["gamma"]
        if gamma >= 1.0:
            raise forms.ValidationError("gamma must be < 1.", code="max_value")
        return gamma

    def clean_cvar_level(self) -> float:
        level = self.cleaned_data["cvar_level"]
        if not 0.0 < level <= 1.0:
            raise forms.ValidationError("CVaR level must lie in (0, 1].", code="invalid")
        return level

    def clean_sigma2(self) -> float:
        sigma2 = self.cleaned_data["sigma2"]
        if sigma2 <= 0:
            raise forms.ValidationError("sigma2 must be > 0.", code="min_value")
        return sigma2

    def clean(self) -> Dict[str, Any]:
        cleaned = super().clean()
        if not self.errors:
            self.to_config()
        return cleaned

    def to_config(self) -> SweepConfig:
        data = self.cleaned_data
        return self._build(
            SweepConfig,
            seed=data["seed"],
            state_sizes=tuple(data["S_list"]),
            num_actions=data["A"],
            gamma=data["gamma"],
            p=data["p"],
            alpha_grid=tuple(data["alpha_grid"]),
            n_samples=data["n_samples"],
            cvar_level=data["cvar_level"],
            sigma2=data["sigma2"],
            methods=tuple(data["methods"]),
            pg=data["pg"].to_config(seed=data["seed"]),
        )


class EvaluateRunForm(ConfigForm):
    """evaluate / worst-reward: an MDP file, a policy file and a spec"""

    mdp = forms.CharField()
    policy = forms.CharField()
    spec = NestedFormField(UncertaintySpecForm)


class TrainRunForm(ConfigForm):
    base_defaults = {"seed": 0}

    mdp = forms.CharField()
    seed = forms.IntegerField(min_value=0)
    spec = NestedFormField(UncertaintySpecForm)
    pg = NestedFormField(PgConfigForm)
    reference_return = forms.FloatField(required=False)


class ActorCriticRunForm(ConfigForm):
    base_defaults = {"seed": 0}

    mdp = forms.CharField()
    seed = forms.IntegerField(min_value=0)
    spec = NestedFormField(UncertaintySpecForm)
    ac = NestedFormField(ActorCriticConfigForm)


def error_report(form: forms.Form) -> str:
    """Flatten ``form.errors`` into one line per problem"""
    lines = []
    for field, errors in form.errors.items():
        location = "config" if field == NON_FIELD_ERRORS else field
        lines.extend(f"{location}: {error}" for error in errors)
    return "\n".join(lines)
