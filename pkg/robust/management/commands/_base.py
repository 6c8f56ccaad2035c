"""
Shared plumbing for the run commands: config resolution, run registry,
manifest and exit codes.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Type

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from robust import __version__
from robust.exceptions import MdpValidationError, NumericalError, SpecError
from robust.forms import ConfigForm, error_report
from robust.mdp import Policy, TabularMdp, load_mdp, load_policy
from robust.models import Run
from robust.uncertainty import UncertaintySpec

logger = logging.getLogger("robust")

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

VERBOSITY_LEVELS = {0: logging.WARNING, 2: logging.DEBUG, 3: logging.DEBUG}


def render(data: Any) -> str:
    """The JSON text every command writes and prints"""
    return json.dumps(data, indent=2)


def set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    """data["a"]["b"] = value for key "a.b", creating objects on the way"""
    *parents, leaf = key.split(".")
    node = data
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise CommandError(f"--set {key}: {part!r} is not an object", returncode=EXIT_VALIDATION)
        node = child
    node[leaf] = value


def parse_assignment(text: str) -> tuple[str, Any]:
    """KEY=VALUE with VALUE parsed as JSON when possible"""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise CommandError(f"--set expects KEY=VALUE, got {text!r}", returncode=EXIT_VALIDATION)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


class RunCommand(BaseCommand):
    """
    A subcommand run: resolve config, register a Run, write the manifest,
    call the library and map its errors to exit codes.
    """

    subcommand: str = ""
    form_class: Type[ConfigForm]
    # where --alpha, --p, --flavor and --seed land in the config
    flag_targets: Dict[str, Optional[str]] = {
        "alpha": "spec.alpha",
        "p": "spec.p",
        "flavor": "spec.flavor",
        "seed": "seed",
    }
    # only sweep cells run in parallel
    accepts_jobs = False

    def add_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--config", help="JSON config file")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--out", help="output directory (default: RRMDP_OUTPUT_DIR/<subcommand>/<run id>)")
        parser.add_argument("--alpha", type=float)
        parser.add_argument("--p", help="norm order, a number >= 1 or 'inf'")
        parser.add_argument("--flavor", choices=["coupled", "s-rect", "sa-rect"])
        parser.add_argument("--jobs", type=int, help="worker processes for sweep cells")
        parser.add_argument(
            "--set",
            dest="assignments",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config value, e.g. pg.max_iters=50",
        )
        self.add_run_arguments(parser)

    def add_run_arguments(self, parser: CommandParser) -> None:
        pass

    def file_overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        """Config keys set directly by subcommand-specific flags"""
        return {}

    def load_config(self, path: Optional[str]) -> Dict[str, Any]:
        if not path:
            return {}
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"could not read config {path}: {exc}", returncode=EXIT_VALIDATION)
        if not isinstance(data, dict):
            raise CommandError(f"config {path} must hold a JSON object", returncode=EXIT_VALIDATION)
        return data

    def resolve(self, options: Dict[str, Any]) -> ConfigForm:
        """Config file, then flags, then --set assignments, validated by the form"""
        jobs = options.get("jobs")
        if jobs is not None:
            if not self.accepts_jobs:
                raise CommandError(f"--jobs does not apply to {self.subcommand}", returncode=EXIT_VALIDATION)
            if jobs < 1:
                raise CommandError("--jobs must be >= 1", returncode=EXIT_VALIDATION)
        data = self.load_config(options.get("config"))
        for key, value in self.file_overrides(options).items():
            if value is not None:
                set_dotted(data, key, value)
        for flag, target in self.flag_targets.items():
            value = options.get(flag)
            if value is None:
                continue
            if target is None:
                raise CommandError(f"--{flag} does not apply to {self.subcommand}", returncode=EXIT_VALIDATION)
            set_dotted(data, target, self.flag_value(flag, value))
        assignments: List[str] = options.get("assignments") or []
        for text in assignments:
            set_dotted(data, *parse_assignment(text))

        form = self.form_class(data=data)
        if not form.is_valid():
            raise CommandError(f"invalid config:\n{error_report(form)}", returncode=EXIT_VALIDATION)
        return form

    def flag_value(self, flag: str, value: Any) -> Any:
        return value

    def output_dir(self, options: Dict[str, Any], run: Run) -> Path:
        if options.get("out"):
            return Path(options["out"])
        return Path(settings.RRMDP_OUTPUT_DIR) / self.subcommand / str(run.pk)

    def handle(self, *args: Any, **options: Any) -> None:
        level = VERBOSITY_LEVELS.get(options.get("verbosity", 1))
        if level is not None:
            logger.setLevel(level)

        form = self.resolve(options)
        config = form.resolved()
        run = Run.objects.create(
            subcommand=self.subcommand,
            config=config,
            seed=config.get("seed"),
            version=__version__,
            output_dir=str(options.get("out") or ""),
        )
        out = self.output_dir(options, run)
        try:
            out.mkdir(parents=True, exist_ok=True)
            run.output_dir = str(out)
            run.save(update_fields=["output_dir"])
            (out / "manifest.json").write_text(render(run.manifest()))
            summary = self.execute_run(form, out, run, options)
        except (MdpValidationError, SpecError, ValueError) as exc:
            run.fail(EXIT_VALIDATION, str(exc))
            raise CommandError(str(exc), returncode=EXIT_VALIDATION) from exc
        except (NumericalError, ArithmeticError, OSError) as exc:
            run.fail(EXIT_RUNTIME, str(exc))
            raise CommandError(str(exc), returncode=EXIT_RUNTIME) from exc

        run.finish(summary)
        logger.info("%s run #%d finished, outputs in %s", self.subcommand, run.pk, out)
        self.stdout.write(summary)

    def execute_run(self, form: Any, out: Path, run: Run, options: Dict[str, Any]) -> str:
        """Do the work and return the text printed on success"""
        raise NotImplementedError


class PolicyRunCommand(RunCommand):
    """Commands that score one policy file against one MDP file"""

    def add_run_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--mdp", help="MDP JSON file")
        parser.add_argument("--policy", help="policy JSON file")

    def file_overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {"mdp": options.get("mdp"), "policy": options.get("policy")}

    def load_inputs(self, form: Any) -> tuple[TabularMdp, Policy, UncertaintySpec]:
        data = form.cleaned_data
        mdp = load_mdp(data["mdp"])
        policy = load_policy(data["policy"], mdp)
        spec = data["spec"].to_spec(mdp.num_states, mdp.num_actions)
        return mdp, policy, spec
