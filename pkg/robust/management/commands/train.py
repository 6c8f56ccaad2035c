from pathlib import Path
from typing import Any, Dict

from django.core.management.base import CommandParser

from robust.forms import TrainRunForm
from robust.mdp import load_mdp
from robust.models import Run
from robust.training import save_checkpoint, train_projected_pg

from ._base import RunCommand


class Command(RunCommand):
    help = "Robust policy gradient training; writes checkpoint.json and trace.csv"

    subcommand = "train"
    form_class = TrainRunForm

    def add_run_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--mdp", help="MDP JSON file")

    def file_overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {"mdp": options.get("mdp")}

    def execute_run(self, form: Any, out: Path, run: Run, options: Dict[str, Any]) -> str:
        data = form.cleaned_data
        mdp = load_mdp(data["mdp"])
        spec = data["spec"].to_spec(mdp.num_states, mdp.num_actions)
        config = data["pg"].to_config(seed=data["seed"])

        result = train_projected_pg(mdp, spec, config, reference_return=data.get("reference_return"))
        save_checkpoint(result, out / "checkpoint.json", seed=data["seed"])
        result.trace.to_csv(out / "trace.csv")

        status = result.trace.status
        return (
            f"robust return {result.robust_return:.10f} after "
            f"{len(result.trace.records)} iterations ({status})"
        )
