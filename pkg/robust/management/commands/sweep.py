from pathlib import Path
from typing import Any, Dict

from django.db import transaction

from robust.experiments import export_results, run_alpha_sweep
from robust.forms import SweepConfigForm
from robust.models import Run, SweepCell

from ._base import RunCommand


class Command(RunCommand):
    help = "Alpha sweep of coupled, s-rect and nominal training scored by CVaR"

    subcommand = "sweep"
    form_class = SweepConfigForm
    flag_targets = {"alpha": "alpha_grid", "p": "p", "flavor": None, "seed": "seed"}
    accepts_jobs = True

    def flag_value(self, flag: str, value: Any) -> Any:
        # a single --alpha runs a one-point grid
        return [value] if flag == "alpha" else value

    def execute_run(self, form: Any, out: Path, run: Run, options: Dict[str, Any]) -> str:
        result = run_alpha_sweep(form.to_config(), jobs=options.get("jobs") or 1)
        export_results(result, out / "results.csv", "csv")
        export_results(result, out / "results.json", "json")

        with transaction.atomic():
            SweepCell.objects.bulk_create(
                SweepCell(
                    run=run,
                    alpha=cell.alpha,
                    method=cell.method,
                    num_states=cell.num_states,
                    num_actions=cell.num_actions,
                    seed=cell.seed,
                    cvar=cell.cvar,
                    mean=cell.mean,
                    error=cell.error,
                )
                for cell in result.cells
            )

        failed = sum(1 for cell in result.cells if cell.error)
        return f"{len(result.cells)} sweep cells, {failed} failed; results in {out}"
