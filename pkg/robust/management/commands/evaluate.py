from pathlib import Path
from typing import Any, Dict

from robust.forms import EvaluateRunForm
from robust.models import Run
from robust.uncertainty import robust_return

from ._base import PolicyRunCommand, render


class Command(PolicyRunCommand):
    help = "Nominal return, robust return and regularizer value of a policy"

    subcommand = "evaluate"
    form_class = EvaluateRunForm
    flag_targets = {**PolicyRunCommand.flag_targets, "seed": None}

    def execute_run(self, form: Any, out: Path, run: Run, options: Dict[str, Any]) -> str:
        mdp, policy, spec = self.load_inputs(form)
        report = robust_return(mdp, policy, spec)

        penalty_path = out / "penalty.json"
        penalty_path.write_text(render(report.penalty.tolist()))
        text = render({**report.summary(), "penalty_path": str(penalty_path)})
        (out / "evaluation.json").write_text(text)
        return text
