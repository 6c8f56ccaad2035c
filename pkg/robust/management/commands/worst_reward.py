from pathlib import Path
from typing import Any, Dict

from robust.forms import EvaluateRunForm
from robust.models import Run
from robust.uncertainty import robust_return

from ._base import PolicyRunCommand, render


class Command(PolicyRunCommand):
    help = "Full worst-case reward report of a policy"

    subcommand = "worst-reward"
    form_class = EvaluateRunForm
    flag_targets = {**PolicyRunCommand.flag_targets, "seed": None}

    def execute_run(self, form: Any, out: Path, run: Run, options: Dict[str, Any]) -> str:
        mdp, policy, spec = self.load_inputs(form)
        text = render(robust_return(mdp, policy, spec).to_dict())
        (out / "worst_reward.json").write_text(text)
        return text
