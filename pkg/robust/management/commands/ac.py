from pathlib import Path
from typing import Any, Dict

from django.core.management.base import CommandParser

from robust.actor_critic import actor_critic_checkpoint, tabular_actor_critic
from robust.forms import ActorCriticRunForm
from robust.mdp import load_mdp
from robust.models import Run

from ._base import RunCommand, render


class Command(RunCommand):
    help = "Online robust actor-critic on a simulated MDP; writes checkpoint.json and trace.csv"

    subcommand = "ac"
    form_class = ActorCriticRunForm

    def add_run_arguments(self, parser: CommandParser) -> None:
        parser.add_argument("--mdp", help="MDP JSON file")
        parser.add_argument("--steps", type=int, help="number of sampled batches")

    def file_overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {"mdp": options.get("mdp"), "ac.total_steps": options.get("steps")}

    def execute_run(self, form: Any, out: Path, run: Run, options: Dict[str, Any]) -> str:
        data = form.cleaned_data
        mdp = load_mdp(data["mdp"])
        spec = data["spec"].to_spec(mdp.num_states, mdp.num_actions)
        ac_form = data["ac"]
        config = ac_form.to_config(seed=data["seed"])

        result = tabular_actor_critic(mdp, spec, ac_form.cleaned_data["total_steps"], config)
        (out / "checkpoint.json").write_text(render(actor_critic_checkpoint(result, spec, config)))
        result.trace.to_csv(out / "trace.csv")

        final = result.trace.records[-1].robust_return
        return f"robust return {final:.10f} after {result.state.t} batches"
