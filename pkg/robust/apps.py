from django.apps import AppConfig
from django.conf import settings


class RobustConfig(AppConfig):
    name = "robust"
    verbose_name = "Reward-robust MDP toolkit"

    def ready(self):
        from . import mdp, signals  # noqa: F401

        mdp.DENSE_SOLVE_MAX_STATES = settings.RRMDP_DENSE_SOLVE_MAX_STATES
