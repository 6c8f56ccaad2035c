from typing import Any, Dict

from django.db import models
from django.utils import timezone


class Run(models.Model):
    """One CLI invocation, with the fully resolved config it ran with"""

    SUBCOMMANDS = [
        ("evaluate", "Evaluate"),
        ("worst-reward", "Worst Reward"),
        ("train", "Train"),
        ("sweep", "Sweep"),
        ("ac", "Actor-Critic"),
    ]
    STATUSES = [
        ("running", "Running"),
        ("finished", "Finished"),
        ("failed", "Failed"),
    ]

    subcommand = models.CharField(max_length=20, choices=SUBCOMMANDS)
    config = models.JSONField(default=dict)
    seed = models.BigIntegerField(null=True, blank=True)
    version = models.CharField(max_length=20)
    output_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=10, choices=STATUSES, default="running")
    exit_code = models.IntegerField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ["-created_at"]
        get_latest_by = "created_at"
        verbose_name = "Run"
        verbose_name_plural = "Runs"

    def __str__(self) -> str:
        return f"{self.subcommand} run #{self.pk} ({self.status})"

    def finish(self, details: str = "") -> None:
        self._close("finished", 0, details)

    def fail(self, exit_code: int, details: str) -> None:
        self._close("failed", exit_code, details)

    def _close(self, status: str, exit_code: int, details: str) -> None:
        if self.status != "running":
            raise ValueError(f"run #{self.pk} is already {self.status}")
        self.status = status
        self.exit_code = exit_code
        self.finished_at = timezone.now()
        self.save(update_fields=["status", "exit_code", "finished_at"])
        RunEvent.objects.create(run=self, event_type=status, details=details)

    def manifest(self) -> Dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "version": self.version,
        }


class SweepCell(models.Model):
    """One (S, alpha, method) cell of a sweep run"""

    run = models.ForeignKey(Run, on_delete=models.CASCADE, related_name="cells")
    alpha = models.FloatField()
    method = models.CharField(max_length=20)
    num_states = models.PositiveIntegerField()
    num_actions = models.PositiveIntegerField()
    seed = models.BigIntegerField()
    cvar = models.FloatField(null=True, blank=True)
    mean = models.FloatField(null=True, blank=True)
    error = models.TextField(blank=True)

    class Meta:
        ordering = ["num_states", "alpha", "method"]
        verbose_name = "Sweep Cell"
        verbose_name_plural = "Sweep Cells"
        constraints = [
            models.UniqueConstraint(
                fields=["run", "num_states", "alpha", "method"], name="unique_sweep_cell"
            ),
        ]

    def __str__(self) -> str:
        return f"S={self.num_states} alpha={self.alpha:g} {self.method}"

    @property
    def failed(self) -> bool:
        return bool(self.error)


class RunEvent(models.Model):
    """Lifecycle events of a run"""

    EVENT_TYPES = [
        ("started", "Started"),
        ("finished", "Finished"),
        ("failed", "Failed"),
    ]

    run = models.ForeignKey(Run, on_delete=models.CASCADE, related_name="events")
    event_type = models.CharField(max_length=10, choices=EVENT_TYPES)
    details = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["created_at", "pk"]
        get_latest_by = "created_at"
        verbose_name = "Run Event"
        verbose_name_plural = "Run Events"

    def __str__(self) -> str:
        return f"{self.get_event_type_display()} ({self.run})"
