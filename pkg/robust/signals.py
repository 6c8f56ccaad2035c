from typing import Any

from django.db.models.signals import post_save
from django.dispatch import receiver

from .models import Run, RunEvent


@receiver(post_save, sender=Run)
def create_run_event_on_start(
    sender: type[Run], instance: Run, created: bool, **kwargs: Any
) -> None:
    """Record a started event when a run is registered"""
    if created:
        RunEvent.objects.create(
            run=instance,
            event_type="started",
            details=f"{instance.subcommand} started (seed={instance.seed})",
        )
