import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies: list = []

    operations = [
        migrations.CreateModel(
            name="Run",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "subcommand",
                    models.CharField(
                        choices=[
                            ("evaluate", "Evaluate"),
                            ("worst-reward", "Worst Reward"),
                            ("train", "Train"),
                            ("sweep", "Sweep"),
                            ("ac", "Actor-Critic"),
                        ],
                        max_length=20,
                    ),
                ),
                ("config", models.JSONField(default=dict)),
                ("seed", models.BigIntegerField(blank=True, null=True)),
                ("version", models.CharField(max_length=20)),
                ("output_dir", models.CharField(max_length=500)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "Running"),
                            ("finished", "Finished"),
                            ("failed", "Failed"),
                        ],
                        default="running",
                        max_length=10,
                    ),
                ),
                ("exit_code", models.IntegerField(blank=True, null=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("finished_at", models.DateTimeField(blank=True, null=True)),
            ],
            options={
                "verbose_name": "Run",
                "verbose_name_plural": "Runs",
                "ordering": ["-created_at"],
                "get_latest_by": "created_at",
            },
        ),
        migrations.CreateModel(
            name="RunEvent",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "event_type",
                    models.CharField(
                        choices=[
                            ("started", "Started"),
                            ("finished", "Finished"),
                            ("failed", "Failed"),
                        ],
                        max_length=10,
                    ),
                ),
                ("details", models.TextField(blank=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="events",
                        to="robust.run",
                    ),
                ),
            ],
            options={
                "verbose_name": "Run Event",
                "verbose_name_plural": "Run Events",
                "ordering": ["created_at", "pk"],
                "get_latest_by": "created_at",
            },
        ),
        migrations.CreateModel(
            name="SweepCell",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("alpha", models.FloatField()),
                ("method", models.CharField(max_length=20)),
                ("num_states", models.PositiveIntegerField()),
                ("num_actions", models.PositiveIntegerField()),
                ("seed", models.BigIntegerField()),
                ("cvar", models.FloatField(blank=True, null=True)),
                ("mean", models.FloatField(blank=True, null=True)),
                ("error", models.TextField(blank=True)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="cells",
                        to="robust.run",
                    ),
                ),
            ],
            options={
                "verbose_name": "Sweep Cell",
                "verbose_name_plural": "Sweep Cells",
                "ordering": ["num_states", "alpha", "method"],
                "constraints": [
                    models.UniqueConstraint(
                        fields=("run", "num_states", "alpha", "method"),
                        name="unique_sweep_cell",
                    )
                ],
            },
        ),
    ]
