# -*- coding: utf-8 -*-
# Generated by Django 3.2.5 on 2026-10-16 09:12
from __future__ import annotations

from typing import TYPE_CHECKING

from django.db import migrations, models

if TYPE_CHECKING:
    from typing import List


class Migration(migrations.Migration):

    initial = True

    dependencies: List[str] = []

    operations = [
        migrations.CreateModel(
            name="ProjectionTrackingRecord",
            fields=[
                ("uid", models.BigAutoField(primary_key=True, serialize=False)),
                ("run_id", models.UUIDField(unique=True)),
                ("position", models.BigIntegerField()),
            ],
            options={
                "db_table": "projection_tracking",
            },
        ),
        migrations.CreateModel(
            name="ResultRowRecord",
            fields=[
                ("id", models.BigAutoField(primary_key=True, serialize=False)),
                ("run_id", models.UUIDField()),
                ("position", models.BigIntegerField()),
                ("scenario_id", models.CharField(max_length=64)),
                ("scheme", models.CharField(max_length=8)),
                ("method", models.CharField(max_length=16)),
                ("sweep_value", models.FloatField()),
                ("large_scale_set", models.IntegerField(null=True)),
                ("sum_rate", models.FloatField(null=True)),
                ("sum_rate_mc", models.FloatField(null=True)),
                ("per_user_rates", models.TextField(default="")),
                ("crlb_theta", models.FloatField(null=True)),
                ("crlb_phi", models.FloatField(null=True)),
                ("crlb_theta_db", models.FloatField(null=True)),
                ("crlb_phi_db", models.FloatField(null=True)),
                ("comm_power", models.FloatField(null=True)),
                ("sensing_power", models.FloatField(null=True)),
                ("iterations", models.FloatField(null=True)),
                ("feasible", models.BooleanField()),
                ("wall_time", models.FloatField()),
            ],
            options={
                "db_table": "result_rows",
                "unique_together": {("run_id", "position")},
            },
        ),
    ]
