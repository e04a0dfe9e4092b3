# -*- coding: utf-8 -*-
from django.db import models


class ResultRowRecord(models.Model):

    id = models.BigAutoField(primary_key=True)

    # ID of the ExperimentRun aggregate the row was recorded in.
    run_id = models.UUIDField()

    # Index of the row in the run.
    position = models.BigIntegerField()

    scenario_id = models.CharField(max_length=64)
    scheme = models.CharField(max_length=8)
    method = models.CharField(max_length=16)
    sweep_value = models.FloatField()

    # Null on rows averaged over the large-scale sets.
    large_scale_set = models.IntegerField(null=True)

    # Nulls stand for NaN on infeasible rows.
    sum_rate = models.FloatField(null=True)
    sum_rate_mc = models.FloatField(null=True)
    per_user_rates = models.TextField(default="")
    crlb_theta = models.FloatField(null=True)
    crlb_phi = models.FloatField(null=True)
    crlb_theta_db = models.FloatField(null=True)
    crlb_phi_db = models.FloatField(null=True)
    comm_power = models.FloatField(null=True)
    sensing_power = models.FloatField(null=True)
    iterations = models.FloatField(null=True)
    feasible = models.BooleanField()
    wall_time = models.FloatField()

    class Meta:
        unique_together = (("run_id", "position"),)
        db_table = "result_rows"


class ProjectionTrackingRecord(models.Model):

    uid = models.BigAutoField(primary_key=True)

    run_id = models.UUIDField(unique=True)

    # Number of rows of the run already written to result_rows.
    position = models.BigIntegerField()

    class Meta:
        db_table = "projection_tracking"
