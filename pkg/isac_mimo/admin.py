# -*- coding: utf-8 -*-
from django.contrib import admin

from .models import ProjectionTrackingRecord, ResultRowRecord


@admin.register(ResultRowRecord)
class ResultRowRecordAdmin(admin.ModelAdmin):
    list_display = (
        "scenario_id",
        "scheme",
        "method",
        "sweep_value",
        "large_scale_set",
        "sum_rate",
        "feasible",
    )
    list_filter = ("scenario_id", "scheme", "method", "feasible")


admin.site.register(ProjectionTrackingRecord)
