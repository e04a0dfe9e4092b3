# -*- coding: utf-8 -*-
from django.apps import AppConfig


class IsacMimoConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "isac_mimo"
    verbose_name = "ISAC experiment results"
