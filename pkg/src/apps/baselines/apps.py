# src/apps/baselines/apps.py
from django.apps import AppConfig


class BaselinesConfig(AppConfig):
    name = "apps.baselines"
    verbose_name = "Baseline models"
