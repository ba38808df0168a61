# src/apps/nn/apps.py
from django.apps import AppConfig


class NnConfig(AppConfig):
    name = "apps.nn"
    verbose_name = "Numerical core"
