# src/apps/windowing/apps.py
from django.apps import AppConfig


class WindowingConfig(AppConfig):
    name = "apps.windowing"
    verbose_name = "Windowing"
