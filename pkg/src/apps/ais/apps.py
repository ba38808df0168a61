# src/apps/ais/apps.py
from django.apps import AppConfig


class AisConfig(AppConfig):
    name = "apps.ais"
    verbose_name = "AIS ingest"
