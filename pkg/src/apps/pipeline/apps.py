# src/apps/pipeline/apps.py
from django.apps import AppConfig


class PipelineConfig(AppConfig):
    name = "apps.pipeline"
    verbose_name = "Pipeline commands"
