# src/apps/geo/apps.py
from django.apps import AppConfig


class GeoConfig(AppConfig):
    name = "apps.geo"
    verbose_name = "Geodesy"
