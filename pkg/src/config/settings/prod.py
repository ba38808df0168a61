# src/config/settings/prod.py
from .base import *  # noqa

# 長時間のクロスバリデーション用。ログは警告以上だけ残す
DEBUG = False
SEATRACK_LOG_LEVEL = "WARNING"
LOGGING["loggers"]["apps"]["level"] = SEATRACK_LOG_LEVEL  # noqa: F405
LOGGING["loggers"]["seatrack"]["level"] = SEATRACK_LOG_LEVEL  # noqa: F405
