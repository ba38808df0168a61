from .base import *  # noqa

DEBUG = True
# 開発中は学習の epoch ごとのログまで見たいので DEBUG に上書き
SEATRACK_LOG_LEVEL = "DEBUG"
LOGGING["loggers"]["apps"]["level"] = SEATRACK_LOG_LEVEL  # noqa: F405
LOGGING["loggers"]["seatrack"]["level"] = SEATRACK_LOG_LEVEL  # noqa: F405
