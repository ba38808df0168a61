# src/config/settings/base.py
from pathlib import Path
import os

# base.py の位置: src/config/settings/base.py
# parents[0]=settings, [1]=config, [2]=src
# 「manage.py がある src/」を BASE_DIR にしたいので parents[2] を採用する
BASE_DIR = Path(__file__).resolve().parents[2]  # => src/

# --------------------------------------------------------------------
# Env
# --------------------------------------------------------------------
# settings は環境変数が来る前提で書く（CI やバッチ実行でも使いやすい）。
# Web 画面は持たないので SECRET_KEY は Django の起動要件を満たすためだけのもの。
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "seatrack-batch-only")
DEBUG = os.getenv("DJANGO_DEBUG", "false").lower() == "true"

SEATRACK_VERSION = "1.0.0"

# フォールド単位の並列数の上限（1 なら逐次）
SEATRACK_THREADS = int(os.getenv("SEATRACK_THREADS", "1"))
if SEATRACK_THREADS < 1:
    raise RuntimeError("SEATRACK_THREADS must be >= 1")

SEATRACK_LOG_LEVEL = os.getenv("SEATRACK_LOG_LEVEL", "INFO").upper()

# 合成データでの学習まで回す長いテストは明示的に ON にしたときだけ走らせる
SEATRACK_SLOW_TESTS = os.getenv("SEATRACK_SLOW_TESTS", "false").lower() == "true"

# --------------------------------------------------------------------
# 実験のデフォルト値（コマンドのフラグ既定値はここを参照する）
# --------------------------------------------------------------------
# NOTE:
# - Δ=15分, ℓ=h=12（3時間先まで）, Adam lr=1e-4, batch 200, 3000 epochs が標準の実験設定
# - patience / gap / 検証割合 / ビン幅はこのプロジェクトで決めた値
SEATRACK_DEFAULTS = {
    "delta_min": 15,
    "gap_sec": 1800,
    "ell": 12,
    "h": 12,
    "epochs": 3000,
    "batch": 200,
    "lr": 1e-4,
    "patience": 50,
    "folds": 5,
    "seed": 0,
    "hidden": 64,
    "mlp_width": 512,
    "val_fraction": 0.1,
    "bin_nmi": 5.0,
    "loss": "mae",
}

# --------------------------------------------------------------------
# Application definition
# --------------------------------------------------------------------
INSTALLED_APPS = [
    # Project apps (src/apps/ 配下の各ディレクトリ。apps.py の AppConfig を登録)
    "apps.geo.apps.GeoConfig",
    "apps.ais.apps.AisConfig",
    "apps.windowing.apps.WindowingConfig",
    "apps.nn.apps.NnConfig",
    "apps.seq2seq.apps.Seq2SeqConfig",
    "apps.baselines.apps.BaselinesConfig",
    "apps.training.apps.TrainingConfig",
    "apps.evaluation.apps.EvaluationConfig",
    "apps.pipeline.apps.PipelineConfig",
]

# DB は使わない（入出力はすべてファイル）
DATABASES = {}

# --------------------------------------------------------------------
# Logging
# --------------------------------------------------------------------
# コマンドの結果（表やパス）は stdout、経過ログは stderr に出す。
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        "apps": {"handlers": ["console"], "level": SEATRACK_LOG_LEVEL, "propagate": False},
        "seatrack": {"handlers": ["console"], "level": SEATRACK_LOG_LEVEL, "propagate": False},
    },
}

