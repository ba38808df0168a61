# src/apps/pipeline/management/base.py
"""
パイプラインコマンド共通の土台。

絶対ルール:
- フラグは1つの綴りだけ（省略形は受け付けない）
- 失敗は CommandError に1行（code=... message=...）で出す。Django が終了コードを非0にする
- 成功したら --out に manifest.json を書く（rerun はこれだけで同じ出力を作り直す）
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Optional

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from apps.common.errors import ConfigMismatch, SeatrackError
from apps.nn.params import AdamConfig
from apps.training.schemas import TrainConfig

from ..manifest import RunManifest, sha256_file, write_manifest

# 実行単位のイベント（マニフェストの書き出しなど）は seatrack 名前空間に出す
logger = logging.getLogger("seatrack.run")

# Django 側の共通オプション（マニフェストには入れない）
_DJANGO_OPTIONS = {
    "verbosity",
    "settings",
    "pythonpath",
    "traceback",
    "no_color",
    "force_color",
    "skip_checks",
    "stdout",
    "stderr",
}


class SeatrackCommand(BaseCommand):
    # ファイルパスを受け取るオプション（マニフェストに sha256 を残す）
    input_options: tuple[str, ...] = ()
    # rerun は再実行したコマンド自身のマニフェストを残すので自分では書かない
    writes_manifest = True

    def create_parser(self, prog_name, subcommand, **kwargs):
        return super().create_parser(prog_name, subcommand, allow_abbrev=False, **kwargs)

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def handle(self, *args, **options):
        out = options.get("out")
        try:
            out_dir = None
            if out:
                out_dir = Path(out)
                out_dir.mkdir(parents=True, exist_ok=True)
            self.run(out_dir, options)
            if out_dir is not None and self.writes_manifest:
                path = write_manifest(out_dir, self.build_manifest(options))
                logger.info("wrote %s", path)
        except SeatrackError as exc:
            raise CommandError(exc.one_line())
        except ValidationError as exc:
            text = " ".join("; ".join(exc.messages).split())
            raise CommandError(f"code=ValidationError message={text}")
        except OSError as exc:
            raise CommandError(f"code={type(exc).__name__} message={exc}")

    def run(self, out_dir: Optional[Path], options: dict[str, Any]) -> None:
        raise NotImplementedError

    # -----------------------------
    # manifest
    # -----------------------------
    def build_manifest(self, options: dict[str, Any]) -> RunManifest:
        resolved = {k: v for k, v in options.items() if k not in _DJANGO_OPTIONS}
        inputs = {}
        for name in self.input_options:
            value = resolved.get(name)
            if value and Path(value).is_file():
                path = Path(value).resolve()
                resolved[name] = str(path)
                inputs[name] = sha256_file(path)
        return RunManifest(
            command=self.command_name,
            options=resolved,
            inputs=inputs,
            seed=resolved.get("seed"),
            version=settings.SEATRACK_VERSION,
        )

    def done(self, message: str) -> None:
        self.stdout.write(self.style.SUCCESS(message))


# ------------------------------------------------------------
# 共通フラグ
# ------------------------------------------------------------
def add_out_argument(parser, *, required: bool = True) -> None:
    parser.add_argument("--out", required=required, help="出力ディレクトリ（manifest.json もここに書く）")


def add_window_arguments(parser) -> None:
    d = settings.SEATRACK_DEFAULTS
    parser.add_argument("--ell", type=int, default=d["ell"], help="入力の長さ ℓ（ステップ数）")
    parser.add_argument("--h", type=int, default=d["h"], help="予測ホライズン h（ステップ数）")


def add_training_arguments(parser) -> None:
    d = settings.SEATRACK_DEFAULTS
    parser.add_argument("--epochs", type=int, default=d["epochs"])
    parser.add_argument("--batch", type=int, default=d["batch"])
    parser.add_argument("--lr", type=float, default=d["lr"])
    parser.add_argument("--patience", type=int, default=d["patience"])
    parser.add_argument("--seed", type=int, default=d["seed"])
    parser.add_argument("--loss", default=d["loss"], help="mae または mse")
    parser.add_argument("--hidden", type=int, default=d["hidden"], help="LSTM の隠れ次元")
    parser.add_argument("--teacher-forcing", action="store_true", help="学習時にデコーダへ正解を入れる")


def train_config_from(options: dict[str, Any]) -> TrainConfig:
    try:
        adam = AdamConfig(lr=options["lr"])
    except ValueError as exc:
        raise ConfigMismatch(str(exc))
    return TrainConfig(
        max_epochs=options["epochs"],
        batch_size=options["batch"],
        adam=adam,
        patience=options["patience"],
        seed=options["seed"],
        loss=options["loss"],
    )
