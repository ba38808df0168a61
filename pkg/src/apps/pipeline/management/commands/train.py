# src/apps/pipeline/management/commands/train.py
from __future__ import annotations

from pathlib import Path

from django.conf import settings

from apps.ais.trajectory_io import read_trajectories
from apps.nn.schemas import ModelConfig
from apps.pipeline.management.base import (
    SeatrackCommand,
    add_out_argument,
    add_training_arguments,
    add_window_arguments,
    train_config_from,
)
from apps.pipeline.services import require_labels, save_outcome, train_model


class Command(SeatrackCommand):
    help = "Train one model on a trajectory file and write model.ckpt + train_report.json."

    input_options = ("input",)

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="prepare が書いた trajectories.txt")
        parser.add_argument("--model", required=True, help="linear | mlp | encdec")
        parser.add_argument("--agg", default=None, help="encdec の集約: max | avg | attn")
        parser.add_argument("--labeled", action="store_true", help="ψ をデコーダに入れる")
        add_window_arguments(parser)
        add_training_arguments(parser)
        add_out_argument(parser)

    def run(self, out_dir, options):
        # 設定の矛盾はデータを読み込んだ直後、計算の前に弾く
        tf = read_trajectories(Path(options["input"]))
        if options["labeled"]:
            require_labels(tf)
        cfg = train_config_from(options)
        config = ModelConfig(
            kind=options["model"],
            ell=options["ell"],
            h=options["h"],
            P=tf.n_patterns if options["labeled"] else 0,
            labeled=options["labeled"],
            aggregation=options["agg"],
            hidden=options["hidden"],
            mlp_width=settings.SEATRACK_DEFAULTS["mlp_width"],
            teacher_forcing=options["teacher_forcing"],
        )
        outcome = train_model(tf, config, cfg, val_fraction=settings.SEATRACK_DEFAULTS["val_fraction"])
        ckpt_path, report_path = save_outcome(out_dir, outcome, cfg, tf.pattern_names)
        r = outcome.report
        self.done(
            f"train done: model={config.model_id} labeled={int(config.labeled)} epochs={r.epochs_run} "
            f"best_epoch={r.best_epoch} best_val={r.best_val_loss:.6f} checkpoint={ckpt_path} report={report_path}"
        )
