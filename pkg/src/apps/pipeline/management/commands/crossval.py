# src/apps/pipeline/management/commands/crossval.py
from __future__ import annotations

import json
from pathlib import Path

from django.conf import settings

from apps.ais.trajectory_io import read_trajectories
from apps.pipeline.management.base import (
    SeatrackCommand,
    add_out_argument,
    add_training_arguments,
    add_window_arguments,
    train_config_from,
)
from apps.pipeline.services import crossval_configs, parse_origin, run_crossval, write_reports

LABEL_MODES = {"no": (False,), "yes": (True,), "both": (False, True)}


class Command(SeatrackCommand):
    help = "Trajectory-level K-fold experiment over a model grid; writes the comparison report."

    input_options = ("input",)

    def add_arguments(self, parser):
        d = settings.SEATRACK_DEFAULTS
        parser.add_argument("--input", required=True, help="prepare が書いた trajectories.txt")
        parser.add_argument(
            "--models",
            default="linear,mlp,encdec-max,encdec-avg,encdec-attn",
            help="カンマ区切り（linear, mlp, encdec-max, encdec-avg, encdec-attn）",
        )
        parser.add_argument(
            "--labeled", default="both", choices=sorted(LABEL_MODES), help="ラベル無し / 付き / 両方"
        )
        parser.add_argument("--folds", type=int, default=d["folds"])
        add_window_arguments(parser)
        add_training_arguments(parser)
        parser.add_argument("--format", default="all", help="table | kv | cdf | distance | all")
        parser.add_argument("--origin", default=None, help="距離別誤差の原点 'lat,lon'")
        parser.add_argument("--bin-nmi", type=float, default=d["bin_nmi"])
        parser.add_argument("--per-route", action="store_true")
        add_out_argument(parser)

    def run(self, out_dir, options):
        tf = read_trajectories(Path(options["input"]))
        origin = parse_origin(options["origin"])
        cfg = train_config_from(options)
        model_ids = [m.strip() for m in options["models"].split(",") if m.strip()]
        configs = crossval_configs(
            model_ids,
            LABEL_MODES[options["labeled"]],
            ell=options["ell"],
            h=options["h"],
            P=tf.n_patterns,
            hidden=options["hidden"],
            mlp_width=settings.SEATRACK_DEFAULTS["mlp_width"],
            teacher_forcing=options["teacher_forcing"],
        )
        result, bundle = run_crossval(
            tf,
            configs,
            cfg,
            K=options["folds"],
            val_fraction=settings.SEATRACK_DEFAULTS["val_fraction"],
            origin=origin,
        )
        paths = write_reports(
            out_dir, bundle, options["format"], bin_nmi=options["bin_nmi"], per_route=options["per_route"]
        )
        training = [
            {"fold": f.fold, "n_train": f.n_train, "n_val": f.n_val, "n_test": f.n_test, "reports": [r.to_dict() for r in f.train_reports]}
            for f in result.folds
        ]
        (out_dir / "train_reports.json").write_text(json.dumps(training, sort_keys=True, indent=2) + "\n", encoding="utf-8")

        for failure in result.failures:
            self.stderr.write(self.style.WARNING(f"failed: {failure}"))
        table = out_dir / "report.txt"
        if table.exists() and options["format"] in ("all", "table"):
            self.stdout.write(table.read_text(encoding="utf-8"), ending="")
        self.done(
            f"crossval done: folds={options['folds']} reports={len(bundle.reports)} "
            f"failures={len(result.failures)} files={','.join(p.name for p in paths)}"
        )
