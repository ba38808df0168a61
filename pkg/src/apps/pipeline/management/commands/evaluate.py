# src/apps/pipeline/management/commands/evaluate.py
from __future__ import annotations

from pathlib import Path

from django.conf import settings

from apps.ais.trajectory_io import read_trajectories
from apps.nn.checkpoint import load_checkpoint
from apps.pipeline.management.base import SeatrackCommand, add_out_argument
from apps.pipeline.services import evaluate_checkpoint, parse_origin, write_reports


class Command(SeatrackCommand):
    help = "Evaluate a checkpoint on a trajectory file and write the report files."

    input_options = ("checkpoint", "input")

    def add_arguments(self, parser):
        d = settings.SEATRACK_DEFAULTS
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument("--input", required=True, help="評価する trajectories.txt")
        parser.add_argument("--format", default="all", help="table | kv | cdf | distance | all")
        parser.add_argument("--origin", default=None, help="距離別誤差の原点 'lat,lon'（既定は始点の平均）")
        parser.add_argument("--bin-nmi", type=float, default=d["bin_nmi"])
        parser.add_argument("--per-route", action="store_true", help="kv にルート別の最終誤差も出す")
        add_out_argument(parser)

    def run(self, out_dir, options):
        origin = parse_origin(options["origin"])
        ckpt = load_checkpoint(Path(options["checkpoint"]))
        tf = read_trajectories(Path(options["input"]))
        bundle = evaluate_checkpoint(ckpt, tf, origin=origin)
        paths = write_reports(
            out_dir, bundle, options["format"], bin_nmi=options["bin_nmi"], per_route=options["per_route"]
        )
        report = bundle.reports[0]
        self.done(
            f"evaluate done: model={report.model_id} labeled={int(report.labeled)} n={report.n_samples} "
            f"mae_final={report.mae_per_horizon[-1]:.6f} files={','.join(p.name for p in paths)}"
        )
