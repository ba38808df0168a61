# src/apps/pipeline/management/commands/synth.py
from __future__ import annotations

from django.conf import settings

from apps.pipeline.management.base import SeatrackCommand, add_out_argument
from apps.pipeline.services import format_stats, synth
from apps.pipeline.synth import SynthConfig


class Command(SeatrackCommand):
    help = "Generate the two-route synthetic AIS scenario (ais.csv, schema.txt, polygons.txt, trajectories.txt)."

    def add_arguments(self, parser):
        d = settings.SEATRACK_DEFAULTS
        add_out_argument(parser)
        parser.add_argument("--seed", type=int, default=d["seed"])
        parser.add_argument("--vessels", type=int, default=60, help="1航路あたりの船の数")
        parser.add_argument("--speed-kn", type=float, default=12.0, help="船速の平均（ノット）")
        parser.add_argument("--noise-nmi", type=float, default=0.05, help="位置ノイズの標準偏差（nmi）")
        parser.add_argument("--delta-min", type=float, default=d["delta_min"])
        parser.add_argument("--gap-sec", type=float, default=d["gap_sec"])

    def run(self, out_dir, options):
        cfg = SynthConfig(
            vessels_per_route=options["vessels"],
            seed=options["seed"],
            speed_kn=options["speed_kn"],
            noise_nmi=options["noise_nmi"],
        )
        prepared = synth(out_dir, cfg, delta_min=options["delta_min"], gap_sec=options["gap_sec"])
        for line in format_stats(prepared.stats):
            self.stdout.write(line)
        self.done(f"synth done: trajectories={len(prepared.trajectories)} out={out_dir}")
