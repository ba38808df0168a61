# src/apps/pipeline/management/commands/prepare.py
from __future__ import annotations

from pathlib import Path

from django.conf import settings

from apps.pipeline.management.base import SeatrackCommand, add_out_argument
from apps.pipeline.services import format_stats, load_schema, prepare, write_prepared


class Command(SeatrackCommand):
    help = "Parse AIS CSV, build trajectories, label them by polygons and resample onto the Δ grid."

    input_options = ("input", "schema", "polygons")

    def add_arguments(self, parser):
        d = settings.SEATRACK_DEFAULTS
        parser.add_argument("--input", required=True, help="AIS CSV（ヘッダ行あり）")
        parser.add_argument("--schema", required=True, help="列名マッピング（ファイル or key=value,...）")
        parser.add_argument("--polygons", default=None, help="origin/destination の多角形ファイル（無ければラベル無し）")
        parser.add_argument("--delta-min", type=float, default=d["delta_min"])
        parser.add_argument("--gap-sec", type=float, default=d["gap_sec"])
        parser.add_argument("--ship-type", default=None, help="この船種だけ使う（大文字小文字は無視）")
        add_out_argument(parser)

    def run(self, out_dir, options):
        schema = load_schema(options["schema"])
        polygons_text = None
        if options["polygons"]:
            polygons_text = Path(options["polygons"]).read_text(encoding="utf-8")
        data = Path(options["input"]).read_bytes()

        prepared = prepare(
            data,
            schema,
            polygons_text=polygons_text,
            delta_min=options["delta_min"],
            gap_sec=options["gap_sec"],
            ship_type=options["ship_type"],
        )
        path = write_prepared(out_dir, prepared)
        if not prepared.trajectories:
            self.stderr.write(self.style.WARNING("no trajectories survived preparation"))
        for line in format_stats(prepared.stats):
            self.stdout.write(line)
        self.done(f"prepare done: trajectories={len(prepared.trajectories)} file={path}")
