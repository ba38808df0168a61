# src/apps/pipeline/management/commands/window.py
from __future__ import annotations

from pathlib import Path

from apps.ais.trajectory_io import read_trajectories
from apps.pipeline.management.base import SeatrackCommand, add_out_argument, add_window_arguments
from apps.pipeline.services import window
from apps.windowing.sample_io import write_samples


class Command(SeatrackCommand):
    help = "Cut a trajectory file into standardized (input, target, ψ) windows."

    input_options = ("input",)

    def add_arguments(self, parser):
        parser.add_argument("--input", required=True, help="prepare が書いた trajectories.txt")
        add_window_arguments(parser)
        parser.add_argument("--labeled", action="store_true", help="ψ（パターンの one-hot）を付ける")
        add_out_argument(parser)

    def run(self, out_dir, options):
        tf = read_trajectories(Path(options["input"]))
        ell, h = options["ell"], options["h"]
        samples, standardizer, P = window(tf, ell=ell, h=h, labeled=options["labeled"])
        path = out_dir / "windows.txt"
        write_samples(path, samples, ell=ell, h=h, P=P, standardizer=standardizer)
        self.done(f"window done: samples={len(samples)} file={path}")
