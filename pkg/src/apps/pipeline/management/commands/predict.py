# src/apps/pipeline/management/commands/predict.py
from __future__ import annotations

from pathlib import Path

from apps.nn.checkpoint import load_checkpoint
from apps.pipeline.management.base import SeatrackCommand, add_out_argument
from apps.pipeline.services import format_attention, format_prediction, parse_sequence, predict_sequence


class Command(SeatrackCommand):
    help = "Predict the next h positions for one observed sequence (prints 'step lat lon' rows)."

    input_options = ("checkpoint", "sequence")

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", required=True)
        parser.add_argument(
            "--sequence", required=True, help="'lat,lon;lat,lon;...' か、1行1点のファイル（最後の ℓ 点を使う）"
        )
        parser.add_argument("--label", default=None, help="パターン名か番号（ラベル付きモデルでは必須）")
        add_out_argument(parser, required=False)

    def run(self, out_dir, options):
        ckpt = load_checkpoint(Path(options["checkpoint"]))
        pred = predict_sequence(ckpt, parse_sequence(options["sequence"]), options["label"])
        text = format_prediction(pred)
        self.stdout.write(text, ending="")
        if out_dir is not None:
            (out_dir / "prediction.txt").write_text(text, encoding="utf-8")
            if pred.alphas is not None:
                (out_dir / "attention.txt").write_text(format_attention(pred.alphas), encoding="utf-8")
