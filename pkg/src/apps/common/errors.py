# src/apps/common/errors.py
"""
seatrack 全体で使うドメイン例外。

方針:
- プロジェクト全体の「入力を弾く」例外は django の ValidationError に統一する
- code には例外クラス名を入れる（コマンド側で code=... として1行で出すため）
- 追加情報（epoch やパラメータのノルムなど）は details に辞書で持たせる
"""
from __future__ import annotations

from typing import Any

from django.core.exceptions import ValidationError


class SeatrackError(ValidationError):
    default_message = "invalid input"

    def __init__(self, message: str | None = None, **details: Any) -> None:
        super().__init__(message or self.default_message, code=type(self).__name__)
        self.details = details

    def one_line(self) -> str:
        """コマンド出力用（機械的にパースできる1行）。"""
        text = " ".join(str(self.message).split())
        return f"code={self.code} message={text}"


class DegenerateData(SeatrackError):
    default_message = "coordinate has zero variance"


class SchemaError(SeatrackError):
    default_message = "schema does not match the input header"


class TooShort(SeatrackError):
    default_message = "trajectory too short for the resampling grid"


class TooFewTrajectories(SeatrackError):
    default_message = "not enough trajectories for the requested fold count"


class ShapeMismatch(SeatrackError):
    default_message = "array shapes do not conform"


class ConfigMismatch(SeatrackError):
    default_message = "configuration is contradictory"


class NonFiniteLoss(SeatrackError):
    default_message = "loss became non-finite"


class UnsupportedFormat(SeatrackError):
    default_message = "unsupported report format"


class FileFormatError(SeatrackError):
    default_message = "malformed input file"
