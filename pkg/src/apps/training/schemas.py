# src/apps/training/schemas.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from apps.common.errors import ConfigMismatch
from apps.evaluation.schemas import EvalReport
from apps.nn.losses import LOSSES
from apps.nn.params import AdamConfig


@dataclass(frozen=True)
class TrainConfig:
    """
    学習ループの設定。

    NOTE:
    - 既定値は settings.SEATRACK_DEFAULTS と同じ（コマンドはそちらから組み立てる）
    - patience は max_epochs より小さいこと
    """

    max_epochs: int = 3000
    batch_size: int = 200
    adam: AdamConfig = field(default_factory=AdamConfig)
    patience: int = 50
    seed: int = 0
    loss: str = "mae"

    def __post_init__(self) -> None:
        if self.max_epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigMismatch("max_epochs, batch_size and patience must be positive integers")
        if self.patience >= self.max_epochs:
            raise ConfigMismatch(f"patience ({self.patience}) must be smaller than max_epochs ({self.max_epochs})")
        if self.loss not in LOSSES:
            raise ConfigMismatch(f"unknown loss: {self.loss}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "adam": self.adam.to_dict(),
            "patience": self.patience,
            "seed": self.seed,
            "loss": self.loss,
        }


@dataclass
class TrainReport:
    """
    1回の学習の記録。

    絶対ルール:
    - val_losses[k] は epoch k+1 の検証損失。初期値（epoch 0）は initial_val_loss に別で持つ
    - best_val_loss は best_epoch 以降のどの検証損失よりも大きくない
    - wall_time は to_dict に入れない（ファイル出力を再現可能にするため）
    """

    model_id: str
    labeled: bool
    initial_val_loss: float
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False
    steps: int = 0
    wall_time: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.val_losses)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "labeled": self.labeled,
            "initial_val_loss": self.initial_val_loss,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stopped_early": self.stopped_early,
            "epochs_run": self.epochs_run,
            "steps": self.steps,
        }


@dataclass
class FoldResult:
    """1 fold 分の結果。失敗したモデルは failures に理由を入れて続行する。"""

    fold: int
    n_train: int
    n_val: int
    n_test: int
    reports: list[EvalReport] = field(default_factory=list)
    train_reports: list[TrainReport] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


@dataclass
class CrossValResult:
    delta_sec: float
    h: int
    folds: list[FoldResult]
    pattern_names: tuple[str, ...] = ()

    @property
    def reports(self) -> list[EvalReport]:
        return [r for f in self.folds for r in f.reports]

    @property
    def failures(self) -> list[str]:
        return [msg for f in self.folds for msg in f.failures]

    def window_totals(self) -> list[int]:
        """fold ごとの窓数の合計（どの fold でも全航跡の窓数と一致する）。"""
        return [f.n_train + f.n_val + f.n_test for f in self.folds]
