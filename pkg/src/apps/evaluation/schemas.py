# src/apps/evaluation/schemas.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from apps.common.errors import ShapeMismatch


def report_horizons(delta_sec: float, h: int) -> list[int]:
    """
    表に出すステップ番号（1始まり）。

    仕様:
    - 1時間ごと j = k·3600/Δ のうち h 以下で整数になるもの（Δ=15分なら 4, 8, 12）
    - 1つも無ければ最後のステップ h だけ
    """
    horizons = []
    k = 1
    while True:
        steps = k * 3600.0 / delta_sec
        if steps > h + 1e-9:
            break
        if abs(steps - round(steps)) < 1e-9:
            horizons.append(int(round(steps)))
        k += 1
    return horizons or [h]


@dataclass(frozen=True)
class EvalReport:
    """
    1モデル × 1 fold の評価結果（距離はすべて海里）。

    NOTE:
    - mae_per_horizon[j-1] がステップ j の MAE
    - final_errors はステップ h の誤差（サンプルごと）、CDF の元データ
    - anchor_distances は原点から「入力の最後の位置」までの距離（距離別の誤差曲線用）
    - route_labels はラベルがあるときだけ（ルート別の集計用）
    """

    model_id: str
    labeled: bool
    fold: Optional[int]
    mae_per_horizon: np.ndarray
    final_errors: np.ndarray
    anchor_distances: np.ndarray
    route_labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.final_errors.size < 1:
            raise ShapeMismatch("evaluation needs at least one sample", model=self.model_id)
        if self.anchor_distances.shape != self.final_errors.shape:
            raise ShapeMismatch("anchor distances must align with final errors")
        if np.any(self.mae_per_horizon < 0.0):
            raise ShapeMismatch("MAE values must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(self.final_errors.size)

    @property
    def h(self) -> int:
        return int(self.mae_per_horizon.size)


@dataclass(frozen=True)
class ReportBundle:
    """
    レポート出力の単位（複数モデル・複数 fold の EvalReport をまとめる）。

    絶対ルール:
    - reports の並び順がそのまま出力順になる（同じ入力なら同じバイト列）
    """

    delta_sec: float
    h: int
    reports: tuple[EvalReport, ...]
    pattern_names: tuple[str, ...] = field(default_factory=tuple)
    failures: tuple[str, ...] = field(default_factory=tuple)

    @property
    def horizons(self) -> list[int]:
        return report_horizons(self.delta_sec, self.h)

    @property
    def model_ids(self) -> list[str]:
        seen: list[str] = []
        for r in self.reports:
            if r.model_id not in seen:
                seen.append(r.model_id)
        return seen

    @property
    def folds(self) -> list[Optional[int]]:
        seen: list[Optional[int]] = []
        for r in self.reports:
            if r.fold not in seen:
                seen.append(r.fold)
        return seen

    def select(self, model_id: str, labeled: bool) -> list[EvalReport]:
        return [r for r in self.reports if r.model_id == model_id and r.labeled == labeled]

    def mean_mae(self, model_id: str, labeled: bool) -> Optional[np.ndarray]:
        """fold 平均（fold ごとの MAE の算術平均）。該当なしなら None。"""
        chosen = self.select(model_id, labeled)
        if not chosen:
            return None
        return np.mean(np.stack([r.mae_per_horizon for r in chosen]), axis=0)
