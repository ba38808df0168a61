# src/apps/windowing/schemas.py
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from apps.common.errors import ShapeMismatch


@dataclass(frozen=True)
class WindowSample:
    """
    1つの学習サンプル (X, Y, ψ)。

    NOTE:
    - input は ℓ×d、target は h×d（d=2, 列は [lon, lat]）
    - psi はラベル付きのときだけ持つ（ラベル無しモードでは None）
    - k は元の航跡上のアンカー位置（入力の最後の状態のインデックス）
    """

    input: np.ndarray
    target: np.ndarray
    psi: Optional[np.ndarray]
    source_traj: int
    k: int

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.input)) and np.all(np.isfinite(self.target))):
            raise ShapeMismatch("window contains non-finite values", traj=self.source_traj, k=self.k)
        if self.psi is not None and float(self.psi.sum()) != 1.0:
            raise ShapeMismatch("psi must be one-hot", traj=self.source_traj, k=self.k)


@dataclass(frozen=True)
class SampleBatch:
    """モデルに渡す配列の束（N×ℓ×d, N×h×d, N×P or None）。"""

    X: np.ndarray
    Y: np.ndarray
    psi: Optional[np.ndarray]
    traj_ids: np.ndarray
    anchors: np.ndarray

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def take(self, idx: np.ndarray) -> "SampleBatch":
        return SampleBatch(
            X=self.X[idx],
            Y=self.Y[idx],
            psi=None if self.psi is None else self.psi[idx],
            traj_ids=self.traj_ids[idx],
            anchors=self.anchors[idx],
        )

    def without_psi(self) -> "SampleBatch":
        return SampleBatch(X=self.X, Y=self.Y, psi=None, traj_ids=self.traj_ids, anchors=self.anchors)


@dataclass(frozen=True)
class FoldPlan:
    """
    航跡単位の K 分割。

    NOTE:
    - assignment: traj_id -> fold 番号
    - order: シードで並べ替えた traj_id の順（検証用の取り出しもこの順で行う）
    """

    K: int
    assignment: dict[int, int]
    order: tuple[int, ...]
    val_fraction: float = 0.1

    def fold_ids(self, fold: int) -> list[int]:
        return [t for t in self.order if self.assignment[t] == fold]

    def split(self, fold: int) -> tuple[list[int], list[int], list[int]]:
        """(train_ids, val_ids, test_ids)。検証は学習側から取り出す。"""
        test_ids = self.fold_ids(fold)
        rest = [t for t in self.order if self.assignment[t] != fold]
        n_val = max(1, int(np.ceil(self.val_fraction * len(rest))))
        n_val = min(n_val, len(rest) - 1)
        return rest[n_val:], rest[:n_val], test_ids
