# src/apps/windowing/services.py
from __future__ import annotations

import logging
import math
from typing import Iterable, Optional, Sequence

import numpy as np

from apps.ais.schemas import Trajectory
from apps.common.errors import TooFewTrajectories
from apps.geo.schemas import Standardizer
from apps.nn.rng import make_rng

from .schemas import FoldPlan, SampleBatch, WindowSample

logger = logging.getLogger(__name__)


def window_count(T: int, ell: int, h: int) -> int:
    """n = T − (ℓ+h) + 1（負なら 0）。"""
    return max(0, T - (ell + h) + 1)


def one_hot(label: int, P: int) -> np.ndarray:
    if not 0 <= label < P:
        raise IndexError(f"label {label} out of range for P={P}")
    v = np.zeros(P, dtype=np.float64)
    v[label] = 1.0
    return v


def segment(
    traj: Trajectory,
    ell: int,
    h: int,
    *,
    standardizer: Optional[Standardizer] = None,
    n_patterns: Optional[int] = None,
) -> list[WindowSample]:
    """
    ストライド1のスライディングウィンドウ。

    仕様:
    - アンカー k の入力は s_{k-ℓ+1..k}、出力は s_{k+1..k+h}
    - 個数は T−(ℓ+h)+1（足りなければ空）
    - standardizer があれば標準化した座標で返す
    - ψ はラベルと P の両方があるときだけ付ける
    """
    if ell < 1 or h < 1:
        raise ValueError("ell and h must be >= 1")

    n = window_count(len(traj), ell, h)
    if n == 0:
        return []

    lonlat = traj.lonlat
    if standardizer is not None:
        lonlat = standardizer.apply_array(lonlat)
    psi = one_hot(traj.label, n_patterns) if (traj.label is not None and n_patterns) else None

    samples = []
    for i in range(n):
        k = i + ell - 1
        samples.append(
            WindowSample(
                input=lonlat[k - ell + 1:k + 1].copy(),
                target=lonlat[k + 1:k + 1 + h].copy(),
                psi=psi,
                source_traj=traj.traj_id,
                k=k,
            )
        )
    return samples


def segment_all(
    trajectories: Iterable[Trajectory],
    ell: int,
    h: int,
    *,
    standardizer: Optional[Standardizer] = None,
    n_patterns: Optional[int] = None,
) -> list[WindowSample]:
    samples: list[WindowSample] = []
    for traj in trajectories:
        samples.extend(segment(traj, ell, h, standardizer=standardizer, n_patterns=n_patterns))
    return samples


def stack_samples(samples: Sequence[WindowSample], *, ell: int, h: int, d: int = 2) -> SampleBatch:
    """WindowSample の列を N×ℓ×d / N×h×d の配列にまとめる。"""
    if not samples:
        return SampleBatch(
            X=np.zeros((0, ell, d)),
            Y=np.zeros((0, h, d)),
            psi=None,
            traj_ids=np.zeros(0, dtype=np.int64),
            anchors=np.zeros(0, dtype=np.int64),
        )
    labeled = all(s.psi is not None for s in samples)
    return SampleBatch(
        X=np.stack([s.input for s in samples]),
        Y=np.stack([s.target for s in samples]),
        psi=np.stack([s.psi for s in samples]) if labeled else None,
        traj_ids=np.array([s.source_traj for s in samples], dtype=np.int64),
        anchors=np.array([s.k for s in samples], dtype=np.int64),
    )


def kfold_split(traj_ids: Iterable[int], K: int, seed: int, *, val_fraction: float = 0.1) -> FoldPlan:
    """
    航跡IDをシード付きでシャッフルし、ラウンドロビンで K 個に配る。

    NOTE:
    - 同じ ID 集合とシードなら常に同じ分割
    - fold のサイズ差は最大 1
    """
    ids = sorted(set(int(t) for t in traj_ids))
    if K < 2:
        raise TooFewTrajectories("K must be at least 2", K=K)
    if len(ids) < K:
        raise TooFewTrajectories(f"{len(ids)} trajectories cannot fill {K} folds", n=len(ids), K=K)
    # 一番大きい fold を抜いても学習側に学習用と検証用が1本ずつ残ること
    if len(ids) - math.ceil(len(ids) / K) < 2:
        raise TooFewTrajectories(
            f"{len(ids)} trajectories leave no validation trajectory with {K} folds", n=len(ids), K=K
        )
    if not 0.0 < val_fraction < 1.0:
        raise TooFewTrajectories("val_fraction must be in (0, 1)", val_fraction=val_fraction)

    rng = make_rng(seed, "kfold")
    order = tuple(int(ids[i]) for i in rng.permutation(len(ids)))
    assignment = {t: i % K for i, t in enumerate(order)}
    logger.debug("fold plan: K=%d, %d trajectories", K, len(ids))
    return FoldPlan(K=K, assignment=assignment, order=order, val_fraction=val_fraction)
