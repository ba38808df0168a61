# src/apps/nn/losses.py
from __future__ import annotations

import numpy as np

from apps.common.errors import ShapeMismatch


def mae_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """
    全要素の |p−t| の平均と、その（劣）勾配 sign(p−t)/n。

    NOTE: p == t の点の劣勾配は 0 とする。
    """
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mae_loss {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.mean(np.abs(diff))), np.sign(diff) / n


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse_loss {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


LOSSES = {"mae": mae_loss, "mse": mse_loss}


def get_loss(name: str):
    try:
        return LOSSES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown loss: {name}")
