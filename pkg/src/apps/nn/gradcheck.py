# src/apps/nn/gradcheck.py
"""
中心差分による勾配チェック（解析的な backward の検証用オラクル）。
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore


def finite_difference_gradient(
    f: Callable[[ParamStore], float],
    params: ParamStore,
    h: float = 1e-6,
) -> dict[str, np.ndarray]:
    """
    (f(θ+h) − f(θ−h)) / 2h を座標ごとに計算する。値は計算後に元へ戻す。
    """
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        out = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f(params)
            flat[i] = orig - h
            f_minus = f(params)
            flat[i] = orig
            out[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """‖a−n‖ / max(1e-8, ‖a‖+‖n‖)"""
    num = np.linalg.norm(analytic - numeric)
    den = max(1e-8, np.linalg.norm(analytic) + np.linalg.norm(numeric))
    return float(num / den)


def relative_errors(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> dict[str, float]:
    return {name: relative_error(analytic[name], numeric[name]) for name in numeric}


def max_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> float:
    """全パラメータのうち最悪の相対誤差。"""
    errors = relative_errors(analytic, numeric)
    return max(errors.values()) if errors else 0.0
