# src/apps/nn/initializers.py
"""
重み初期化。行列は out×in（行 = 出力ユニット）なので fan_in = 列数。

- xavier: 一様分布 ±√(6/(fan_in+fan_out))
- he: 正規分布 N(0, 2/fan_in)
- orthogonal: ガウス行列の QR（再帰行列 W_* 用）
"""
from __future__ import annotations

from typing import Union

import numpy as np

from .rng import as_rng

Seed = Union[int, np.random.Generator]


def init_xavier(shape: tuple[int, int], seed: Seed) -> np.ndarray:
    rng = as_rng(seed)
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_he(shape: tuple[int, int], seed: Seed) -> np.ndarray:
    rng = as_rng(seed)
    fan_in = shape[1]
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_orthogonal(shape: tuple[int, int], seed: Seed) -> np.ndarray:
    """
    正方なら直交行列、長方形なら半直交（行か列の短い方が正規直交）。
    """
    rng = as_rng(seed)
    rows, cols = shape
    a = rng.normal(0.0, 1.0, size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    # QR の符号の不定性を消して一様な分布にする
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T
