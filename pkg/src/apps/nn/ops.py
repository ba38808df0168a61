# src/apps/nn/ops.py
"""
行列演算（float64 の numpy 配列を Matrix として扱う）。

形が合わないときは ShapeMismatch を投げる。活性化関数の微分は
出力値から計算できる形（σ' = σ(1-σ), tanh' = 1-tanh²）で各モデルが使う。
"""
from __future__ import annotations

import numpy as np

from apps.common.errors import ShapeMismatch


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} x {b.shape}")
    return a @ b


def add_bias(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[-1] or b.ndim != 1:
        raise ShapeMismatch(f"add_bias {a.shape} + {b.shape}")
    return a + b


def affine(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x Wᵀ + b（行ベクトル規約: x は B×in, W は out×in）。"""
    return add_bias(matmul(x, W.T), b)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatch(f"hadamard {a.shape} * {b.shape}")
    return a * b


def concat_rows(*parts: np.ndarray) -> np.ndarray:
    """最後の軸で連結する（ベクトル同士なら縦に積むのと同じ）。"""
    lead = {p.shape[:-1] for p in parts}
    if len(lead) != 1:
        raise ShapeMismatch(f"concat_rows {[p.shape for p in parts]}")
    return np.concatenate(parts, axis=-1)


def transpose(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def elementwise(kind: str, x: np.ndarray) -> np.ndarray:
    fn = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}.get(kind)
    if fn is None:
        raise ValueError(f"unknown activation: {kind}")
    return fn(x)


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """最大値を引いてから exp（オーバーフロー対策）。"""
    z = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)
