# src/apps/seq2seq/lstm.py
"""
LSTM セルの1ステップ（前向き / 逆伝播）。バッチは先頭軸（B×m, B×q）。

    i = σ(x U_iᵀ + h W_iᵀ + b_i)     f, o も同じ形
    g = tanh(x U_cᵀ + h W_cᵀ + b_c)
    c = f⊙c_prev + i⊙g
    h = o⊙tanh(c)
"""
from __future__ import annotations

import numpy as np

from apps.common.errors import ShapeMismatch
from apps.nn.ops import affine, sigmoid, tanh
from apps.nn.params import ParamStore

from .schemas import GATES, LstmCell, LstmStepCache


def _pre_activation(cell: LstmCell, params: ParamStore, gate: str, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    return affine(x, params[cell.name("U", gate)], params[cell.name("b", gate)]) + h_prev @ params[cell.name("W", gate)].T


def lstm_cell_forward(
    cell: LstmCell,
    params: ParamStore,
    x: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, LstmStepCache]:
    if x.shape[-1] != cell.m:
        raise ShapeMismatch(f"{cell.prefix}: input width {x.shape[-1]} != {cell.m}")
    if h_prev.shape != c_prev.shape or h_prev.shape[-1] != cell.q:
        raise ShapeMismatch(f"{cell.prefix}: state shapes {h_prev.shape} / {c_prev.shape}")

    i = sigmoid(_pre_activation(cell, params, "i", x, h_prev))
    f = sigmoid(_pre_activation(cell, params, "f", x, h_prev))
    o = sigmoid(_pre_activation(cell, params, "o", x, h_prev))
    g = tanh(_pre_activation(cell, params, "c", x, h_prev))

    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, LstmStepCache(x=x, h_prev=h_prev, c_prev=c_prev, i=i, f=f, o=o, g=g, tc=tc)


def lstm_cell_backward(
    cell: LstmCell,
    params: ParamStore,
    cache: LstmStepCache,
    dh: np.ndarray,
    dc: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    dh, dc（このステップの出力側の勾配）から (dx, dh_prev, dc_prev) を返す。
    パラメータの勾配は ParamStore に加算する。
    """
    do = dh * cache.tc
    dc_total = dc + dh * cache.o * (1.0 - cache.tc ** 2)

    da = {
        "i": dc_total * cache.g * cache.i * (1.0 - cache.i),
        "f": dc_total * cache.c_prev * cache.f * (1.0 - cache.f),
        "o": do * cache.o * (1.0 - cache.o),
        "c": dc_total * cache.i * (1.0 - cache.g ** 2),
    }

    dx = np.zeros_like(cache.x)
    dh_prev = np.zeros_like(cache.h_prev)
    for gate in GATES:
        a = da[gate]
        U = params[cell.name("U", gate)]
        W = params[cell.name("W", gate)]
        params.grad(cell.name("U", gate))[...] += a.T @ cache.x
        params.grad(cell.name("W", gate))[...] += a.T @ cache.h_prev
        params.grad(cell.name("b", gate))[...] += a.sum(axis=0)
        dx += a @ U
        dh_prev += a @ W

    dc_prev = dc_total * cache.f
    return dx, dh_prev, dc_prev
