# src/apps/baselines/services.py
"""
比較用のベースライン（多出力線形回帰と 2層 MLP）。

どちらも入力 X（B×ℓ×d）を平坦化し、ラベル付きなら ψ をそのまま後ろに連結する。
出力は h·d 個の値を B×h×d に並べ直したもの。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from apps.common.errors import ConfigMismatch, ShapeMismatch
from apps.nn.initializers import init_he, init_xavier
from apps.nn.ops import affine, relu
from apps.nn.params import ParamStore
from apps.nn.rng import as_rng
from apps.nn.schemas import ModelConfig

logger = logging.getLogger(__name__)

RIDGE = 1e-8


def flatten_inputs(config: ModelConfig, X: np.ndarray, psi: Optional[np.ndarray]) -> np.ndarray:
    """
    B×ℓ×d（+ B×P）-> B×(ℓ·d [+ P])。

    NOTE: ラベル無しモデルに渡された ψ は捨てる。ラベル付きで ψ が無ければ ConfigMismatch。
    """
    if X.ndim != 3 or X.shape[1:] != (config.ell, config.d):
        raise ShapeMismatch(f"expected B×{config.ell}×{config.d} input, got {X.shape}")
    flat = X.reshape(X.shape[0], -1)
    if not config.labeled:
        return flat
    if psi is None:
        raise ConfigMismatch("labeled model needs a journey descriptor (psi)")
    if psi.shape != (X.shape[0], config.P):
        raise ShapeMismatch(f"psi shape {psi.shape} != ({X.shape[0]}, {config.P})")
    return np.concatenate([flat, psi], axis=1)


def input_width(config: ModelConfig) -> int:
    return config.ell * config.d + config.psi_dim


class LinearModel:
    """
    Ŷ = flat(X, ψ) Wᵀ + b。W は (h·d)×(ℓ·d + P·labeled)。

    学習は fit（閉形式）で1回だけ行う。forward/backward は他モデルと同じ形で持っておく。
    """

    def __init__(self, config: ModelConfig, seed=0) -> None:
        if config.kind != "linear":
            raise ConfigMismatch(f"LinearModel needs kind=linear, got {config.kind}")
        self.config = config
        self.params = ParamStore()
        n_out = config.h * config.d
        self.params.add("linear.W", np.zeros((n_out, input_width(config))))
        self.params.add("linear.b", np.zeros(n_out))

    def fit(self, X: np.ndarray, Y: np.ndarray, psi: Optional[np.ndarray] = None) -> None:
        """
        減衰付き正規方程式 (AᵀA + 1e-8·I) w = AᵀY を解く（A = [flat, 1]）。

        仕様:
        - 出力座標ごとに独立な最小二乗（まとめて1回の solve で解く）
        - 減衰はバイアス列も含めた対角全体に入れる。サンプル不足でも解ける
        """
        A = flatten_inputs(self.config, X, psi)
        if Y.shape != (X.shape[0], self.config.h, self.config.d):
            raise ShapeMismatch(f"targets {Y.shape} do not match {self.config.h}×{self.config.d}")
        A = np.concatenate([A, np.ones((A.shape[0], 1))], axis=1)
        T = Y.reshape(Y.shape[0], -1)

        gram = A.T @ A + RIDGE * np.eye(A.shape[1])
        coef = np.linalg.solve(gram, A.T @ T)
        self.params.load({"linear.W": coef[:-1].T, "linear.b": coef[-1]})
        logger.debug("linear fit on %d samples, %d inputs", A.shape[0], A.shape[1] - 1)

    def forward(
        self, X: np.ndarray, psi: Optional[np.ndarray] = None, *, Y: Optional[np.ndarray] = None
    ) -> tuple[np.ndarray, np.ndarray]:
        flat = flatten_inputs(self.config, X, psi)
        out = affine(flat, self.params["linear.W"], self.params["linear.b"])
        return out.reshape(X.shape[0], self.config.h, self.config.d), flat

    def backward(self, cache: np.ndarray, dY: np.ndarray) -> None:
        g = dY.reshape(dY.shape[0], -1)
        self.params.grad("linear.W")[...] += g.T @ cache
        self.params.grad("linear.b")[...] += g.sum(axis=0)

    def predict(self, X: np.ndarray, psi: Optional[np.ndarray] = None) -> np.ndarray:
        return self.forward(X, psi)[0]


@dataclass
class MlpCache:
    x0: np.ndarray
    a1: np.ndarray
    x1: np.ndarray
    a2: np.ndarray
    x2: np.ndarray


class MlpModel:
    """
    flat -> affine -> ReLU -> affine -> ReLU -> affine（ヘッド）-> h×d

    初期化: 隠れ層は He、ヘッドは Xavier、バイアスは 0。
    """

    def __init__(self, config: ModelConfig, seed=0) -> None:
        if config.kind != "mlp":
            raise ConfigMismatch(f"MlpModel needs kind=mlp, got {config.kind}")
        self.config = config
        self.params = ParamStore()
        rng = as_rng(seed)
        width = config.mlp_width
        n_out = config.h * config.d
        self.params.add("mlp.W1", init_he((width, input_width(config)), rng))
        self.params.add("mlp.b1", np.zeros(width))
        self.params.add("mlp.W2", init_he((width, width), rng))
        self.params.add("mlp.b2", np.zeros(width))
        self.params.add("mlp.W3", init_xavier((n_out, width), rng))
        self.params.add("mlp.b3", np.zeros(n_out))

    def forward(
        self, X: np.ndarray, psi: Optional[np.ndarray] = None, *, Y: Optional[np.ndarray] = None
    ) -> tuple[np.ndarray, MlpCache]:
        P = self.params
        x0 = flatten_inputs(self.config, X, psi)
        a1 = affine(x0, P["mlp.W1"], P["mlp.b1"])
        x1 = relu(a1)
        a2 = affine(x1, P["mlp.W2"], P["mlp.b2"])
        x2 = relu(a2)
        out = affine(x2, P["mlp.W3"], P["mlp.b3"])
        cache = MlpCache(x0=x0, a1=a1, x1=x1, a2=a2, x2=x2)
        return out.reshape(X.shape[0], self.config.h, self.config.d), cache

    def backward(self, cache: MlpCache, dY: np.ndarray) -> None:
        P = self.params
        g = dY.reshape(dY.shape[0], -1)

        P.grad("mlp.W3")[...] += g.T @ cache.x2
        P.grad("mlp.b3")[...] += g.sum(axis=0)
        g = (g @ P["mlp.W3"]) * (cache.a2 > 0)

        P.grad("mlp.W2")[...] += g.T @ cache.x1
        P.grad("mlp.b2")[...] += g.sum(axis=0)
        g = (g @ P["mlp.W2"]) * (cache.a1 > 0)

        P.grad("mlp.W1")[...] += g.T @ cache.x0
        P.grad("mlp.b1")[...] += g.sum(axis=0)

    def predict(self, X: np.ndarray, psi: Optional[np.ndarray] = None) -> np.ndarray:
        return self.forward(X, psi)[0]
