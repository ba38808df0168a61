# src/apps/nn/params.py
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from apps.common.errors import ShapeMismatch


@dataclass
class Param:
    """1つの学習パラメータと、同じ形の勾配・Adam モーメント。"""

    value: np.ndarray
    grad: np.ndarray
    m: np.ndarray
    v: np.ndarray


class ParamStore:
    """
    名前付きパラメータの集合（θ）。

    絶対ルール:
    - value は常に同じ配列オブジェクトを使い回す（更新・ロードは in-place）
    - 勾配は backward で「加算」する。adam_step の後でゼロに戻る
    - 名前の重複は許さない
    """

    def __init__(self) -> None:
        self._slots: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._slots:
            raise ValueError(f"duplicate parameter name: {name}")
        value = np.array(value, dtype=np.float64)
        self._slots[name] = Param(
            value=value,
            grad=np.zeros_like(value),
            m=np.zeros_like(value),
            v=np.zeros_like(value),
        )
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._slots[name].value

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def __iter__(self) -> Iterator[str]:
        return iter(self._slots)

    def __len__(self) -> int:
        return len(self._slots)

    def slot(self, name: str) -> Param:
        return self._slots[name]

    def grad(self, name: str) -> np.ndarray:
        return self._slots[name].grad

    def items(self) -> Iterator[tuple[str, Param]]:
        return iter(self._slots.items())

    @property
    def size(self) -> int:
        return sum(p.value.size for p in self._slots.values())

    def zero_grad(self) -> None:
        for p in self._slots.values():
            p.grad.fill(0.0)

    def norms(self) -> dict[str, float]:
        return {name: float(np.linalg.norm(p.value)) for name, p in self._slots.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._slots.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        """in-place で値を書き戻す（モデル側の参照を切らない）。"""
        for name, p in self._slots.items():
            if name not in values:
                raise ShapeMismatch(f"missing parameter in snapshot: {name}")
            src = np.asarray(values[name], dtype=np.float64)
            if src.shape != p.value.shape:
                raise ShapeMismatch(f"{name}: {src.shape} != {p.value.shape}")
            p.value[...] = src

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.value)) for p in self._slots.values())


# ------------------------------------------------------------
# Adam
# ------------------------------------------------------------
@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        # lr=0 は「学習を止めた」状態として許す（early stopping の動作確認用）
        if not (self.lr >= 0.0 and math.isfinite(self.lr)):
            raise ValueError(f"lr must be >= 0: {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must be in [0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")

    def to_dict(self) -> dict[str, float]:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}


def adam_step(params: ParamStore, t: int, cfg: AdamConfig) -> None:
    """
    バイアス補正つき Adam で in-place 更新し、勾配をゼロに戻す。
    """
    if t < 1:
        raise ValueError("adam step index starts at 1")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for _, p in params.items():
        g = p.grad
        p.m *= cfg.beta1
        p.m += (1.0 - cfg.beta1) * g
        p.v *= cfg.beta2
        p.v += (1.0 - cfg.beta2) * (g * g)
        m_hat = p.m / bc1
        v_hat = p.v / bc2
        p.value -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
        g.fill(0.0)
