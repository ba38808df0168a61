# src/apps/nn/schemas.py
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Optional, Protocol

import numpy as np

from apps.common.errors import ConfigMismatch

from .params import ParamStore

MODEL_KINDS = ("linear", "mlp", "encdec")
AGGREGATIONS = ("max", "avg", "attn")


@dataclass(frozen=True)
class ModelConfig:
    """
    モデルの形を決める設定。チェックポイントにも一緒に保存する。

    NOTE:
    - aggregation は encdec のときだけ意味を持つ
    - labeled=True のときは P >= 1 が必須（ψ の次元）
    """

    kind: str
    ell: int
    h: int
    d: int = 2
    P: int = 0
    labeled: bool = False
    aggregation: Optional[str] = None
    hidden: int = 64
    mlp_width: int = 512
    teacher_forcing: bool = False

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigMismatch(f"unknown model kind: {self.kind}")
        if self.kind == "encdec" and self.aggregation not in AGGREGATIONS:
            raise ConfigMismatch(f"encdec needs aggregation in {AGGREGATIONS}, got {self.aggregation!r}")
        if self.kind != "encdec" and self.aggregation is not None:
            raise ConfigMismatch(f"aggregation is only valid for encdec, got {self.aggregation!r}")
        if min(self.ell, self.h, self.d, self.hidden, self.mlp_width) < 1:
            raise ConfigMismatch("ell, h, d, hidden and mlp_width must be positive")
        if self.labeled and self.P < 1:
            raise ConfigMismatch("labeled models need P >= 1")

    @property
    def model_id(self) -> str:
        return f"encdec-{self.aggregation}" if self.kind == "encdec" else self.kind

    @property
    def psi_dim(self) -> int:
        return self.P if self.labeled else 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        return cls(**data)


class TrajectoryModel(Protocol):
    """
    全モデル共通のインターフェース。

    - forward: (B×ℓ×d, B×P|None) -> (B×h×d, cache)。Y は teacher forcing 用
    - backward: cache と dL/dŶ から ParamStore の勾配に加算する
    - predict: 推論だけ（cache を作らない）
    """

    config: ModelConfig
    params: ParamStore

    def forward(
        self, X: np.ndarray, psi: Optional[np.ndarray] = None, *, Y: Optional[np.ndarray] = None
    ) -> tuple[np.ndarray, Any]: ...

    def backward(self, cache: Any, dY: np.ndarray) -> None: ...

    def predict(self, X: np.ndarray, psi: Optional[np.ndarray] = None) -> np.ndarray: ...
