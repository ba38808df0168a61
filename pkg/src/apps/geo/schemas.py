# src/apps/geo/schemas.py
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from django.core.exceptions import ValidationError


@dataclass(frozen=True)
class GeoPoint:
    """緯度・経度（度）。"""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValidationError({"position": "座標が有限値ではありません"})
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError({"lat": f"lat out of range: {self.lat}"})
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError({"lon": f"lon out of range: {self.lon}"})


@dataclass(frozen=True)
class Standardizer:
    """
    学習前の座標標準化（アフィン変換）。

    NOTE:
    - 2次元ベクトルは常に [lon, lat] の順（列0=経度, 列1=緯度）
    - 学習側データだけで fit し、検証/テストにはそのまま使い回す
    """

    mean: tuple[float, float]
    std: tuple[float, float]

    def __post_init__(self) -> None:
        if not all(s > 0.0 for s in self.std):
            raise ValidationError({"std": "std components must be strictly positive"})

    # -----------------------------
    # 1点
    # -----------------------------
    def apply(self, p: GeoPoint) -> np.ndarray:
        return np.array(
            [(p.lon - self.mean[0]) / self.std[0], (p.lat - self.mean[1]) / self.std[1]],
            dtype=np.float64,
        )

    def invert(self, v: np.ndarray) -> GeoPoint:
        lon = float(v[0]) * self.std[0] + self.mean[0]
        lat = float(v[1]) * self.std[1] + self.mean[1]
        return GeoPoint(lat=lat, lon=lon)

    # -----------------------------
    # N×2 配列（評価・窓切り出しで使う）
    # -----------------------------
    def apply_array(self, lonlat: np.ndarray) -> np.ndarray:
        return (np.asarray(lonlat, dtype=np.float64) - np.asarray(self.mean)) / np.asarray(self.std)

    def invert_array(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) * np.asarray(self.std) + np.asarray(self.mean)

    def to_dict(self) -> dict[str, Any]:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Standardizer":
        mean = data["mean"]
        std = data["std"]
        return cls(mean=(float(mean[0]), float(mean[1])), std=(float(std[0]), float(std[1])))
