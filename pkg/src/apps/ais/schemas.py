# src/apps/ais/schemas.py
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from apps.common.errors import FileFormatError, SchemaError
from apps.geo.schemas import GeoPoint


@dataclass(frozen=True)
class AisRecord:
    """1隻の1回分の位置レポート。timestamp は UTC の epoch 秒。"""

    timestamp: float
    mmsi: int
    position: GeoPoint
    ship_type: Optional[str] = None


@dataclass(frozen=True)
class Trajectory:
    """
    1隻ぶんの時系列（状態は GeoPoint）。

    NOTE:
    - times は狭義単調増加、長さは 2 以上
    - label は動きのパターン番号（0..P-1）。未ラベルなら None
    """

    traj_id: int
    mmsi: int
    times: tuple[float, ...]
    states: tuple[GeoPoint, ...]
    label: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states):
            raise FileFormatError("times and states differ in length", traj_id=self.traj_id)
        if len(self.times) < 2:
            raise FileFormatError("trajectory needs at least 2 states", traj_id=self.traj_id)
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise FileFormatError("times must be strictly increasing", traj_id=self.traj_id)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def lonlat(self) -> np.ndarray:
        """T×2 の [lon, lat] 配列。"""
        return np.array([(s.lon, s.lat) for s in self.states], dtype=np.float64)

    @property
    def duration(self) -> float:
        return self.times[-1] - self.times[0]

    def with_label(self, label: Optional[int]) -> "Trajectory":
        return replace(self, label=label)


@dataclass(frozen=True)
class Polygon:
    """
    判定用の多角形エリア（PGA）。頂点は暗黙に閉じる（最後→最初の辺を持つ）。
    """

    name: str
    vertices: tuple[GeoPoint, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 3:
            raise FileFormatError(f"polygon {self.name!r} needs at least 3 vertices")
        if not _is_simple_ring([(v.lon, v.lat) for v in self.vertices]):
            raise FileFormatError(f"polygon {self.name!r} is self-intersecting")


@dataclass(frozen=True)
class PatternSpec:
    """pattern j = origin を通過したあと destinations[j] に入る航路。"""

    origin: Polygon
    destinations: tuple[Polygon, ...]

    def __post_init__(self) -> None:
        if not self.destinations:
            raise FileFormatError("at least one destination polygon is required")
        names = [self.origin.name] + [d.name for d in self.destinations]
        if len(set(names)) != len(names):
            raise FileFormatError("polygon names must be unique", names=names)

    @property
    def pattern_names(self) -> list[str]:
        return [d.name for d in self.destinations]


# -----------------------------
# CSV スキーマ設定
# -----------------------------
_DELIMITER_ALIASES = {"comma": ",", "semicolon": ";", "tab": "\t", "pipe": "|"}
_SCHEMA_KEYS = ("timestamp", "mmsi", "lat", "lon", "ship_type", "delimiter", "time_format")


@dataclass(frozen=True)
class SchemaConfig:
    """
    CSV の列名マッピング。

    例（DMA の公開データ）:
        timestamp=# Timestamp
        mmsi=MMSI
        lat=Latitude
        lon=Longitude
        ship_type=Ship type
        time_format=%d/%m/%Y %H:%M:%S
    """

    timestamp: str
    mmsi: str
    lat: str
    lon: str
    ship_type: Optional[str] = None
    delimiter: str = ","
    time_format: Optional[str] = None

    @property
    def mapped_columns(self) -> list[str]:
        cols = [self.timestamp, self.mmsi, self.lat, self.lon]
        if self.ship_type:
            cols.append(self.ship_type)
        return cols

    @classmethod
    def parse(cls, text: str) -> "SchemaConfig":
        """
        key=value を1行1組（ファイル）またはカンマ区切り（インライン）で受け取る。
        """
        if "\n" in text.strip():
            pairs = text.splitlines()
        else:
            pairs = text.split(",")

        values: dict[str, str] = {}
        for raw in pairs:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"schema entry is not key=value: {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in _SCHEMA_KEYS:
                raise SchemaError(f"unknown schema key: {key!r}")
            values[key] = value.strip()

        missing = [k for k in ("timestamp", "mmsi", "lat", "lon") if not values.get(k)]
        if missing:
            raise SchemaError(f"schema is missing keys: {', '.join(missing)}")

        delimiter = values.get("delimiter") or ","
        delimiter = _DELIMITER_ALIASES.get(delimiter.lower(), delimiter)
        return cls(
            timestamp=values["timestamp"],
            mmsi=values["mmsi"],
            lat=values["lat"],
            lon=values["lon"],
            ship_type=values.get("ship_type") or None,
            delimiter=delimiter,
            time_format=values.get("time_format") or None,
        )

    def to_text(self) -> str:
        lines = [
            f"timestamp={self.timestamp}",
            f"mmsi={self.mmsi}",
            f"lat={self.lat}",
            f"lon={self.lon}",
        ]
        if self.ship_type:
            lines.append(f"ship_type={self.ship_type}")
        inverse = {v: k for k, v in _DELIMITER_ALIASES.items()}
        lines.append(f"delimiter={inverse.get(self.delimiter, self.delimiter)}")
        if self.time_format:
            lines.append(f"time_format={self.time_format}")
        return "\n".join(lines) + "\n"


# -----------------------------
# 集計結果（コマンド表示用）
# -----------------------------
@dataclass(frozen=True)
class ParseStats:
    rows_read: int
    rows_dropped: int


@dataclass(frozen=True)
class ParseResult:
    records: list[AisRecord]
    stats: ParseStats


@dataclass(frozen=True)
class DatasetStats:
    """
    prepare の結果サマリ。

    NOTE:
    - mean_report_interval_sec はリサンプル前（生レポート）の平均間隔
    - per_pattern は pattern 名 -> 本数
    """

    n_records: int
    n_dropped: int
    n_raw_trajectories: int
    n_labeled: int
    n_resampled: int
    mean_report_interval_sec: float
    mean_length: float
    per_pattern: dict[str, int] = field(default_factory=dict)


def _is_simple_ring(xy: list[tuple[float, float]]) -> bool:
    n = len(xy)
    edges = [(xy[i], xy[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # 隣接辺（共有頂点）は除外
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    if d1 == 0 and _on_segment(p3, p4, p1):
        return True
    if d2 == 0 and _on_segment(p3, p4, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, p3):
        return True
    if d4 == 0 and _on_segment(p1, p2, p4):
        return True
    return False
