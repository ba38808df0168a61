# src/apps/pipeline/synth.py
"""
分岐する2航路の合成 AIS データ。

    S ──(共通の回廊 約50nmi)── 分岐点 ──┬── A（北東へ 約50nmi）
                                        └── B（南東へ 約50nmi）

NOTE:
- origin の箱は回廊の入口にある（航跡は箱の少し手前から始まり、箱を通過する）
- 船ごとに速度のばらつきと航路からの横ずれ、レポートごとにガウスノイズ
- 同じ seed なら同じバイト列
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from apps.ais.schemas import PatternSpec, Polygon, SchemaConfig
from apps.common.errors import ConfigMismatch
from apps.geo.schemas import GeoPoint
from apps.nn.rng import make_rng

logger = logging.getLogger(__name__)

# 局所平面の基準点（lat, lon）
_REF = (55.05, 9.95)
_NMI_PER_DEG = 60.0

# 航路の折れ点（lat, lon）
ROUTES: dict[str, tuple[tuple[float, float], ...]] = {
    "A": ((55.05, 9.95), (55.05, 11.40), (55.75, 12.30)),
    "B": ((55.05, 9.95), (55.05, 11.40), (54.35, 12.30)),
}

# 判定用の箱 (lat_min, lat_max, lon_min, lon_max)
_BOXES = {
    "O": (54.98, 55.12, 9.98, 10.12),
    "A": (55.65, 55.85, 12.15, 12.45),
    "B": (54.25, 54.45, 12.15, 12.45),
}

# DMA の公開 CSV に合わせた列名
SCHEMA = SchemaConfig(
    timestamp="# Timestamp",
    mmsi="MMSI",
    lat="Latitude",
    lon="Longitude",
    ship_type="Ship type",
    time_format="%d/%m/%Y %H:%M:%S",
)

_START_EPOCH = 1577836800  # 2020-01-01T00:00:00Z


@dataclass(frozen=True)
class SynthConfig:
    vessels_per_route: int = 60
    seed: int = 0
    speed_kn: float = 12.0
    speed_jitter_kn: float = 1.0
    offset_nmi: float = 0.5
    noise_nmi: float = 0.05
    report_sec: int = 60

    def __post_init__(self) -> None:
        if self.vessels_per_route < 1:
            raise ConfigMismatch("vessels_per_route must be >= 1", vessels_per_route=self.vessels_per_route)
        if self.speed_kn <= 0 or self.report_sec <= 0:
            raise ConfigMismatch("speed_kn and report_sec must be positive", speed_kn=self.speed_kn)
        if self.noise_nmi < 0 or self.offset_nmi < 0 or self.speed_jitter_kn < 0:
            raise ConfigMismatch("noise, offset and jitter must be non-negative", noise_nmi=self.noise_nmi)


def _to_xy(lat: float, lon: float) -> np.ndarray:
    coslat = np.cos(np.radians(_REF[0]))
    return np.array([(lon - _REF[1]) * _NMI_PER_DEG * coslat, (lat - _REF[0]) * _NMI_PER_DEG])


def _to_latlon(xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    coslat = np.cos(np.radians(_REF[0]))
    lat = _REF[0] + xy[:, 1] / _NMI_PER_DEG
    lon = _REF[1] + xy[:, 0] / (_NMI_PER_DEG * coslat)
    return lat, lon


def _box(name: str) -> Polygon:
    lat0, lat1, lon0, lon1 = _BOXES[name]
    return Polygon(
        name=name,
        vertices=(GeoPoint(lat0, lon0), GeoPoint(lat0, lon1), GeoPoint(lat1, lon1), GeoPoint(lat1, lon0)),
    )


def synth_polygons() -> PatternSpec:
    return PatternSpec(origin=_box("O"), destinations=(_box("A"), _box("B")))


def _walk(route: str, s: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """
    折れ線上の距離 s（nmi）の点を、その区間の左法線方向に offset だけずらした xy。
    """
    pts = np.stack([_to_xy(lat, lon) for lat, lon in ROUTES[route]])
    seg = np.diff(pts, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])

    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    u = ((s - cum[idx]) / lengths[idx])[:, None]
    base = pts[idx] + u * seg[idx]
    normal = np.stack([-seg[idx, 1], seg[idx, 0]], axis=1) / lengths[idx, None]
    return base + offset[:, None] * normal


def route_length(route: str) -> float:
    pts = np.stack([_to_xy(lat, lon) for lat, lon in ROUTES[route]])
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def simulate_vessel(route: str, index: int, cfg: SynthConfig) -> pd.DataFrame:
    rng = make_rng(cfg.seed, "synth", route, index)
    speed = float(np.clip(rng.normal(cfg.speed_kn, cfg.speed_jitter_kn), 0.5 * cfg.speed_kn, 1.5 * cfg.speed_kn))
    cross = rng.normal(0.0, cfg.offset_nmi)
    # 出発時刻は船ごとにずらす（Δ のグリッドと揃わないように秒単位の端数も入れる）
    t0 = _START_EPOCH + 600 * (2 * index + (0 if route == "A" else 1)) + int(rng.integers(0, cfg.report_sec))

    total = route_length(route)
    n = int(total / speed * 3600.0 // cfg.report_sec) + 1
    elapsed = np.arange(n, dtype=np.int64) * cfg.report_sec
    s = np.minimum(elapsed * speed / 3600.0, total)
    xy = _walk(route, s, np.full(n, cross)) + rng.normal(0.0, cfg.noise_nmi, size=(n, 2))
    lat, lon = _to_latlon(xy)

    mmsi = 219000000 + (0 if route == "A" else 500000) + index
    stamps = pd.to_datetime(t0 + elapsed, unit="s", utc=True).strftime(SCHEMA.time_format)
    return pd.DataFrame(
        {
            SCHEMA.timestamp: stamps,
            "Type of mobile": "Class A",
            SCHEMA.mmsi: mmsi,
            SCHEMA.lat: np.round(lat, 6),
            SCHEMA.lon: np.round(lon, 6),
            SCHEMA.ship_type: "Cargo",
            "_t": t0 + elapsed,
        }
    )


def generate_ais_csv(cfg: SynthConfig) -> bytes:
    """全船のレポートを時刻順（同時刻は MMSI 順）に並べた CSV。"""
    frames = [simulate_vessel(route, i, cfg) for route in ROUTES for i in range(cfg.vessels_per_route)]
    df = pd.concat(frames, ignore_index=True)
    df = df.sort_values(["_t", SCHEMA.mmsi], kind="mergesort").drop(columns="_t")

    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format="%.6f", lineterminator="\n")
    logger.info("generated %d AIS reports for %d vessels", len(df), len(frames))
    return buf.getvalue().encode("utf-8")
