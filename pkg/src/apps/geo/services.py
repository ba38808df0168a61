# src/apps/geo/services.py
from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from apps.common.errors import DegenerateData

from .schemas import GeoPoint, Standardizer

# 地球の平均半径 6371.0088 km を海里に換算（÷1.852）
EARTH_RADIUS_NMI = 3440.065


def haversine_nmi(a: GeoPoint, b: GeoPoint) -> float:
    """2点間の大円距離（海里）。"""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon) - math.radians(a.lon)

    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    # 丸めで 1 をわずかに超えると asin が落ちる
    return 2.0 * EARTH_RADIUS_NMI * math.asin(math.sqrt(min(1.0, h)))


def haversine_nmi_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """haversine_nmi のベクトル版（評価で N×h 個まとめて計算する）。"""
    lat1 = np.radians(np.asarray(lat1, dtype=np.float64))
    lat2 = np.radians(np.asarray(lat2, dtype=np.float64))
    dlat = lat2 - lat1
    dlon = np.radians(np.asarray(lon2, dtype=np.float64)) - np.radians(np.asarray(lon1, dtype=np.float64))

    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_NMI * np.arcsin(np.sqrt(np.minimum(1.0, h)))


def fit_standardizer(points: Iterable[GeoPoint]) -> Standardizer:
    """
    平均0・分散1 になるアフィン変換を求める。

    仕様:
    - 母標準偏差（N で割る）を使う
    - どちらかの座標の分散が 0 なら DegenerateData
    """
    lonlat = np.array([(p.lon, p.lat) for p in points], dtype=np.float64).reshape(-1, 2)
    return fit_standardizer_array(lonlat)


def fit_standardizer_array(lonlat: np.ndarray) -> Standardizer:
    if lonlat.shape[0] < 2:
        raise DegenerateData("at least 2 points are required to fit a standardizer", count=int(lonlat.shape[0]))
    mean = lonlat.mean(axis=0)
    std = lonlat.std(axis=0)
    if not np.all(std > 0.0):
        raise DegenerateData("coordinate has zero variance", std=std.tolist())
    return Standardizer(mean=(float(mean[0]), float(mean[1])), std=(float(std[0]), float(std[1])))
