# src/apps/ais/services.py
from __future__ import annotations

import io
import logging
import math
from collections import defaultdict
from typing import BinaryIO, Iterable, Optional, Union

import numpy as np
import pandas as pd

from apps.common.errors import SchemaError, TooShort
from apps.geo.schemas import GeoPoint

from .schemas import (
    AisRecord,
    DatasetStats,
    ParseResult,
    ParseStats,
    PatternSpec,
    Polygon,
    SchemaConfig,
    Trajectory,
)

logger = logging.getLogger(__name__)

DEFAULT_GAP_SECONDS = 1800.0

_EPOCH = pd.Timestamp("1970-01-01", tz="UTC")


# ============================================================
# AIS 取り込みの流れ
#   parse_records -> assemble_trajectories -> label_trajectories -> resample
# どの段も純粋関数。MMSI 単位でデータを分ければ並列に回せる。
# ============================================================


# ------------------------------------------------------------
# Parse
# ------------------------------------------------------------
def parse_records(stream: Union[bytes, BinaryIO], schema: SchemaConfig) -> ParseResult:
    """
    区切り文字付きテキスト（ヘッダ行あり, UTF-8）を AisRecord のリストにする。

    仕様:
    - スキーマで指定した列がヘッダに無ければ SchemaError
    - 時刻/座標が読めない行、lat/lon が範囲外の行は捨ててカウントする
    - 列数がヘッダと合わない行、MMSI が整数でない行も同じ扱い
    - UTF-8 として読めないバイトは置換文字になる（その行はたいてい座標で落ちる）
    - 出力の順序は保証しない（後段でソートする）
    """
    data = stream if isinstance(stream, bytes) else stream.read()
    if not data.strip():
        logger.warning("AIS input is empty")
        return ParseResult(records=[], stats=ParseStats(rows_read=0, rows_dropped=0))

    # 列数が多すぎる行は読み飛ばして数える（足りない行は空欄で埋まり、後段の検査で落ちる）
    bad_lines: list[list[str]] = []

    def skip_bad_line(fields: list[str]) -> None:
        bad_lines.append(fields)

    df = pd.read_csv(
        io.BytesIO(data),
        sep=schema.delimiter,
        dtype=str,
        keep_default_na=False,
        encoding="utf-8",
        encoding_errors="replace",
        engine="python",
        on_bad_lines=skip_bad_line,
    ).fillna("")
    missing = [c for c in schema.mapped_columns if c not in df.columns]
    if missing:
        raise SchemaError(
            f"mapped columns not found in header: {', '.join(missing)}",
            header=list(df.columns),
        )

    ts = _parse_timestamps(df[schema.timestamp], schema.time_format)
    lat = pd.to_numeric(df[schema.lat], errors="coerce")
    lon = pd.to_numeric(df[schema.lon], errors="coerce")
    mmsi = pd.to_numeric(df[schema.mmsi], errors="coerce")

    ok = (
        np.isfinite(ts)
        & lat.between(-90.0, 90.0)
        & lon.between(-180.0, 180.0)
        & mmsi.notna()
        & (mmsi % 1 == 0)
    )
    ship_types = df[schema.ship_type] if schema.ship_type else None

    records: list[AisRecord] = []
    for idx in np.flatnonzero(ok.to_numpy()):
        records.append(
            AisRecord(
                timestamp=float(ts.iat[idx]),
                mmsi=int(mmsi.iat[idx]),
                position=GeoPoint(lat=float(lat.iat[idx]), lon=float(lon.iat[idx])),
                ship_type=(ship_types.iat[idx].strip() or None) if ship_types is not None else None,
            )
        )

    rows_read = len(df) + len(bad_lines)
    stats = ParseStats(rows_read=rows_read, rows_dropped=rows_read - len(records))
    if stats.rows_dropped:
        logger.info("dropped %d of %d AIS rows (unparsable or out of range)", stats.rows_dropped, stats.rows_read)
    return ParseResult(records=records, stats=stats)


def _parse_timestamps(col: pd.Series, time_format: Optional[str]) -> pd.Series:
    """
    epoch 秒（数値）か日時文字列を epoch 秒の float にする。読めないものは NaN。

    NOTE: time_format が無い場合の文字列は DMA 形式（日が先）として読む。
    """
    text = col.str.strip()
    if time_format:
        parsed = pd.to_datetime(text, format=time_format, errors="coerce", utc=True)
        return (parsed - _EPOCH).dt.total_seconds()

    seconds = pd.to_numeric(text, errors="coerce").astype(np.float64)
    need = seconds.isna() & (text.str.len() > 0)
    if need.any():
        parsed = pd.to_datetime(text[need], dayfirst=True, errors="coerce", utc=True)
        seconds.loc[need] = (parsed - _EPOCH).dt.total_seconds()
    return seconds


# ------------------------------------------------------------
# Assemble
# ------------------------------------------------------------
def assemble_trajectories(
    records: Iterable[AisRecord],
    *,
    gap_threshold: float = DEFAULT_GAP_SECONDS,
    ship_type: Optional[str] = None,
) -> list[Trajectory]:
    """
    MMSI ごとに時刻順に並べて航跡にする（ラベルなし）。

    仕様:
    - 同一時刻の重複は最初のレポートを残す
    - 時間差が gap_threshold を超えたら別の航跡に分ける
    - 2点未満の航跡は捨てる
    - ship_type を指定した場合は、その船種（大文字小文字は無視）のレポートだけ使う
    """
    if gap_threshold <= 0:
        raise SchemaError("gap_threshold must be positive", gap_threshold=gap_threshold)

    wanted = ship_type.strip().lower() if ship_type else None
    by_mmsi: dict[int, list[AisRecord]] = defaultdict(list)
    for r in records:
        if wanted is not None and (r.ship_type or "").strip().lower() != wanted:
            continue
        by_mmsi[r.mmsi].append(r)

    trajectories: list[Trajectory] = []
    for mmsi in sorted(by_mmsi):
        # 安定ソートなので、同時刻なら入力順で最初のものが先頭に来る
        reports = sorted(by_mmsi[mmsi], key=lambda r: r.timestamp)
        segment: list[AisRecord] = []
        for r in reports:
            if segment and r.timestamp == segment[-1].timestamp:
                continue
            if segment and r.timestamp - segment[-1].timestamp > gap_threshold:
                _flush(segment, trajectories)
                segment = []
            segment.append(r)
        _flush(segment, trajectories)

    logger.info("assembled %d trajectories from %d vessels", len(trajectories), len(by_mmsi))
    return trajectories


def _flush(segment: list[AisRecord], out: list[Trajectory]) -> None:
    if len(segment) < 2:
        return
    out.append(
        Trajectory(
            traj_id=len(out),
            mmsi=segment[0].mmsi,
            times=tuple(r.timestamp for r in segment),
            states=tuple(r.position for r in segment),
        )
    )


# ------------------------------------------------------------
# Polygon gating
# ------------------------------------------------------------
def point_in_polygon(p: GeoPoint, poly: Polygon) -> bool:
    """
    (lon, lat) 平面での偶奇レイキャスト判定。辺上の点は内側扱い。
    """
    x, y = p.lon, p.lat
    ring = [(v.lon, v.lat) for v in poly.vertices]
    n = len(ring)

    for i in range(n):
        (x1, y1), (x2, y2) = ring[i], ring[(i + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if cross == 0 and min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2):
            return True

    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def match_pattern(traj: Trajectory, spec: PatternSpec) -> Optional[int]:
    """
    origin に初めて入った後、最初に入った destination の番号を返す。

    NOTE:
    - 「origin から出発する」ではなく「origin を通過する」扱い（最初の進入時刻で判定）
    - 同じ状態が複数の destination に入っている場合は番号の小さい方
    - 順序どおりの通過が無ければ None
    """
    origin_at: Optional[int] = None
    for k, s in enumerate(traj.states):
        if point_in_polygon(s, spec.origin):
            origin_at = k
            break
    if origin_at is None:
        return None

    for s in traj.states[origin_at + 1:]:
        for j, dest in enumerate(spec.destinations):
            if point_in_polygon(s, dest):
                return j
    return None


def label_trajectories(trajectories: Iterable[Trajectory], spec: PatternSpec) -> list[Trajectory]:
    """パターンに一致した航跡だけをラベル付きで返す。"""
    labeled = []
    for traj in trajectories:
        label = match_pattern(traj, spec)
        if label is not None:
            labeled.append(traj.with_label(label))
    return labeled


# ------------------------------------------------------------
# Resample
# ------------------------------------------------------------
def resample(traj: Trajectory, delta: float) -> Trajectory:
    """
    絶対時刻のグリッド t = kΔ 上に線形補間する。

    仕様:
    - 元の最初/最後の時刻の範囲に入るグリッド点だけを使う
    - グリッド点が2つ未満なら TooShort
    - ラベルはそのまま引き継ぐ
    """
    if delta <= 0:
        raise SchemaError("delta must be positive", delta=delta)
    if traj.duration < delta:
        raise TooShort(traj_id=traj.traj_id, duration=traj.duration, delta=delta)

    k_first = math.ceil(traj.times[0] / delta)
    k_last = math.floor(traj.times[-1] / delta)
    if k_last - k_first + 1 < 2:
        raise TooShort(traj_id=traj.traj_id, duration=traj.duration, delta=delta)

    grid = np.arange(k_first, k_last + 1, dtype=np.float64) * delta
    times = np.asarray(traj.times, dtype=np.float64)
    lonlat = traj.lonlat
    lon = np.interp(grid, times, lonlat[:, 0])
    lat = np.interp(grid, times, lonlat[:, 1])

    return Trajectory(
        traj_id=traj.traj_id,
        mmsi=traj.mmsi,
        times=tuple(float(t) for t in grid),
        states=tuple(GeoPoint(lat=float(a), lon=float(o)) for a, o in zip(lat, lon)),
        label=traj.label,
    )


def resample_all(trajectories: Iterable[Trajectory], delta: float) -> list[Trajectory]:
    """TooShort になった航跡は捨てる。"""
    out = []
    skipped = 0
    for traj in trajectories:
        try:
            out.append(resample(traj, delta))
        except TooShort:
            skipped += 1
    if skipped:
        logger.info("discarded %d trajectories shorter than the resampling grid", skipped)
    return out


# ------------------------------------------------------------
# Stats
# ------------------------------------------------------------
def dataset_stats(
    *,
    parse_stats: ParseStats,
    raw: list[Trajectory],
    labeled: list[Trajectory],
    resampled: list[Trajectory],
    pattern_names: list[str],
) -> DatasetStats:
    gaps = [b - a for t in raw for a, b in zip(t.times, t.times[1:])]
    per_pattern = {name: 0 for name in pattern_names}
    for t in resampled:
        if t.label is not None:
            per_pattern[pattern_names[t.label]] += 1
    return DatasetStats(
        n_records=parse_stats.rows_read - parse_stats.rows_dropped,
        n_dropped=parse_stats.rows_dropped,
        n_raw_trajectories=len(raw),
        n_labeled=len(labeled),
        n_resampled=len(resampled),
        mean_report_interval_sec=float(np.mean(gaps)) if gaps else 0.0,
        mean_length=float(np.mean([len(t) for t in resampled])) if resampled else 0.0,
        per_pattern=per_pattern,
    )
