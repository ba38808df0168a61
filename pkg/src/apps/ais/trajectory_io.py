# src/apps/ais/trajectory_io.py
"""
正規化済み航跡ファイル（下流のすべての処理の入力）。

    # seatrack-trajectories v1
    # delta_sec=900
    # patterns=A,B
    traj_id,mmsi,label_or_dash,timestamp,lat,lon
    ...

数値は repr で書くので読み戻すとビット単位で一致する。
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from django.core.exceptions import ValidationError

from apps.common.errors import FileFormatError
from apps.geo.schemas import GeoPoint

from .schemas import Trajectory

MAGIC = "# seatrack-trajectories v1"


@dataclass(frozen=True)
class TrajectoryFile:
    trajectories: list[Trajectory]
    delta_sec: Optional[float]
    pattern_names: list[str]

    @property
    def n_patterns(self) -> int:
        if self.pattern_names:
            return len(self.pattern_names)
        labels = [t.label for t in self.trajectories if t.label is not None]
        return max(labels) + 1 if labels else 0

    @property
    def is_labeled(self) -> bool:
        return bool(self.trajectories) and all(t.label is not None for t in self.trajectories)


def format_trajectories(
    trajectories: Iterable[Trajectory],
    *,
    delta_sec: Optional[float] = None,
    pattern_names: Optional[list[str]] = None,
) -> str:
    lines = [MAGIC]
    if delta_sec is not None:
        lines.append(f"# delta_sec={delta_sec!r}")
    if pattern_names:
        lines.append(f"# patterns={','.join(pattern_names)}")
    for t in trajectories:
        label = "-" if t.label is None else str(t.label)
        for ts, s in zip(t.times, t.states):
            lines.append(f"{t.traj_id},{t.mmsi},{label},{ts!r},{s.lat!r},{s.lon!r}")
    return "\n".join(lines) + "\n"


def write_trajectories(path: Path, trajectories: Iterable[Trajectory], **kwargs) -> None:
    Path(path).write_text(format_trajectories(trajectories, **kwargs), encoding="utf-8")


def parse_trajectories(text: str) -> TrajectoryFile:
    delta_sec: Optional[float] = None
    pattern_names: list[str] = []
    rows: dict[int, list] = {}
    order: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("delta_sec="):
                delta_sec = float(body.split("=", 1)[1])
            elif body.startswith("patterns="):
                pattern_names = [p for p in body.split("=", 1)[1].split(",") if p]
            continue

        parts = line.split(",")
        if len(parts) != 6:
            raise FileFormatError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            traj_id = int(parts[0])
            mmsi = int(parts[1])
            label = None if parts[2] == "-" else int(parts[2])
            ts = float(parts[3])
            point = GeoPoint(lat=float(parts[4]), lon=float(parts[5]))
        except (ValueError, ValidationError):
            raise FileFormatError(f"line {lineno}: malformed record: {line!r}")

        if traj_id not in rows:
            rows[traj_id] = [mmsi, label, [], []]
            order.append(traj_id)
        entry = rows[traj_id]
        entry[2].append(ts)
        entry[3].append(point)

    trajectories = []
    for traj_id in order:
        mmsi, label, times, states = rows[traj_id]
        trajectories.append(
            Trajectory(traj_id=traj_id, mmsi=mmsi, times=tuple(times), states=tuple(states), label=label)
        )
    return TrajectoryFile(trajectories=trajectories, delta_sec=delta_sec, pattern_names=pattern_names)


def read_trajectories(path: Path) -> TrajectoryFile:
    return parse_trajectories(Path(path).read_text(encoding="utf-8"))
