# src/apps/windowing/sample_io.py
"""
窓サンプルファイル（テキスト, バージョン付き）。

    SEATRACK-WINDOWS v1
    {"ell": 12, "h": 12, "d": 2, "P": 2, "standardizer": {...} | null, "count": N}
    {"traj": 0, "k": 11, "x": [[lon, lat], ...], "y": [[lon, lat], ...], "psi": [1.0, 0.0] | null}
    ...

1行目がマジック、2行目がヘッダ JSON、以降 1行 1サンプル。
float は JSON の repr なので読み戻すと一致する。
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from apps.common.errors import FileFormatError
from apps.geo.schemas import Standardizer

from .schemas import WindowSample

MAGIC = "SEATRACK-WINDOWS v1"


@dataclass(frozen=True)
class SampleFile:
    ell: int
    h: int
    d: int
    P: int
    standardizer: Optional[Standardizer]
    samples: list[WindowSample]


def format_samples(
    samples: Sequence[WindowSample],
    *,
    ell: int,
    h: int,
    P: int,
    standardizer: Optional[Standardizer],
    d: int = 2,
) -> str:
    header = {
        "ell": ell,
        "h": h,
        "d": d,
        "P": P,
        "standardizer": standardizer.to_dict() if standardizer else None,
        "count": len(samples),
    }
    lines = [MAGIC, json.dumps(header, sort_keys=True)]
    for s in samples:
        lines.append(
            json.dumps(
                {
                    "traj": s.source_traj,
                    "k": s.k,
                    "x": s.input.tolist(),
                    "y": s.target.tolist(),
                    "psi": None if s.psi is None else s.psi.tolist(),
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"


def write_samples(path: Path, samples: Sequence[WindowSample], **kwargs) -> None:
    Path(path).write_text(format_samples(samples, **kwargs), encoding="utf-8")


def parse_samples(text: str) -> SampleFile:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FileFormatError("not a seatrack window file (bad magic line)")
    try:
        header = json.loads(lines[1])
        samples = []
        for line in lines[2:]:
            if not line.strip():
                continue
            row = json.loads(line)
            samples.append(
                WindowSample(
                    input=np.array(row["x"], dtype=np.float64),
                    target=np.array(row["y"], dtype=np.float64),
                    psi=None if row["psi"] is None else np.array(row["psi"], dtype=np.float64),
                    source_traj=int(row["traj"]),
                    k=int(row["k"]),
                )
            )
    except (IndexError, KeyError, ValueError) as exc:
        raise FileFormatError(f"malformed window file: {exc}")

    if len(samples) != header["count"]:
        raise FileFormatError("window count does not match header", header=header["count"], found=len(samples))

    std = header.get("standardizer")
    return SampleFile(
        ell=int(header["ell"]),
        h=int(header["h"]),
        d=int(header["d"]),
        P=int(header["P"]),
        standardizer=Standardizer.from_dict(std) if std else None,
        samples=samples,
    )


def read_samples(path: Path) -> SampleFile:
    return parse_samples(Path(path).read_text(encoding="utf-8"))
