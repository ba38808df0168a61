# src/apps/ais/polygons.py
"""
多角形ファイルの読み書き。

形式（1ブロック = 1多角形、空行で区切る。# 以降はコメント）:

    O
    55.00 10.00
    55.00 10.40
    55.25 10.40
    55.25 10.00

    A
    ...

最初のブロックが origin、それ以降が destination（この順が pattern 番号）。
"""
from __future__ import annotations

from django.core.exceptions import ValidationError

from apps.common.errors import FileFormatError
from apps.geo.schemas import GeoPoint

from .schemas import PatternSpec, Polygon


def parse_polygons(text: str) -> PatternSpec:
    blocks: list[list[str]] = []
    current: list[str] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                blocks.append(current)
                current = []
            continue
        current.append(line)
    if current:
        blocks.append(current)

    if len(blocks) < 2:
        raise FileFormatError("polygon file needs an origin block and at least one destination block")

    polygons = [_parse_block(block) for block in blocks]
    return PatternSpec(origin=polygons[0], destinations=tuple(polygons[1:]))


def _parse_block(lines: list[str]) -> Polygon:
    name = lines[0]
    vertices = []
    for line in lines[1:]:
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise FileFormatError(f"polygon {name!r}: vertex line must be 'lat lon': {line!r}")
        try:
            vertices.append(GeoPoint(lat=float(parts[0]), lon=float(parts[1])))
        except ValueError:
            raise FileFormatError(f"polygon {name!r}: vertex is not numeric: {line!r}")
        except ValidationError:
            raise FileFormatError(f"polygon {name!r}: vertex out of range: {line!r}")
    return Polygon(name=name, vertices=tuple(vertices))


def format_polygons(spec: PatternSpec) -> str:
    blocks = []
    for poly in (spec.origin, *spec.destinations):
        lines = [poly.name] + [f"{v.lat!r} {v.lon!r}" for v in poly.vertices]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
