# src/apps/nn/checkpoint.py
"""
パラメータのチェックポイント（バイト配置固定・バージョン付き）。

    SEATRACK-CKPT v1\n
    <ヘッダ JSON（キーはソート済み）>\n
    <float64 リトルエンディアンの生データ（ヘッダの params の順に連結）>

ヘッダ:
    version, model (ModelConfig), standardizer, adam (AdamConfig), step,
    patterns（ラベル付きで学習したときのパターン名。無ければ空）,
    params: [{name, shape, offset, count}]   offset はペイロード先頭からのバイト位置

時刻などは入れないので、同じ学習結果なら同じバイト列になる。
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from apps.common.errors import FileFormatError

from .params import AdamConfig, ParamStore

MAGIC = b"SEATRACK-CKPT v1\n"
_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class Checkpoint:
    model: dict[str, Any]
    standardizer: Optional[dict[str, Any]]
    adam: AdamConfig
    step: int
    version: str
    arrays: dict[str, np.ndarray]
    patterns: tuple[str, ...] = ()


def encode_checkpoint(
    params: ParamStore,
    *,
    model: dict[str, Any],
    standardizer: Optional[dict[str, Any]],
    adam: AdamConfig,
    step: int,
    version: str,
    patterns: Sequence[str] = (),
) -> bytes:
    """現在のパラメータ値を書く（ベスト epoch の復元は呼び出し側で済ませておく）。"""
    values = params.snapshot()
    entries = []
    chunks = []
    offset = 0
    for name in params:
        arr = np.ascontiguousarray(values[name], dtype=_DTYPE)
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(raw)
        offset += len(raw)

    header = {
        "version": version,
        "model": model,
        "standardizer": standardizer,
        "adam": adam.to_dict(),
        "step": int(step),
        "params": entries,
        "patterns": list(patterns),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + head + b"\n" + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise FileFormatError("not a seatrack checkpoint (bad magic)")
    rest = blob[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise FileFormatError("checkpoint header is truncated")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
    except ValueError:
        raise FileFormatError("checkpoint header is not valid JSON")
    payload = rest[nl + 1:]

    arrays: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        start = entry["offset"]
        stop = start + entry["count"] * _DTYPE.itemsize
        if stop > len(payload):
            raise FileFormatError(f"checkpoint payload is truncated at {entry['name']}")
        arr = np.frombuffer(payload[start:stop], dtype=_DTYPE).astype(np.float64)
        arrays[entry["name"]] = arr.reshape(entry["shape"])

    return Checkpoint(
        model=header["model"],
        standardizer=header["standardizer"],
        adam=AdamConfig(**header["adam"]),
        step=int(header["step"]),
        version=header["version"],
        arrays=arrays,
        patterns=tuple(header.get("patterns") or ()),
    )


def save_checkpoint(path: Path, params: ParamStore, **kwargs) -> None:
    Path(path).write_bytes(encode_checkpoint(params, **kwargs))


def load_checkpoint(path: Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
