# src/apps/pipeline/manifest.py
"""
実行マニフェスト（manifest.json）。

方針:
- コマンド名 + 解決済みオプション + 入力ファイルの sha256 + seed + ツールのバージョン
- rerun はこれだけを見て同じコマンドを再実行する
- キーはソートして書く（同じ実行なら同じバイト列）
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from apps.common.errors import FileFormatError

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RunManifest:
    command: str
    options: dict[str, Any]
    inputs: dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    version: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "options": self.options,
            "inputs": self.inputs,
            "seed": self.seed,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                command=str(data["command"]),
                options=dict(data["options"]),
                inputs=dict(data.get("inputs") or {}),
                seed=data.get("seed"),
                version=str(data.get("version", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FileFormatError(f"manifest is missing fields: {exc}")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(path: Path) -> RunManifest:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError:
        raise FileFormatError(f"manifest is not valid JSON: {path}")
    if not isinstance(data, dict):
        raise FileFormatError(f"manifest must be a JSON object: {path}")
    return RunManifest.from_dict(data)
