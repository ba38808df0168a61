# src/apps/nn/rng.py
"""
乱数生成器。

Philox（カウンタベースの 64bit 生成器）を SeedSequence で初期化する。
(seed, "fold", 3, "encdec-attn") のようにキーを足していけば、
fold / モデルごとに独立で再現可能なストリームが取れる。
"""
from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, str):
        return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")
    return int(key) & 0xFFFF_FFFF_FFFF_FFFF


def make_rng(seed: int, *keys: Key) -> np.random.Generator:
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def as_rng(seed_or_rng: Union[int, np.random.Generator]) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(int(seed_or_rng))
