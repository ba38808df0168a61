# src/apps/seq2seq/schemas.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from apps.nn.initializers import init_orthogonal, init_xavier
from apps.nn.params import ParamStore

GATES = ("i", "f", "o", "c")


@dataclass(frozen=True)
class LstmCell:
    """
    LSTM セル1つ分の形。値そのものは ParamStore に `<prefix>.U_i` のような名前で置く。

    NOTE:
    - U_* は q×m（入力側）、W_* は q×q（再帰側）、b_* は q
    - 初期化: W_* は直交、U_* は Xavier、b_f だけ 1 で他は 0
    """

    prefix: str
    m: int
    q: int

    def name(self, kind: str, gate: str) -> str:
        return f"{self.prefix}.{kind}_{gate}"

    def register(self, params: ParamStore, rng: np.random.Generator) -> None:
        for gate in GATES:
            params.add(self.name("U", gate), init_xavier((self.q, self.m), rng))
            params.add(self.name("W", gate), init_orthogonal((self.q, self.q), rng))
            bias = np.ones(self.q) if gate == "f" else np.zeros(self.q)
            params.add(self.name("b", gate), bias)


@dataclass
class LstmStepCache:
    """backward 用に1ステップ分の入力とゲート出力を持つ。"""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tc: np.ndarray


@dataclass
class EncoderOutput:
    """
    H: B×ℓ×2q（行 t が [h⃗_t ; h⃖_t]）、h_last: 前向きセルの最終状態 B×q。

    fwd_steps / bwd_steps は時刻 t の順に並べたキャッシュ（backward 用）。
    """

    H: np.ndarray
    h_last: np.ndarray
    fwd_steps: list[LstmStepCache] = field(default_factory=list)
    bwd_steps: list[LstmStepCache] = field(default_factory=list)


@dataclass
class AttentionStep:
    """1デコードステップ分のアテンション（α と backward 用の中間値）。"""

    z: np.ndarray
    alpha: np.ndarray
    ctx: np.ndarray
    pre: np.ndarray
    u_prev: np.ndarray


@dataclass
class DecodeStep:
    u: np.ndarray
    lstm: LstmStepCache
    attention: Optional[AttentionStep] = None


@dataclass
class DecodeCache:
    u0: np.ndarray
    steps: list[DecodeStep]
    feedback: bool
    static_z: Optional[np.ndarray] = None


@dataclass
class EncDecCache:
    X: np.ndarray
    encoder: EncoderOutput
    decoder: DecodeCache

    @property
    def alphas(self) -> Optional[np.ndarray]:
        """ATTN のときだけ B×h×ℓ を返す。"""
        steps = self.decoder.steps
        if not steps or steps[0].attention is None:
            return None
        return np.stack([s.attention.alpha for s in steps], axis=1)


Seed = Union[int, np.random.Generator]
