# src/apps/seq2seq/services.py
"""
Encoder-Decoder（BiLSTM エンコーダ + 集約 + 自己回帰 LSTM デコーダ）。

配列の形（B はバッチ）:
    X: B×ℓ×d / ψ: B×P / H: B×ℓ×2q / z: B×2q（MAX, AVG）または B×q（ATTN）/ Ŷ: B×h×d

仕様:
- エンコーダの初期状態 (h, c) はゼロ
- MAX / AVG の z はサンプルごとに1回だけ計算し、全デコードステップで使い回す
- ATTN は毎ステップ u_{j-1} から α を作り直す。文脈 Σα_t h_t は W_z で q 次元に落とす
- デコーダの初期状態は u_0 = tanh(h⃗_ℓ W_κᵀ + b_κ), c_0 = 0、ŷ_0 は入力の最後の位置
- 学習時も ŷ_{j-1} は自分の予測を戻す（teacher_forcing=True のときだけ正解を入れる）
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from apps.common.errors import ConfigMismatch, ShapeMismatch
from apps.nn.initializers import init_xavier
from apps.nn.ops import affine, concat_rows, softmax
from apps.nn.params import ParamStore
from apps.nn.rng import as_rng
from apps.nn.schemas import ModelConfig

from .lstm import lstm_cell_backward, lstm_cell_forward
from .schemas import (
    AttentionStep,
    DecodeCache,
    DecodeStep,
    EncDecCache,
    EncoderOutput,
    LstmCell,
    Seed,
)

logger = logging.getLogger(__name__)


class EncDecModel:
    """
    パラメータ名:
    - enc_fwd.* / enc_bwd.* / dec.*: 各 LSTM セル
    - attn.W_h (q×2q), attn.W_u (q×q), attn.v_a (q), attn.W_z (q×2q): ATTN のときだけ
    - init.W_k (q×q), init.b_k (q): デコーダ初期状態
    - out.W_y (d×q), out.b_y (d): 出力ヘッド
    """

    def __init__(self, config: ModelConfig, seed: Seed = 0) -> None:
        if config.kind != "encdec":
            raise ConfigMismatch(f"EncDecModel needs kind=encdec, got {config.kind}")
        self.config = config
        self.params = ParamStore()

        rng = as_rng(seed)
        q, d = config.hidden, config.d
        self.z_dim = q if config.aggregation == "attn" else 2 * q

        self.enc_fwd = LstmCell("enc_fwd", d, q)
        self.enc_bwd = LstmCell("enc_bwd", d, q)
        self.dec = LstmCell("dec", d + self.z_dim + config.psi_dim, q)
        self.enc_fwd.register(self.params, rng)
        self.enc_bwd.register(self.params, rng)
        self.dec.register(self.params, rng)

        if config.aggregation == "attn":
            self.params.add("attn.W_h", init_xavier((q, 2 * q), rng))
            self.params.add("attn.W_u", init_xavier((q, q), rng))
            self.params.add("attn.v_a", init_xavier((1, q), rng)[0])
            self.params.add("attn.W_z", init_xavier((q, 2 * q), rng))

        self.params.add("init.W_k", init_xavier((q, q), rng))
        self.params.add("init.b_k", np.zeros(q))
        self.params.add("out.W_y", init_xavier((d, q), rng))
        self.params.add("out.b_y", np.zeros(d))
        logger.debug("built %s with %d parameters", config.model_id, self.params.size)

    # -----------------------------
    # モデル共通インターフェース
    # -----------------------------
    def forward(
        self, X: np.ndarray, psi: Optional[np.ndarray] = None, *, Y: Optional[np.ndarray] = None
    ) -> tuple[np.ndarray, EncDecCache]:
        cfg = self.config
        if X.ndim != 3 or X.shape[1:] != (cfg.ell, cfg.d):
            raise ShapeMismatch(f"expected B×{cfg.ell}×{cfg.d} input, got {X.shape}")
        # ラベル無しモデルは ψ を構造的に使わない
        if not cfg.labeled:
            psi = None

        enc = bilstm_encode(self, X)
        targets = Y if cfg.teacher_forcing else None
        Yhat, dec = decode_sequence(self, enc, X[:, -1, :], psi, cfg.h, targets=targets)
        return Yhat, EncDecCache(X=X, encoder=enc, decoder=dec)

    def backward(self, cache: EncDecCache, dY: np.ndarray) -> None:
        dH, dh_last = decode_backward(self, cache.encoder, cache.decoder, dY)
        encoder_backward(self, cache.encoder, dH, dh_last)

    def predict(self, X: np.ndarray, psi: Optional[np.ndarray] = None) -> np.ndarray:
        Yhat, _ = self.forward(X, psi)
        return Yhat

    def predict_with_attention(
        self, X: np.ndarray, psi: Optional[np.ndarray] = None
    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
        Yhat, cache = self.forward(X, psi)
        return Yhat, cache.alphas


# ------------------------------------------------------------
# Encoder
# ------------------------------------------------------------
def bilstm_encode(model: EncDecModel, X: np.ndarray) -> EncoderOutput:
    B, ell, _ = X.shape
    if ell < 1:
        raise ShapeMismatch("input sequence must have at least one step")
    q = model.config.hidden
    P = model.params

    H = np.zeros((B, ell, 2 * q))
    fwd_steps = []
    h = np.zeros((B, q))
    c = np.zeros((B, q))
    for t in range(ell):
        h, c, step = lstm_cell_forward(model.enc_fwd, P, X[:, t, :], h, c)
        H[:, t, :q] = h
        fwd_steps.append(step)
    h_last = h

    bwd_steps = [None] * ell
    h = np.zeros((B, q))
    c = np.zeros((B, q))
    for t in reversed(range(ell)):
        h, c, step = lstm_cell_forward(model.enc_bwd, P, X[:, t, :], h, c)
        H[:, t, q:] = h
        bwd_steps[t] = step

    return EncoderOutput(H=H, h_last=h_last, fwd_steps=fwd_steps, bwd_steps=bwd_steps)


def encoder_backward(model: EncDecModel, enc: EncoderOutput, dH: np.ndarray, dh_last: np.ndarray) -> None:
    q = model.config.hidden
    P = model.params
    ell = enc.H.shape[1]

    dh = dh_last.copy()
    dc = np.zeros_like(dh)
    for t in reversed(range(ell)):
        _, dh, dc = lstm_cell_backward(model.enc_fwd, P, enc.fwd_steps[t], dH[:, t, :q] + dh, dc)

    # 後ろ向きセルは t=ℓ-1 → 0 の順で進んだので、逆伝播は t=0 から
    dh = np.zeros_like(dh_last)
    dc = np.zeros_like(dh_last)
    for t in range(ell):
        _, dh, dc = lstm_cell_backward(model.enc_bwd, P, enc.bwd_steps[t], dH[:, t, q:] + dh, dc)


# ------------------------------------------------------------
# Aggregation
# ------------------------------------------------------------
def aggregate_max(H: np.ndarray) -> np.ndarray:
    """時間方向の最大値（B×ℓ×2q -> B×2q）。"""
    if H.shape[1] < 1:
        raise ShapeMismatch("aggregate over an empty sequence")
    return H.max(axis=1)


def aggregate_avg(H: np.ndarray) -> np.ndarray:
    if H.shape[1] < 1:
        raise ShapeMismatch("aggregate over an empty sequence")
    return H.mean(axis=1)


def aggregate_max_backward(H: np.ndarray, dz: np.ndarray) -> np.ndarray:
    """勾配は argmax の時刻へ（同値なら早い時刻）。"""
    idx = np.argmax(H, axis=1)
    dH = np.zeros_like(H)
    np.put_along_axis(dH, idx[:, None, :], dz[:, None, :], axis=1)
    return dH


def aggregate_avg_backward(H: np.ndarray, dz: np.ndarray) -> np.ndarray:
    ell = H.shape[1]
    return np.repeat(dz[:, None, :] / ell, ell, axis=1)


def attention_context(
    model: EncDecModel,
    H: np.ndarray,
    u_prev: np.ndarray,
    proj: Optional[np.ndarray] = None,
) -> AttentionStep:
    """
    e_t = v_aᵀ tanh(W_h h_t + W_u u_{j-1}), α = softmax(e), z = W_z Σ_t α_t h_t

    proj（= H W_hᵀ）はデコード中ずっと同じなので、呼び出し側で1回だけ計算して渡せる。
    """
    P = model.params
    q = model.config.hidden
    if H.shape[-1] != 2 * q or u_prev.shape[-1] != q:
        raise ShapeMismatch(f"attention H{H.shape} u{u_prev.shape} for q={q}")

    if proj is None:
        proj = H @ P["attn.W_h"].T
    pre = np.tanh(proj + (u_prev @ P["attn.W_u"].T)[:, None, :])
    e = pre @ P["attn.v_a"]
    alpha = softmax(e, axis=1)
    ctx = np.einsum("bt,btk->bk", alpha, H)
    z = ctx @ P["attn.W_z"].T
    return AttentionStep(z=z, alpha=alpha, ctx=ctx, pre=pre, u_prev=u_prev)


def attention_backward(
    model: EncDecModel, H: np.ndarray, step: AttentionStep, dz: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(dH, du_prev) を返す。softmax のヤコビアンもここで通す。"""
    P = model.params
    W_z, W_h, W_u, v_a = P["attn.W_z"], P["attn.W_h"], P["attn.W_u"], P["attn.v_a"]

    P.grad("attn.W_z")[...] += dz.T @ step.ctx
    dctx = dz @ W_z

    alpha = step.alpha
    dalpha = np.einsum("bk,btk->bt", dctx, H)
    dH = alpha[:, :, None] * dctx[:, None, :]

    de = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
    P.grad("attn.v_a")[...] += np.einsum("bt,btq->q", de, step.pre)
    dpa = de[:, :, None] * v_a * (1.0 - step.pre ** 2)

    P.grad("attn.W_h")[...] += np.einsum("btq,btk->qk", dpa, H)
    dH += dpa @ W_h

    du_sum = dpa.sum(axis=1)
    P.grad("attn.W_u")[...] += du_sum.T @ step.u_prev
    return dH, du_sum @ W_u


# ------------------------------------------------------------
# Decoder
# ------------------------------------------------------------
def decoder_init(model: EncDecModel, h_last: np.ndarray) -> np.ndarray:
    P = model.params
    return np.tanh(affine(h_last, P["init.W_k"], P["init.b_k"]))


def decode_sequence(
    model: EncDecModel,
    enc: EncoderOutput,
    x_last: np.ndarray,
    psi: Optional[np.ndarray],
    h: int,
    *,
    targets: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, DecodeCache]:
    """
    h ステップ分の予測 Ŷ（B×h×d）とキャッシュを返す。

    NOTE:
    - ψ の有無がモデルの labeled と食い違えば ConfigMismatch
    - targets を渡すと ŷ_{j-1} の代わりに正解 y_{j-1} を入力する（teacher forcing）
    """
    cfg = model.config
    if cfg.labeled and psi is None:
        raise ConfigMismatch("labeled model needs a journey descriptor (psi)")
    if not cfg.labeled and psi is not None:
        raise ConfigMismatch("unlabeled model was given a journey descriptor (psi)")
    if psi is not None and psi.shape != (x_last.shape[0], cfg.P):
        raise ShapeMismatch(f"psi shape {psi.shape} != ({x_last.shape[0]}, {cfg.P})")

    P = model.params
    B = x_last.shape[0]
    H = enc.H

    u = decoder_init(model, enc.h_last)
    c = np.zeros_like(u)
    u0 = u

    static_z = None
    proj = None
    if cfg.aggregation == "max":
        static_z = aggregate_max(H)
    elif cfg.aggregation == "avg":
        static_z = aggregate_avg(H)
    else:
        proj = H @ P["attn.W_h"].T

    Yhat = np.zeros((B, h, cfg.d))
    steps: list[DecodeStep] = []
    y_prev = x_last
    for j in range(h):
        attention = None
        if static_z is not None:
            z = static_z
        else:
            attention = attention_context(model, H, u, proj=proj)
            z = attention.z

        parts = [y_prev, z] if psi is None else [y_prev, z, psi]
        mu = concat_rows(*parts)
        u, c, lstm = lstm_cell_forward(model.dec, P, mu, u, c)
        y = affine(u, P["out.W_y"], P["out.b_y"])
        Yhat[:, j, :] = y
        steps.append(DecodeStep(u=u, lstm=lstm, attention=attention))
        y_prev = targets[:, j, :] if targets is not None else y

    return Yhat, DecodeCache(u0=u0, steps=steps, feedback=targets is None, static_z=static_z)


def decode_backward(
    model: EncDecModel, enc: EncoderOutput, dec: DecodeCache, dY: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    出力ヘッド → デコーダ BPTT → 集約 → 初期状態 の順に戻す。
    戻り値はエンコーダへ渡す (dH, dh⃗_ℓ)。
    """
    cfg = model.config
    P = model.params
    H = enc.H
    d = cfg.d

    dH = np.zeros_like(H)
    dz_static = np.zeros((H.shape[0], 2 * cfg.hidden)) if dec.static_z is not None else None
    du_next = np.zeros_like(dec.u0)
    dc_next = np.zeros_like(dec.u0)
    dy_feed = np.zeros((H.shape[0], d))

    W_y = P["out.W_y"]
    for j in reversed(range(len(dec.steps))):
        step = dec.steps[j]
        dy = dY[:, j, :] + dy_feed
        P.grad("out.W_y")[...] += dy.T @ step.u
        P.grad("out.b_y")[...] += dy.sum(axis=0)
        du = dy @ W_y + du_next

        dmu, du_prev, dc_prev = lstm_cell_backward(model.dec, P, step.lstm, du, dc_next)
        dz = dmu[:, d:d + model.z_dim]
        if step.attention is not None:
            dH_j, du_att = attention_backward(model, H, step.attention, dz)
            dH += dH_j
            du_prev = du_prev + du_att
        else:
            dz_static += dz

        dy_feed = dmu[:, :d] if dec.feedback else np.zeros_like(dy_feed)
        du_next, dc_next = du_prev, dc_prev

    if cfg.aggregation == "max":
        dH += aggregate_max_backward(H, dz_static)
    elif cfg.aggregation == "avg":
        dH += aggregate_avg_backward(H, dz_static)

    # u_0 = tanh(h⃗_ℓ W_κᵀ + b_κ)
    dpre = du_next * (1.0 - dec.u0 ** 2)
    P.grad("init.W_k")[...] += dpre.T @ enc.h_last
    P.grad("init.b_k")[...] += dpre.sum(axis=0)
    dh_last = dpre @ P["init.W_k"]
    return dH, dh_last
