"""A desk-scale transformer with shared encoder-decoder weights.

Parameters live in one flat dict keyed by role prefix. With share_weights
the encoder and decoder resolve their self-attention, feed-forward, layer
norm, and embedding keys to the *same* "trunk" entries, so there is a single
storage for each shared tensor and a mutation through one role is visible
from the other. Cross-attention (and its layer norm) is decoder-only and
never shared. All forward passes cache what the hand-written backward
passes need; see train.py for the loss-level entry points.

Layers are pre-norm:  x += Attn(LN(x));  x += FF(LN(x));  out = LN_f(x).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import (
    InvalidConfigError,
    PositionOutOfRangeError,
    SequenceTooLongError,
)

_NEG = -1e9  # additive mask value; exp() underflows to exactly 0
_LN_EPS = 1e-5
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_persons: int = 64
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 256
    max_len: int = 512
    dropout: float = 0.1
    share_weights: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise InvalidConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfigError(f"dropout must be in [0,1), got {self.dropout}")
        for name in ("vocab_size", "n_persons", "d_model", "n_heads", "n_layers", "d_ff", "max_len"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1")


class TinyModel:
    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = params

    def prefix(self, role: str) -> str:
        return "trunk" if self.cfg.share_weights else role

    @property
    def n_params(self) -> int:
        return sum(int(p.size) for p in self.params.values())

    def astype(self, dtype: str) -> "TinyModel":
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return TinyModel(replace(self.cfg, dtype=dtype), params)


def init_model(cfg: ModelConfig, seed: int) -> TinyModel:
    """Parameters ~ N(0, 1/sqrt(d_model)); biases zero; LN gains one."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype)
    scale = 1.0 / np.sqrt(cfg.d_model)
    params: dict[str, np.ndarray] = {}

    def w(key, *shape):
        params[key] = rng.normal(0.0, scale, size=shape).astype(dtype)

    def zeros(key, *shape):
        params[key] = np.zeros(shape, dtype=dtype)

    def ones(key, *shape):
        params[key] = np.ones(shape, dtype=dtype)

    def stack(pre):
        w(f"{pre}.emb.tok", cfg.vocab_size, cfg.d_model)
        w(f"{pre}.emb.pos", cfg.max_len, cfg.d_model)
        for i in range(cfg.n_layers):
            for name in ("wq", "wk", "wv", "wo"):
                w(f"{pre}.L{i}.attn.{name}", cfg.d_model, cfg.d_model)
            # no key bias: softmax scores are invariant to it
            for name in ("bq", "bv", "bo"):
                zeros(f"{pre}.L{i}.attn.{name}", cfg.d_model)
            ones(f"{pre}.L{i}.ln1.g", cfg.d_model)
            zeros(f"{pre}.L{i}.ln1.b", cfg.d_model)
            ones(f"{pre}.L{i}.ln2.g", cfg.d_model)
            zeros(f"{pre}.L{i}.ln2.b", cfg.d_model)
            w(f"{pre}.L{i}.ff.w1", cfg.d_model, cfg.d_ff)
            zeros(f"{pre}.L{i}.ff.b1", cfg.d_ff)
            w(f"{pre}.L{i}.ff.w2", cfg.d_ff, cfg.d_model)
            zeros(f"{pre}.L{i}.ff.b2", cfg.d_model)
        ones(f"{pre}.lnf.g", cfg.d_model)
        zeros(f"{pre}.lnf.b", cfg.d_model)

    if cfg.share_weights:
        stack("trunk")
    else:
        stack("enc")
        stack("dec")
    for i in range(cfg.n_layers):
        for name in ("wq", "wk", "wv", "wo"):
            w(f"dec_only.L{i}.cross.{name}", cfg.d_model, cfg.d_model)
        for name in ("bq", "bv", "bo"):
            zeros(f"dec_only.L{i}.cross.{name}", cfg.d_model)
        ones(f"dec_only.L{i}.lnc.g", cfg.d_model)
        zeros(f"dec_only.L{i}.lnc.b", cfg.d_model)
    w("head.sep.w", cfg.d_model, 2)
    zeros("head.sep.b", 2)
    w("head.mask.w", cfg.d_model, cfg.n_persons)
    zeros("head.mask.b", cfg.n_persons)
    w("head.lm.w", cfg.d_model, cfg.vocab_size)
    zeros("head.lm.b", cfg.vocab_size)
    return TinyModel(cfg, params)


def _acc(grads: dict, key: str, value: np.ndarray) -> None:
    if key in grads:
        grads[key] += value
    else:
        grads[key] = value


# layer norm -------------------------------------------------------------------


def _ln_fwd(p, pre, x):
    g = p[f"{pre}.g"]
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return g * xhat + p[f"{pre}.b"], (xhat, inv, g)


def _ln_bwd(cache, dy, grads, pre):
    xhat, inv, g = cache
    axes = tuple(range(dy.ndim - 1))
    _acc(grads, f"{pre}.g", (dy * xhat).sum(axes))
    _acc(grads, f"{pre}.b", dy.sum(axes))
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(-1, keepdims=True)
    )
    return dx


# feed-forward -----------------------------------------------------------------


def _gelu(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * x * (1.0 + t), t


def _ff_fwd(p, pre, x):
    h1 = x @ p[f"{pre}.w1"] + p[f"{pre}.b1"]
    a, t = _gelu(h1)
    out = a @ p[f"{pre}.w2"] + p[f"{pre}.b2"]
    return out, (x, h1, a, t)


def _ff_bwd(p, pre, cache, dout, grads):
    x, h1, a, t = cache
    d = x.shape[-1]
    f = a.shape[-1]
    _acc(grads, f"{pre}.w2", a.reshape(-1, f).T @ dout.reshape(-1, d))
    _acc(grads, f"{pre}.b2", dout.sum(tuple(range(dout.ndim - 1))))
    da = dout @ p[f"{pre}.w2"].T
    dt = _GELU_C * (1.0 + 3.0 * _GELU_A * h1 * h1) * (1.0 - t * t)
    dh1 = da * (0.5 * (1.0 + t) + 0.5 * h1 * dt)
    _acc(grads, f"{pre}.w1", x.reshape(-1, d).T @ dh1.reshape(-1, f))
    _acc(grads, f"{pre}.b1", dh1.sum(tuple(range(dh1.ndim - 1))))
    return dh1 @ p[f"{pre}.w1"].T


# multi-head attention ------------------------------------------------------------


def _split_heads(x, n_heads):
    b, length, d = x.shape
    return x.reshape(b, length, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, length, k = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, h * k)


def _mha_fwd(p, pre, n_heads, q_in, kv_in, key_keep=None, causal=False):
    """q_in: (B, Lq, D); kv_in: (B, Lk, D); key_keep: (B, Lk) bool."""
    q = _split_heads(q_in @ p[f"{pre}.wq"] + p[f"{pre}.bq"], n_heads)
    k = _split_heads(kv_in @ p[f"{pre}.wk"], n_heads)
    v = _split_heads(kv_in @ p[f"{pre}.wv"] + p[f"{pre}.bv"], n_heads)
    dk = q.shape[-1]

    scores = q @ k.swapaxes(-1, -2) / np.sqrt(dk)
    if key_keep is not None:
        scores = scores + (~key_keep[:, None, None, :]) * _NEG
    if causal:
        lq, lk = scores.shape[-2:]
        future = np.triu(np.ones((lq, lk), dtype=bool), k=1)
        scores = scores + future * _NEG
    scores = scores - scores.max(-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(-1, keepdims=True)

    ctx = _merge_heads(attn @ v)
    out = ctx @ p[f"{pre}.wo"] + p[f"{pre}.bo"]
    return out, (q_in, kv_in, q, k, v, attn, ctx)


def _mha_bwd(p, pre, cache, dout, grads):
    """Returns (dq_in, dkv_in)."""
    q_in, kv_in, q, k, v, attn, ctx = cache
    d = q_in.shape[-1]
    n_heads = q.shape[1]
    dk = q.shape[-1]

    _acc(grads, f"{pre}.wo", ctx.reshape(-1, d).T @ dout.reshape(-1, d))
    _acc(grads, f"{pre}.bo", dout.sum((0, 1)))
    dctx = _split_heads(dout @ p[f"{pre}.wo"].T, n_heads)

    dattn = dctx @ v.swapaxes(-1, -2)
    dv = attn.swapaxes(-1, -2) @ dctx
    # softmax rows: masked columns have attn == 0 so their grads vanish
    ds = attn * (dattn - (dattn * attn).sum(-1, keepdims=True))
    ds = ds / np.sqrt(dk)
    dq = ds @ k
    dkk = ds.swapaxes(-1, -2) @ q

    dq_m, dk_m, dv_m = _merge_heads(dq), _merge_heads(dkk), _merge_heads(dv)
    _acc(grads, f"{pre}.wq", q_in.reshape(-1, d).T @ dq_m.reshape(-1, d))
    _acc(grads, f"{pre}.bq", dq_m.sum((0, 1)))
    _acc(grads, f"{pre}.wk", kv_in.reshape(-1, d).T @ dk_m.reshape(-1, d))
    _acc(grads, f"{pre}.wv", kv_in.reshape(-1, d).T @ dv_m.reshape(-1, d))
    _acc(grads, f"{pre}.bv", dv_m.sum((0, 1)))
    dq_in = dq_m @ p[f"{pre}.wq"].T
    dkv_in = dk_m @ p[f"{pre}.wk"].T + dv_m @ p[f"{pre}.wv"].T
    return dq_in, dkv_in


# encoder ----------------------------------------------------------------------


def _embed_fwd(p, pre, ids):
    length = ids.shape[1]
    return p[f"{pre}.emb.tok"][ids] + p[f"{pre}.emb.pos"][:length][None, :, :]


def _embed_bwd(p, pre, ids, dx, grads):
    dtok = np.zeros_like(p[f"{pre}.emb.tok"])
    np.add.at(dtok, ids, dx)
    _acc(grads, f"{pre}.emb.tok", dtok)
    dpos = np.zeros_like(p[f"{pre}.emb.pos"])
    dpos[: ids.shape[1]] = dx.sum(0)
    _acc(grads, f"{pre}.emb.pos", dpos)


def encoder_forward(model: TinyModel, ids: np.ndarray, keep: np.ndarray):
    """ids: (B, L) int; keep: (B, L) bool. Returns (hidden (B,L,D), cache)."""
    p, cfg = model.params, model.cfg
    pre = model.prefix("enc")
    x = _embed_fwd(p, pre, ids)
    layer_caches = []
    for i in range(cfg.n_layers):
        h, c_ln1 = _ln_fwd(p, f"{pre}.L{i}.ln1", x)
        a, c_att = _mha_fwd(p, f"{pre}.L{i}.attn", cfg.n_heads, h, h, key_keep=keep)
        x = x + a
        h2, c_ln2 = _ln_fwd(p, f"{pre}.L{i}.ln2", x)
        f, c_ff = _ff_fwd(p, f"{pre}.L{i}.ff", h2)
        x = x + f
        layer_caches.append((c_ln1, c_att, c_ln2, c_ff))
    out, c_lnf = _ln_fwd(p, f"{pre}.lnf", x)
    return out, (ids, layer_caches, c_lnf)


def encoder_backward(model: TinyModel, cache, dout: np.ndarray, grads: dict) -> None:
    p, cfg = model.params, model.cfg
    pre = model.prefix("enc")
    ids, layer_caches, c_lnf = cache
    dx = _ln_bwd(c_lnf, dout, grads, f"{pre}.lnf")
    for i in reversed(range(cfg.n_layers)):
        c_ln1, c_att, c_ln2, c_ff = layer_caches[i]
        dh2 = _ff_bwd(p, f"{pre}.L{i}.ff", c_ff, dx, grads)
        dx = dx + _ln_bwd(c_ln2, dh2, grads, f"{pre}.L{i}.ln2")
        dq_in, dkv_in = _mha_bwd(p, f"{pre}.L{i}.attn", c_att, dx, grads)
        dx = dx + _ln_bwd(c_ln1, dq_in + dkv_in, grads, f"{pre}.L{i}.ln1")
    _embed_bwd(p, pre, ids, dx, grads)


# decoder ----------------------------------------------------------------------


def decoder_forward(
    model: TinyModel,
    ids: np.ndarray,
    enc_out: np.ndarray,
    enc_keep: np.ndarray,
    dec_keep: np.ndarray,
):
    p, cfg = model.params, model.cfg
    pre = model.prefix("dec")
    y = _embed_fwd(p, pre, ids)
    layer_caches = []
    for i in range(cfg.n_layers):
        h, c_ln1 = _ln_fwd(p, f"{pre}.L{i}.ln1", y)
        a, c_self = _mha_fwd(
            p, f"{pre}.L{i}.attn", cfg.n_heads, h, h, key_keep=dec_keep, causal=True
        )
        y = y + a
        hc, c_lnc = _ln_fwd(p, f"dec_only.L{i}.lnc", y)
        c, c_cross = _mha_fwd(
            p, f"dec_only.L{i}.cross", cfg.n_heads, hc, enc_out, key_keep=enc_keep
        )
        y = y + c
        h2, c_ln2 = _ln_fwd(p, f"{pre}.L{i}.ln2", y)
        f, c_ff = _ff_fwd(p, f"{pre}.L{i}.ff", h2)
        y = y + f
        layer_caches.append((c_ln1, c_self, c_lnc, c_cross, c_ln2, c_ff))
    out, c_lnf = _ln_fwd(p, f"{pre}.lnf", y)
    return out, (ids, layer_caches, c_lnf)


def decoder_backward(model: TinyModel, cache, dout: np.ndarray, grads: dict) -> np.ndarray:
    """Backprop through the decoder; returns the gradient w.r.t. enc_out."""
    p, cfg = model.params, model.cfg
    pre = model.prefix("dec")
    ids, layer_caches, c_lnf = cache
    dy = _ln_bwd(c_lnf, dout, grads, f"{pre}.lnf")
    d_enc = None
    for i in reversed(range(cfg.n_layers)):
        c_ln1, c_self, c_lnc, c_cross, c_ln2, c_ff = layer_caches[i]
        dh2 = _ff_bwd(p, f"{pre}.L{i}.ff", c_ff, dy, grads)
        dy = dy + _ln_bwd(c_ln2, dh2, grads, f"{pre}.L{i}.ln2")
        dhc, dkv = _mha_bwd(p, f"dec_only.L{i}.cross", c_cross, dy, grads)
        d_enc = dkv if d_enc is None else d_enc + dkv
        dy = dy + _ln_bwd(c_lnc, dhc, grads, f"dec_only.L{i}.lnc")
        dq_in, dkv_in = _mha_bwd(p, f"{pre}.L{i}.attn", c_self, dy, grads)
        dy = dy + _ln_bwd(c_ln1, dq_in + dkv_in, grads, f"{pre}.L{i}.ln1")
    _embed_bwd(p, pre, ids, dy, grads)
    return d_enc


# heads ------------------------------------------------------------------------


def _dropout(x, rate, train, rng):
    if not train or rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.dtype)
    return x * keep, keep


def head_forward(model: TinyModel, head: str, h: np.ndarray, train=False, rng=None):
    """Affine head over hidden vectors, with inverted-scaling dropout on its
    input in train mode."""
    p = model.params
    dropped, keep = _dropout(h, model.cfg.dropout, train, rng)
    return dropped @ p[f"head.{head}.w"] + p[f"head.{head}.b"], (dropped, keep, h)


def head_backward(model: TinyModel, head: str, cache, dlogits: np.ndarray, grads: dict):
    p = model.params
    dropped, keep, _ = cache
    d = dropped.shape[-1]
    _acc(grads, f"head.{head}.w", dropped.reshape(-1, d).T @ dlogits.reshape(-1, dlogits.shape[-1]))
    _acc(grads, f"head.{head}.b", dlogits.reshape(-1, dlogits.shape[-1]).sum(0))
    dh = dlogits @ p[f"head.{head}.w"].T
    if keep is not None:
        dh = dh * keep
    return dh


# public single-sequence operations ------------------------------------------------


def encode(model: TinyModel, token_ids, pad_mask=None) -> np.ndarray:
    """Eval-mode encoder hidden states for one sequence: (len, d_model)."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("token_ids must be a flat sequence")
    if ids.shape[0] > model.cfg.max_len:
        raise SequenceTooLongError(f"sequence length {ids.shape[0]} > max_len {model.cfg.max_len}")
    if pad_mask is None:
        keep = np.ones((1, ids.shape[0]), dtype=bool)
    else:
        keep = np.asarray(pad_mask, dtype=bool)[None, :]
    out, _ = encoder_forward(model, ids[None, :], keep)
    return out[0]


def classify_markers(
    model: TinyModel,
    hidden: np.ndarray,
    sep_positions,
    mask_positions,
    train: bool = False,
    rng=None,
):
    """Logits of the [SEP] and [MASK] heads at the given positions of one
    sequence's hidden states. Returns (sep_logits (n,2), mask_logits (m,P))."""
    length = hidden.shape[0]
    for pos in list(sep_positions) + list(mask_positions):
        if not 0 <= pos < length:
            raise PositionOutOfRangeError(f"position {pos} outside sequence of length {length}")
    sep_h = hidden[np.asarray(sep_positions, dtype=np.int64)] if len(sep_positions) else np.zeros(
        (0, model.cfg.d_model), dtype=hidden.dtype
    )
    mask_h = hidden[np.asarray(mask_positions, dtype=np.int64)] if len(mask_positions) else np.zeros(
        (0, model.cfg.d_model), dtype=hidden.dtype
    )
    sep_logits, _ = head_forward(model, "sep", sep_h, train, rng)
    mask_logits, _ = head_forward(model, "mask", mask_h, train, rng)
    return sep_logits, mask_logits


def greedy_decode(
    model: TinyModel,
    src_ids,
    bos_id: int,
    eos_id: int,
    max_new_tokens: int,
) -> list[int]:
    """Greedy generation conditioned on an encoded source sequence.

    Emits tokens until eos_id or the length limit; the decoder input starts
    with bos_id. Returns the generated ids without bos/eos.
    """
    src = np.asarray(src_ids, dtype=np.int64)[None, :]
    src_keep = np.ones_like(src, dtype=bool)
    enc_out, _ = encoder_forward(model, src, src_keep)

    out: list[int] = []
    dec = [bos_id]
    for _ in range(max_new_tokens):
        ids = np.asarray(dec, dtype=np.int64)[None, :]
        dec_out, _ = decoder_forward(model, ids, enc_out, src_keep, np.ones_like(ids, dtype=bool))
        logits, _ = head_forward(model, "lm", dec_out[0, -1])
        nxt = int(np.argmax(logits))
        if nxt == eos_id:
            break
        out.append(nxt)
        dec.append(nxt)
    return out


# checkpointing -----------------------------------------------------------------


def save_checkpoint(model: TinyModel, path: str | Path) -> None:
    cfg_json = json.dumps(model.cfg.__dict__, sort_keys=True)
    np.savez(path, __config__=np.array(cfg_json), **model.params)


def load_checkpoint(path: str | Path) -> TinyModel:
    data = np.load(path, allow_pickle=False)
    cfg = ModelConfig(**json.loads(str(data["__config__"])))
    params = {k: data[k].copy() for k in data.files if k != "__config__"}
    return TinyModel(cfg, params)
