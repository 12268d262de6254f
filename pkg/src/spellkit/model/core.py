"""Encoder-decoder transformer in plain numpy: init, forward, analytic grads.

Architecture choices, fixed for reproducibility:
  - pre-layer-norm blocks with a final layer norm on each stack
  - sinusoidal position encodings (nothing learned, nothing random)
  - input and output embeddings tied
  - GELU (tanh approximation) in the feed-forward blocks
  - additive -1e9 attention masking

Parameters live in an ordered dict of float32 arrays; every routine accepts a
`dtype` so gradient checks can run the whole computation in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from ..tokenizer import PAD_ID, BOS_ID, EOS_ID

NEG_INF = -1e9
_LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    encoder_layers: int
    decoder_layers: int
    model_dim: int
    heads: int
    ffn_dim: int
    vocab_size: int
    max_positions: int = 256
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ValueError("need at least one layer per stack")
        if self.model_dim % self.heads != 0:
            raise ValueError("model_dim must be a multiple of heads")
        if self.vocab_size < 5:
            raise ValueError("vocab_size must cover the 4 specials plus content")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def desk_teacher(vocab_size: int) -> ModelConfig:
    return ModelConfig(4, 4, 128, 4, 256, vocab_size)


def desk_student(vocab_size: int) -> ModelConfig:
    return ModelConfig(2, 2, 96, 4, 192, vocab_size)


# Production-scale shapes kept as named configs; never instantiated in tests
# (the largest would allocate ~2 GB).
PRESETS = {
    "desk_teacher": desk_teacher(4096),
    "desk_student": desk_student(4096),
    "full_mono_teacher": ModelConfig(12, 12, 1024, 16, 4096, 32_768, 1024),
    "full_multi_teacher": ModelConfig(12, 12, 1024, 16, 4096, 131_072, 1024),
    "full_multi_teacher_6l": ModelConfig(6, 6, 1024, 16, 4096, 32_768, 1024),
    "full_student": ModelConfig(2, 2, 768, 12, 3072, 32_768, 1024),
}


# -- parameters -------------------------------------------------------------


def param_names(cfg: ModelConfig) -> list[str]:
    """Declared parameter order; checkpoint tensors follow this exactly."""
    names = ["embed"]
    for i in range(cfg.encoder_layers):
        p = f"enc{i}."
        names += [p + "ln1.g", p + "ln1.b"]
        names += [p + "attn." + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]
        names += [p + "ln2.g", p + "ln2.b"]
        names += [p + "ffn.w1", p + "ffn.b1", p + "ffn.w2", p + "ffn.b2"]
    for i in range(cfg.decoder_layers):
        p = f"dec{i}."
        names += [p + "ln1.g", p + "ln1.b"]
        names += [p + "self." + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]
        names += [p + "ln2.g", p + "ln2.b"]
        names += [p + "cross." + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]
        names += [p + "ln3.g", p + "ln3.b"]
        names += [p + "ffn.w1", p + "ffn.b1", p + "ffn.w2", p + "ffn.b2"]
    names += ["enc_ln.g", "enc_ln.b", "dec_ln.g", "dec_ln.b"]
    return names


def _shape_of(name: str, cfg: ModelConfig) -> tuple[int, ...]:
    d, f, v = cfg.model_dim, cfg.ffn_dim, cfg.vocab_size
    leaf = name.split(".")[-1]
    if name == "embed":
        return (v, d)
    if leaf in ("g", "b"):
        return (d,)
    if leaf in ("wq", "wk", "wv", "wo"):
        return (d, d)
    if leaf in ("bq", "bk", "bv", "bo"):
        return (d,)
    if leaf == "w1":
        return (d, f)
    if leaf == "b1":
        return (f,)
    if leaf == "w2":
        return (f, d)
    if leaf == "b2":
        return (d,)
    raise KeyError(name)


def param_count(cfg: ModelConfig) -> int:
    """Closed-form total parameter count for a config."""
    d, f, v = cfg.model_dim, cfg.ffn_dim, cfg.vocab_size
    attn = 4 * (d * d + d)
    ffn = d * f + f + f * d + d
    ln = 2 * d
    enc = cfg.encoder_layers * (attn + ffn + 2 * ln)
    dec = cfg.decoder_layers * (2 * attn + ffn + 3 * ln)
    return v * d + enc + dec + 2 * ln


def init(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform matrices, zero biases, unit layer-norm scales."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: dict[str, np.ndarray] = {}
    for name in param_names(cfg):
        shape = _shape_of(name, cfg)
        leaf = name.split(".")[-1]
        if leaf == "g":
            arr = np.ones(shape, dtype=np.float32)
        elif len(shape) == 1:
            arr = np.zeros(shape, dtype=np.float32)
        else:
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            arr = rng.uniform(-limit, limit, size=shape).astype(np.float32)
        params[name] = arr
    return params


def sinusoidal_positions(max_len: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((max_len, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table.astype(dtype)


# -- primitive forward/backward pairs ---------------------------------------


def _ln_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    d = xhat.shape[-1]
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = (
        inv
        / d
        * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
    )
    return dx, dg, db


_GELU_C = np.sqrt(2.0 / np.pi)


def _gelu_fwd(x):
    u = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_bwd(dy, cache):
    x, t = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du)


def _softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, heads):
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, k = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * k)


def _mha_fwd(xq, xkv, params, prefix, mask, heads):
    """Multi-head attention; xq/xkv are (B, Tq, D)/(B, Tk, D)."""
    q = xq @ params[prefix + "wq"] + params[prefix + "bq"]
    k = xkv @ params[prefix + "wk"] + params[prefix + "bk"]
    v = xkv @ params[prefix + "wv"] + params[prefix + "bv"]
    qh, kh, vh = (_split_heads(a, heads) for a in (q, k, v))
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = qh @ kh.swapaxes(-1, -2) * scale
    if mask is not None:
        scores = scores + mask
    attn = _softmax(scores)
    ctx = _merge_heads(attn @ vh)
    out = ctx @ params[prefix + "wo"] + params[prefix + "bo"]
    return out, (xq, xkv, qh, kh, vh, attn, ctx, scale)


def _mha_bwd(dout, cache, params, prefix, grads, heads):
    xq, xkv, qh, kh, vh, attn, ctx, scale = cache
    grads[prefix + "wo"] += _flat(ctx).T @ _flat(dout)
    grads[prefix + "bo"] += _flat(dout).sum(axis=0)
    dctx = dout @ params[prefix + "wo"].T
    doh = _split_heads(dctx, heads)
    dattn = doh @ vh.swapaxes(-1, -2)
    dvh = attn.swapaxes(-1, -2) @ doh
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dqh = dscores @ kh * scale
    dkh = dscores.swapaxes(-1, -2) @ qh * scale
    dq, dk, dv = (_merge_heads(a) for a in (dqh, dkh, dvh))
    dxq = dq @ params[prefix + "wq"].T
    dxkv = dk @ params[prefix + "wk"].T + dv @ params[prefix + "wv"].T
    grads[prefix + "wq"] += _flat(xq).T @ _flat(dq)
    grads[prefix + "bq"] += _flat(dq).sum(axis=0)
    grads[prefix + "wk"] += _flat(xkv).T @ _flat(dk)
    grads[prefix + "bk"] += _flat(dk).sum(axis=0)
    grads[prefix + "wv"] += _flat(xkv).T @ _flat(dv)
    grads[prefix + "bv"] += _flat(dv).sum(axis=0)
    return dxq, dxkv


def _ffn_fwd(x, params, prefix):
    h_pre = x @ params[prefix + "w1"] + params[prefix + "b1"]
    h, gcache = _gelu_fwd(h_pre)
    out = h @ params[prefix + "w2"] + params[prefix + "b2"]
    return out, (x, h, gcache)


def _ffn_bwd(dout, cache, params, prefix, grads):
    x, h, gcache = cache
    grads[prefix + "w2"] += _flat(h).T @ _flat(dout)
    grads[prefix + "b2"] += _flat(dout).sum(axis=0)
    dh = dout @ params[prefix + "w2"].T
    dh_pre = _gelu_bwd(dh, gcache)
    grads[prefix + "w1"] += _flat(x).T @ _flat(dh_pre)
    grads[prefix + "b1"] += _flat(dh_pre).sum(axis=0)
    return dh_pre @ params[prefix + "w1"].T


def _flat(x):
    return x.reshape(-1, x.shape[-1])


# -- full forward ------------------------------------------------------------


def _embed(params, ids, cfg, pos_table):
    d = cfg.model_dim
    return params["embed"][ids] * np.sqrt(d) + pos_table[: ids.shape[1]]


def _dropout_mask(shape, rate, rng, dtype):
    if rate <= 0 or rng is None:
        return None
    return (rng.random(shape) >= rate).astype(dtype) / (1.0 - rate)


def _apply_mask(x, m):
    return x if m is None else x * m


def encode_stack(params, cfg, src_ids, dtype=np.float32, dropout_rng=None):
    """Run the encoder; returns (memory, src_key_mask, caches)."""
    b, s = src_ids.shape
    if s > cfg.max_positions:
        raise ValueError(f"source length {s} exceeds max_positions {cfg.max_positions}")
    if s == 0:
        raise ValueError("source must contain at least one token")
    pos = sinusoidal_positions(s, cfg.model_dim, dtype)
    key_mask = np.where(src_ids == PAD_ID, NEG_INF, 0.0).astype(dtype)[:, None, None, :]
    x = _embed(params, src_ids, cfg, pos).astype(dtype)
    caches = []
    rate = cfg.dropout_rate if dropout_rng is not None else 0.0
    for i in range(cfg.encoder_layers):
        p = f"enc{i}."
        ln1, c_ln1 = _ln_fwd(x, params[p + "ln1.g"], params[p + "ln1.b"])
        attn, c_at = _mha_fwd(ln1, ln1, params, p + "attn.", key_mask, cfg.heads)
        m1 = _dropout_mask(attn.shape, rate, dropout_rng, dtype)
        x1 = x + _apply_mask(attn, m1)
        ln2, c_ln2 = _ln_fwd(x1, params[p + "ln2.g"], params[p + "ln2.b"])
        ff, c_ff = _ffn_fwd(ln2, params, p + "ffn.")
        m2 = _dropout_mask(ff.shape, rate, dropout_rng, dtype)
        x = x1 + _apply_mask(ff, m2)
        caches.append((c_ln1, c_at, c_ln2, c_ff, m1, m2))
    out, c_final = _ln_fwd(x, params["enc_ln.g"], params["enc_ln.b"])
    return out, key_mask, (caches, c_final)


def decode_stack(params, cfg, tgt_ids, memory, src_key_mask, dtype=np.float32, dropout_rng=None):
    """Run the decoder over a full target prefix; returns (logits, caches)."""
    b, t = tgt_ids.shape
    if t > cfg.max_positions:
        raise ValueError(f"target length {t} exceeds max_positions {cfg.max_positions}")
    pos = sinusoidal_positions(t, cfg.model_dim, dtype)
    causal = np.triu(np.full((t, t), NEG_INF, dtype=dtype), k=1)[None, None, :, :]
    tgt_key = np.where(tgt_ids == PAD_ID, NEG_INF, 0.0).astype(dtype)[:, None, None, :]
    self_mask = causal + tgt_key
    x = _embed(params, tgt_ids, cfg, pos).astype(dtype)
    caches = []
    rate = cfg.dropout_rate if dropout_rng is not None else 0.0
    for i in range(cfg.decoder_layers):
        p = f"dec{i}."
        ln1, c_ln1 = _ln_fwd(x, params[p + "ln1.g"], params[p + "ln1.b"])
        sa, c_sa = _mha_fwd(ln1, ln1, params, p + "self.", self_mask, cfg.heads)
        m1 = _dropout_mask(sa.shape, rate, dropout_rng, dtype)
        x1 = x + _apply_mask(sa, m1)
        ln2, c_ln2 = _ln_fwd(x1, params[p + "ln2.g"], params[p + "ln2.b"])
        ca, c_ca = _mha_fwd(ln2, memory, params, p + "cross.", src_key_mask, cfg.heads)
        m2 = _dropout_mask(ca.shape, rate, dropout_rng, dtype)
        x2 = x1 + _apply_mask(ca, m2)
        ln3, c_ln3 = _ln_fwd(x2, params[p + "ln3.g"], params[p + "ln3.b"])
        ff, c_ff = _ffn_fwd(ln3, params, p + "ffn.")
        m3 = _dropout_mask(ff.shape, rate, dropout_rng, dtype)
        x = x2 + _apply_mask(ff, m3)
        caches.append((c_ln1, c_sa, c_ln2, c_ca, c_ln3, c_ff, m1, m2, m3))
    out, c_final = _ln_fwd(x, params["dec_ln.g"], params["dec_ln.b"])
    logits = out @ params["embed"].T
    return logits, (caches, c_final, out)


def forward(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    src: Sequence[int],
    tgt_prefix: Sequence[int],
    dtype=np.float32,
) -> np.ndarray:
    """Logits for one (source, target-prefix) pair: (len(tgt_prefix), vocab).

    The caller frames sequences: src should end with eos, tgt_prefix should
    start with bos. Row r of the result conditions on src and
    tgt_prefix[0..r] only.
    """
    src_ids = np.asarray([list(src)], dtype=np.int64)
    if len(tgt_prefix) == 0:
        return np.zeros((0, cfg.vocab_size), dtype=dtype)
    tgt_ids = np.asarray([list(tgt_prefix)], dtype=np.int64)
    p = {k: v.astype(dtype, copy=False) for k, v in params.items()}
    memory, key_mask, _ = encode_stack(p, cfg, src_ids, dtype)
    logits, _ = decode_stack(p, cfg, tgt_ids, memory, key_mask, dtype)
    return logits[0]


# -- loss and analytic gradients ---------------------------------------------


def frame_batch(
    pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad a batch of (src, tgt) id sequences into model-ready arrays.

    src rows get eos appended; decoder input is bos + tgt; labels are
    tgt + eos. All padded with pad to the batch maxima.
    """
    if not pairs:
        raise ValueError("empty batch")
    s_max = max(len(s) for s, _ in pairs) + 1
    t_max = max(len(t) for _, t in pairs) + 1
    n = len(pairs)
    src = np.full((n, s_max), PAD_ID, dtype=np.int64)
    tgt_in = np.full((n, t_max), PAD_ID, dtype=np.int64)
    tgt_out = np.full((n, t_max), PAD_ID, dtype=np.int64)
    for i, (s, t) in enumerate(pairs):
        src[i, : len(s)] = list(s)
        src[i, len(s)] = EOS_ID
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1 : 1 + len(t)] = list(t)
        tgt_out[i, : len(t)] = list(t)
        tgt_out[i, len(t)] = EOS_ID
    return src, tgt_in, tgt_out


def loss_and_grads(
    params: dict[str, np.ndarray],
    cfg: ModelConfig,
    batch: Sequence[tuple[Sequence[int], Sequence[int]]],
    label_smoothing: float = 0.0,
    dtype=np.float32,
    dropout_rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean token cross-entropy (pad masked) and exact gradients.

    With label smoothing e, the target distribution is
    (1-e)*onehot + e/vocab. Gradients are computed by hand through the whole
    stack; the `dtype` argument exists so finite-difference checks can run
    everything in float64.
    """
    src, tgt_in, tgt_out = frame_batch(batch)
    p = {k: v.astype(dtype, copy=False) for k, v in params.items()}
    memory, key_mask, enc_cache = encode_stack(p, cfg, src, dtype, dropout_rng)
    logits, dec_cache = decode_stack(p, cfg, tgt_in, memory, key_mask, dtype, dropout_rng)

    mask = (tgt_out != PAD_ID).astype(dtype)
    n_tokens = mask.sum()
    if n_tokens == 0:
        raise ValueError("batch contains no unmasked target tokens")

    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    v = cfg.vocab_size
    e = label_smoothing
    b_idx, t_idx = np.nonzero(mask)
    gold_logp = logp[b_idx, t_idx, tgt_out[b_idx, t_idx]]
    loss = -(1 - e) * gold_logp.sum()
    if e > 0:
        loss -= (e / v) * logp[b_idx, t_idx].sum()
    loss = float(loss / n_tokens)

    probs = np.exp(logp)
    dlogits = probs * mask[:, :, None]
    dlogits[b_idx, t_idx, tgt_out[b_idx, t_idx]] -= 1 - e
    if e > 0:
        dlogits[b_idx, t_idx] -= e / v
    dlogits /= n_tokens

    grads = {k: np.zeros_like(arr) for k, arr in p.items()}
    dmem = _backward_decoder(dlogits, dec_cache, p, cfg, grads, tgt_in)
    _backward_encoder(dmem, enc_cache, p, cfg, grads, src)
    return loss, grads


def _backward_decoder(dlogits, dec_cache, p, cfg, grads, tgt_ids):
    caches, c_final, final_out = dec_cache
    grads["embed"] += _flat(dlogits).T @ _flat(final_out)
    dout = dlogits @ p["embed"]
    dx, dg, db = _ln_bwd(dout, c_final)
    grads["dec_ln.g"] += dg
    grads["dec_ln.b"] += db
    dmem_total = None
    for i in reversed(range(cfg.decoder_layers)):
        pr = f"dec{i}."
        c_ln1, c_sa, c_ln2, c_ca, c_ln3, c_ff, m1, m2, m3 = caches[i]
        dff = _apply_mask(dx, m3)
        dln3 = _ffn_bwd(dff, c_ff, p, pr + "ffn.", grads)
        dx2, dg, db = _ln_bwd(dln3, c_ln3)
        grads[pr + "ln3.g"] += dg
        grads[pr + "ln3.b"] += db
        dx2 = dx2 + dx
        dca = _apply_mask(dx2, m2)
        dln2, dmem = _mha_bwd(dca, c_ca, p, pr + "cross.", grads, cfg.heads)
        dmem_total = dmem if dmem_total is None else dmem_total + dmem
        dx1, dg, db = _ln_bwd(dln2, c_ln2)
        grads[pr + "ln2.g"] += dg
        grads[pr + "ln2.b"] += db
        dx1 = dx1 + dx2
        dsa = _apply_mask(dx1, m1)
        dln1_q, dln1_kv = _mha_bwd(dsa, c_sa, p, pr + "self.", grads, cfg.heads)
        dln1 = dln1_q + dln1_kv
        dx0, dg, db = _ln_bwd(dln1, c_ln1)
        grads[pr + "ln1.g"] += dg
        grads[pr + "ln1.b"] += db
        dx = dx0 + dx1
    _embed_bwd(dx, tgt_ids, p, cfg, grads)
    return dmem_total


def _backward_encoder(dmem, enc_cache, p, cfg, grads, src_ids):
    caches, c_final = enc_cache
    dx, dg, db = _ln_bwd(dmem, c_final)
    grads["enc_ln.g"] += dg
    grads["enc_ln.b"] += db
    for i in reversed(range(cfg.encoder_layers)):
        pr = f"enc{i}."
        c_ln1, c_at, c_ln2, c_ff, m1, m2 = caches[i]
        dff = _apply_mask(dx, m2)
        dln2 = _ffn_bwd(dff, c_ff, p, pr + "ffn.", grads)
        dx1, dg, db = _ln_bwd(dln2, c_ln2)
        grads[pr + "ln2.g"] += dg
        grads[pr + "ln2.b"] += db
        dx1 = dx1 + dx
        dattn = _apply_mask(dx1, m1)
        dln1_q, dln1_kv = _mha_bwd(dattn, c_at, p, pr + "attn.", grads, cfg.heads)
        dln1 = dln1_q + dln1_kv
        dx0, dg, db = _ln_bwd(dln1, c_ln1)
        grads[pr + "ln1.g"] += dg
        grads[pr + "ln1.b"] += db
        dx = dx0 + dx1
    _embed_bwd(dx, src_ids, p, cfg, grads)


def _embed_bwd(dx, ids, p, cfg, grads):
    scaled = dx * np.sqrt(cfg.model_dim)
    np.add.at(grads["embed"], ids.reshape(-1), _flat(scaled))
