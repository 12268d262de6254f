"""Decoding: batched greedy with per-layer KV caches, and beam search.

Sequence framing matches training: the encoder sees the source tokens plus a
final eos; the decoder starts from bos and generates until eos or the length
cap. Scores are sums of token log-probabilities; normalized scores divide by
token count, eos included.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    ModelConfig,
    _ln_fwd,
    _softmax,
    _split_heads,
    _merge_heads,
    _ffn_fwd,
    encode_stack,
    decode_stack,
    sinusoidal_positions,
)
from .checkpoint import Checkpoint
from ..tokenizer import PAD_ID, BOS_ID, EOS_ID


@dataclass
class GenerationResult:
    text: str
    truncated: bool
    token_ids: list = field(default_factory=list)
    logprob: float = 0.0

    @property
    def normalized_logprob(self) -> float:
        return self.logprob / max(1, len(self.token_ids))


def _log_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class _IncrementalDecoder:
    """Decoder state over a fixed encoder memory, one token per step.

    Self-attention keys/values live in preallocated buffers; cross-attention
    keys/values are projected from the encoder memory once. Rows are
    independent, so the same state drives batched greedy or a beam (with
    `reorder` between steps).
    """

    def __init__(self, params, cfg: ModelConfig, memory, src_key_mask, max_steps: int, dtype):
        self.p = params
        self.cfg = cfg
        self.dtype = dtype
        self.memory = memory
        self.src_key_mask = src_key_mask
        b = memory.shape[0]
        h, k = cfg.heads, cfg.model_dim // cfg.heads
        self.pos = sinusoidal_positions(min(max_steps + 1, cfg.max_positions), cfg.model_dim, dtype)
        self.t = 0
        self.self_k = [np.zeros((b, h, max_steps + 1, k), dtype=dtype) for _ in range(cfg.decoder_layers)]
        self.self_v = [np.zeros((b, h, max_steps + 1, k), dtype=dtype) for _ in range(cfg.decoder_layers)]
        self.cross_k = []
        self.cross_v = []
        for i in range(cfg.decoder_layers):
            pr = f"dec{i}.cross."
            self.cross_k.append(_split_heads(memory @ params[pr + "wk"] + params[pr + "bk"], h))
            self.cross_v.append(_split_heads(memory @ params[pr + "wv"] + params[pr + "bv"], h))

    def step(self, ids: np.ndarray) -> np.ndarray:
        """Feed one token per row; returns next-token logits (rows, vocab)."""
        if self.t >= self.pos.shape[0]:
            raise ValueError(f"decode exceeded max_positions {self.cfg.max_positions}")
        p, cfg = self.p, self.cfg
        h = cfg.heads
        scale = 1.0 / np.sqrt(cfg.model_dim // h)
        x = p["embed"][ids][:, None, :] * np.sqrt(cfg.model_dim) + self.pos[self.t]
        x = x.astype(self.dtype)
        for i in range(cfg.decoder_layers):
            pr = f"dec{i}."
            ln1, _ = _ln_fwd(x, p[pr + "ln1.g"], p[pr + "ln1.b"])
            q = _split_heads(ln1 @ p[pr + "self.wq"] + p[pr + "self.bq"], h)
            self.self_k[i][:, :, self.t] = _split_heads(
                ln1 @ p[pr + "self.wk"] + p[pr + "self.bk"], h
            )[:, :, 0]
            self.self_v[i][:, :, self.t] = _split_heads(
                ln1 @ p[pr + "self.wv"] + p[pr + "self.bv"], h
            )[:, :, 0]
            keys = self.self_k[i][:, :, : self.t + 1]
            vals = self.self_v[i][:, :, : self.t + 1]
            attn = _softmax(q @ keys.swapaxes(-1, -2) * scale)
            sa = _merge_heads(attn @ vals) @ p[pr + "self.wo"] + p[pr + "self.bo"]
            x1 = x + sa
            ln2, _ = _ln_fwd(x1, p[pr + "ln2.g"], p[pr + "ln2.b"])
            q2 = _split_heads(ln2 @ p[pr + "cross.wq"] + p[pr + "cross.bq"], h)
            scores = q2 @ self.cross_k[i].swapaxes(-1, -2) * scale + self.src_key_mask
            attn2 = _softmax(scores)
            ca = _merge_heads(attn2 @ self.cross_v[i]) @ p[pr + "cross.wo"] + p[pr + "cross.bo"]
            x2 = x1 + ca
            ln3, _ = _ln_fwd(x2, p[pr + "ln3.g"], p[pr + "ln3.b"])
            ff, _ = _ffn_fwd(ln3, p, pr + "ffn.")
            x = x2 + ff
        out, _ = _ln_fwd(x, p["dec_ln.g"], p["dec_ln.b"])
        self.t += 1
        return (out[:, 0, :] @ p["embed"].T).astype(self.dtype)

    def reorder(self, parents: np.ndarray) -> None:
        """Permute rows (beam search parent selection)."""
        self.memory = self.memory[parents]
        self.src_key_mask = self.src_key_mask[parents]
        for i in range(self.cfg.decoder_layers):
            self.self_k[i] = self.self_k[i][parents]
            self.self_v[i] = self.self_v[i][parents]
            self.cross_k[i] = self.cross_k[i][parents]
            self.cross_v[i] = self.cross_v[i][parents]


def _frame_sources(tokenizer, texts: Sequence[str]) -> list[list[int]]:
    return [tokenizer.encode(t) + [EOS_ID] for t in texts]


def _default_max_len(cfg: ModelConfig, src_len: int) -> int:
    return min(cfg.max_positions - 1, 2 * src_len + 8)


def decode_greedy_batch(
    ckpt: Checkpoint,
    texts: Sequence[str],
    max_len: int | None = None,
    batch_size: int = 64,
) -> list[GenerationResult]:
    """Greedy-decode many inputs, bucketed by source length for tight batches."""
    tokenizer = _require_tokenizer(ckpt)
    cfg = ckpt.config
    framed = _frame_sources(tokenizer, texts)
    order = sorted(range(len(texts)), key=lambda i: (len(framed[i]), i))
    results: list[GenerationResult | None] = [None] * len(texts)
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        batch = [framed[i] for i in idx]
        cap = max_len if max_len is not None else _default_max_len(cfg, max(len(s) for s in batch))
        outs = _greedy_on_framed(ckpt.params, cfg, batch, cap)
        for i, out in zip(idx, outs):
            out.text = tokenizer.decode(out.token_ids).text
            results[i] = out
    return results  # type: ignore[return-value]


def _greedy_on_framed(params, cfg, framed: list[list[int]], max_len: int) -> list[GenerationResult]:
    b = len(framed)
    s_max = max(len(s) for s in framed)
    src = np.full((b, s_max), PAD_ID, dtype=np.int64)
    for i, s in enumerate(framed):
        src[i, : len(s)] = s
    dtype = np.float32
    memory, key_mask, _ = encode_stack(params, cfg, src, dtype)
    if max_len <= 0:
        return [GenerationResult("", True) for _ in range(b)]
    state = _IncrementalDecoder(params, cfg, memory, key_mask, max_len, dtype)
    ids = np.full(b, BOS_ID, dtype=np.int64)
    finished = np.zeros(b, dtype=bool)
    tokens: list[list[int]] = [[] for _ in range(b)]
    logprob = np.zeros(b, dtype=np.float64)
    for _ in range(max_len):
        logits = state.step(ids)
        logp = _log_softmax(logits.astype(np.float64))
        nxt = np.argmax(logits, axis=-1)
        for i in range(b):
            if finished[i]:
                continue
            tokens[i].append(int(nxt[i]))
            logprob[i] += logp[i, nxt[i]]
            if nxt[i] == EOS_ID:
                finished[i] = True
        if finished.all():
            break
        ids = nxt
    return [
        GenerationResult("", not finished[i], tokens[i], float(logprob[i])) for i in range(b)
    ]


def decode_greedy(ckpt: Checkpoint, src_text: str, max_len: int | None = None) -> GenerationResult:
    """Argmax decoding (ties go to the lowest token id)."""
    return decode_greedy_batch(ckpt, [src_text], max_len=max_len)[0]


def _require_tokenizer(ckpt: Checkpoint):
    if ckpt.tokenizer is None:
        raise ValueError("checkpoint has no tokenizer attached; load one first")
    return ckpt.tokenizer


# -- generic search over a step function ------------------------------------


def greedy_search(
    step_fn: Callable[[tuple[int, ...]], np.ndarray],
    eos_id: int,
    max_len: int,
) -> tuple[list[int], float, bool]:
    """Greedy over step_fn(prefix) -> log-prob vector. Prefix excludes bos.

    Returns (tokens, total logprob, truncated).
    """
    prefix: tuple[int, ...] = ()
    total = 0.0
    for _ in range(max_len):
        logp = step_fn(prefix)
        nxt = int(np.argmax(logp))
        total += float(logp[nxt])
        prefix = prefix + (nxt,)
        if nxt == eos_id:
            return list(prefix), total, False
    return list(prefix), total, True


def beam_search(
    step_fn: Callable[[tuple[int, ...]], np.ndarray],
    eos_id: int,
    beam: int,
    max_len: int,
) -> list[tuple[list[int], float, bool]]:
    """Length-normalized beam search over an arbitrary scorer.

    Returns candidates sorted by normalized score (best first), each as
    (tokens, total logprob, truncated). The greedy path is always included
    as a candidate, so the winner never scores below greedy.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    active: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    done: list[tuple[list[int], float, bool]] = []
    for _ in range(max_len):
        if not active:
            break
        expansions: list[tuple[float, tuple[int, ...], float]] = []
        for prefix, score in active:
            logp = step_fn(prefix)
            top = np.argsort(-logp, kind="stable")[: beam + 1]
            for tok in top:
                expansions.append((score + float(logp[tok]), prefix + (int(tok),), 0.0))
        expansions.sort(key=lambda e: (-e[0], e[1]))
        active = []
        for score, prefix, _ in expansions:
            if prefix[-1] == eos_id:
                done.append((list(prefix), score, False))
            elif len(active) < beam:
                active.append((prefix, score))
            if len(active) >= beam and len(done) >= beam:
                break
    for prefix, score in active:
        done.append((list(prefix), score, True))
    g_tokens, g_score, g_trunc = greedy_search(step_fn, eos_id, max_len)
    if g_tokens not in [d[0] for d in done]:
        done.append((g_tokens, g_score, g_trunc))
    done.sort(key=lambda d: (-(d[1] / max(1, len(d[0]))), len(d[0]), d[0]))
    return done


def decode_beam(
    ckpt: Checkpoint,
    src_text: str,
    beam: int,
    max_len: int | None = None,
) -> GenerationResult:
    """Beam search against a checkpoint; beam=1 is exactly greedy decoding."""
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if beam == 1:
        return decode_greedy(ckpt, src_text, max_len=max_len)
    tokenizer = _require_tokenizer(ckpt)
    cfg = ckpt.config
    framed = _frame_sources(tokenizer, [src_text])[0]
    cap = max_len if max_len is not None else _default_max_len(cfg, len(framed))
    src = np.asarray([framed], dtype=np.int64)
    memory, key_mask, _ = encode_stack(ckpt.params, cfg, src, np.float32)

    cache: dict[tuple[int, ...], np.ndarray] = {}

    def step_fn(prefix: tuple[int, ...]) -> np.ndarray:
        hit = cache.get(prefix)
        if hit is not None:
            return hit
        tgt = np.asarray([[BOS_ID, *prefix]], dtype=np.int64)
        logits, _ = decode_stack(ckpt.params, cfg, tgt, memory, key_mask, np.float32)
        logp = _log_softmax(logits[0, -1].astype(np.float64))
        cache[prefix] = logp
        return logp

    if cap <= 0:
        return GenerationResult("", True)
    tokens, score, truncated = beam_search(step_fn, EOS_ID, beam, cap)[0]
    text = tokenizer.decode(tokens).text
    return GenerationResult(text, truncated, tokens, score)


def sequence_logprob(ckpt: Checkpoint, src_text: str, out_tokens: Sequence[int]) -> float:
    """Total log-probability the model assigns to an output token sequence.

    The sequence should end with eos (generation results include it unless
    truncated).
    """
    tokenizer = _require_tokenizer(ckpt)
    framed = tokenizer.encode(src_text) + [EOS_ID]
    src = np.asarray([framed], dtype=np.int64)
    memory, key_mask, _ = encode_stack(ckpt.params, ckpt.config, src, np.float32)
    toks = list(out_tokens)
    tgt_in = np.asarray([[BOS_ID, *toks[:-1]]], dtype=np.int64) if toks else np.asarray([[BOS_ID]], dtype=np.int64)
    logits, _ = decode_stack(ckpt.params, ckpt.config, tgt_in, memory, key_mask, np.float32)
    logp = _log_softmax(logits[0].astype(np.float64))
    return float(sum(logp[i, t] for i, t in enumerate(toks)))
