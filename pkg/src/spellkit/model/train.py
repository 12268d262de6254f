"""Training loop: Adam with inverse-sqrt warmup and global-norm clipping.

Batches are length-bucketed (sorted by total token count, then chunked) so
padding waste stays low; batch order is reshuffled each epoch from the run
seed. Everything is deterministic given the config.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict
from typing import Callable, Sequence

import numpy as np

from .core import ModelConfig, init, loss_and_grads, param_names
from .checkpoint import Checkpoint
from ..seeds import derive_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    warmup_steps: int = 200
    batch_size: int = 32
    epochs: int = 10
    label_smoothing: float = 0.0
    seed: int = 0
    gradient_clip_norm: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.label_smoothing < 0.5:
            raise ValueError("label_smoothing must be in [0, 0.5)")
        if self.gradient_clip_norm <= 0:
            raise ValueError("gradient_clip_norm must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.warmup_steps < 0:
            raise ValueError("batch_size >= 1, epochs >= 0, warmup_steps >= 0 required")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to the base rate, then inverse-sqrt decay."""
    if step < 1:
        raise ValueError("step counts from 1")
    warm = max(cfg.warmup_steps, 1)
    return cfg.learning_rate * min(step / warm, (warm / step) ** 0.5)


def _make_batches(
    encoded: list[tuple[list[int], list[int]]], batch_size: int
) -> list[list[tuple[list[int], list[int]]]]:
    order = sorted(range(len(encoded)), key=lambda i: (len(encoded[i][0]) + len(encoded[i][1]), i))
    return [
        [encoded[j] for j in order[i : i + batch_size]]
        for i in range(0, len(order), batch_size)
    ]


def _global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    return total**0.5


class AdamState:
    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(
        self,
        params: dict[str, np.ndarray],
        grads: dict[str, np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.t += 1
        bc1 = 1 - beta1**self.t
        bc2 = 1 - beta2**self.t
        for k in params:
            g = grads[k].astype(np.float32, copy=False)
            self.m[k] = beta1 * self.m[k] + (1 - beta1) * g
            self.v[k] = beta2 * self.v[k] + (1 - beta2) * g * g
            params[k] -= lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + eps)


def train_on_encoded(
    encoded: Sequence[tuple[list[int], list[int]]],
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    epoch_callback: Callable[[int, float], None] | None = None,
) -> tuple[dict[str, np.ndarray], int, list[float]]:
    """Core loop over already-tokenized (src_ids, tgt_ids) pairs.

    Returns (params, steps_taken, per-epoch mean losses). On a non-finite
    loss the loop aborts and returns the last epoch-end snapshot.
    """
    if not encoded:
        raise ValueError("no training pairs")
    params = init(mcfg, derive_seed(tcfg.seed, "init"))
    order_rng = np.random.Generator(np.random.PCG64(derive_seed(tcfg.seed, "batch-order")))
    dropout_rng = (
        np.random.Generator(np.random.PCG64(derive_seed(tcfg.seed, "dropout")))
        if mcfg.dropout_rate > 0
        else None
    )
    adam = AdamState(params)
    batches = _make_batches(list(encoded), tcfg.batch_size)
    snapshot = {k: v.copy() for k, v in params.items()}
    snapshot_step = 0
    losses: list[float] = []
    step = 0
    for epoch in range(tcfg.epochs):
        perm = order_rng.permutation(len(batches))
        epoch_loss = 0.0
        epoch_tokens = 0
        bad = False
        for bi in perm:
            batch = batches[bi]
            loss, grads = loss_and_grads(
                params,
                mcfg,
                batch,
                label_smoothing=tcfg.label_smoothing,
                dropout_rng=dropout_rng,
            )
            if not np.isfinite(loss):
                log.warning("non-finite loss at step %d; reverting to last epoch snapshot", step + 1)
                bad = True
                break
            norm = _global_norm(grads)
            if norm > tcfg.gradient_clip_norm:
                scale = tcfg.gradient_clip_norm / norm
                for k in grads:
                    grads[k] *= scale
            step += 1
            adam.update(params, grads, lr_at(step, tcfg))
            n_tok = sum(len(t) + 1 for _, t in batch)
            epoch_loss += loss * n_tok
            epoch_tokens += n_tok
        if bad or any(not np.isfinite(v).all() for v in params.values()):
            return snapshot, snapshot_step, losses
        mean_loss = epoch_loss / max(epoch_tokens, 1)
        losses.append(mean_loss)
        log.info("epoch %d/%d loss %.4f", epoch + 1, tcfg.epochs, mean_loss)
        if epoch_callback is not None:
            epoch_callback(epoch, mean_loss)
        snapshot = {k: v.copy() for k, v in params.items()}
        snapshot_step = step
    return params, step, losses


def train(train_data, tokenizer, mcfg: ModelConfig, tcfg: TrainConfig) -> Checkpoint:
    """Train from a Dataset and a tokenizer; returns an in-memory Checkpoint.

    Dataset rows are encoded once up front. The tokenizer reference inside
    the checkpoint is filled in when the checkpoint is saved next to a
    tokenizer file.
    """
    encoded = [
        (tokenizer.encode(pair.input), tokenizer.encode(pair.label)) for pair in train_data.pairs
    ]
    max_src = max((len(s) for s, _ in encoded), default=0) + 1
    max_tgt = max((len(t) for _, t in encoded), default=0) + 1
    if max(max_src, max_tgt) > mcfg.max_positions:
        raise ValueError(
            f"framed length {max(max_src, max_tgt)} exceeds max_positions {mcfg.max_positions}"
        )
    params, step, losses = train_on_encoded(encoded, mcfg, tcfg)
    return Checkpoint(
        config=mcfg,
        params=params,
        step=step,
        losses=losses,
        rng_state={"train_seed": tcfg.seed, "scheme": "pcg64-sha256-derived"},
        tokenizer=tokenizer,
    )
