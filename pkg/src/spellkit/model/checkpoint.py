"""Versioned binary checkpoints.

Layout: magic ``SQ2Q1``, a little-endian uint64 header length, a UTF-8 JSON
header (config, step counter, losses, tokenizer path + sha256, rng state,
tensor manifest), then raw little-endian float32 tensors concatenated in
declared parameter order.

A checkpoint references the tokenizer it was trained with by path and
content hash; loading verifies the hash so a model is never silently paired
with the wrong vocabulary.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ModelConfig, param_names
from ..tokenizer import TokenizerModel

MAGIC = b"SQ2Q1"


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    step: int = 0
    losses: list = field(default_factory=list)
    tokenizer_path: str | None = None
    tokenizer_sha256: str | None = None
    rng_state: dict = field(default_factory=dict)
    # runtime-only companion, never serialized; decoding requires it
    tokenizer: TokenizerModel | None = None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path: str | Path, tokenizer_path: str | Path) -> None:
    """Write the checkpoint, binding it to the tokenizer file's hash.

    The stored tokenizer path is relative to the checkpoint's directory when
    possible so run directories stay relocatable.
    """
    path = Path(path)
    tok = Path(tokenizer_path)
    if not tok.is_file():
        raise FileNotFoundError(f"tokenizer file not found: {tok}")
    try:
        stored = str(tok.resolve().relative_to(path.resolve().parent))
    except ValueError:
        stored = str(tok.resolve())
    names = param_names(ckpt.config)
    if set(names) != set(ckpt.params):
        raise ValueError("parameter names do not match the config's declared set")
    header = {
        "format": "SQ2Q1",
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "losses": list(ckpt.losses),
        "tokenizer": {"path": stored, "sha256": _sha256(tok)},
        "rng_state": ckpt.rng_state,
        "tensors": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.params[n], dtype="<f4").tobytes())


def load_checkpoint(
    path: str | Path,
    tokenizer_path: str | Path | None = None,
    verify_tokenizer: bool = True,
) -> tuple[Checkpoint, TokenizerModel | None]:
    """Read a checkpoint; verify and load its tokenizer.

    The tokenizer resolves from the stored (checkpoint-relative) path unless
    an explicit path overrides it. Hash mismatch is an error. Pass
    verify_tokenizer=False to load bare parameters only.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
        names = param_names(cfg)
        manifest = header["tensors"]
        if [t["name"] for t in manifest] != names:
            raise ValueError("tensor manifest does not match the config's declared order")
        params = {}
        for t in manifest:
            shape = tuple(t["shape"])
            n_items = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * n_items)
            if len(buf) != 4 * n_items:
                raise ValueError(f"truncated tensor {t['name']}")
            params[t["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    ckpt = Checkpoint(
        config=cfg,
        params=params,
        step=header["step"],
        losses=header.get("losses", []),
        tokenizer_path=header["tokenizer"]["path"],
        tokenizer_sha256=header["tokenizer"]["sha256"],
        rng_state=header.get("rng_state", {}),
    )
    tokenizer = None
    if verify_tokenizer:
        tok_path = Path(tokenizer_path) if tokenizer_path else path.parent / ckpt.tokenizer_path
        if not tok_path.is_file():
            raise FileNotFoundError(f"tokenizer file not found: {tok_path}")
        actual = _sha256(tok_path)
        if actual != ckpt.tokenizer_sha256:
            raise ValueError(
                f"tokenizer hash mismatch: checkpoint expects {ckpt.tokenizer_sha256}, "
                f"{tok_path} has {actual}"
            )
        tokenizer = TokenizerModel.load(tok_path)
        ckpt.tokenizer = tokenizer
    return ckpt, tokenizer
