"""Synthetic <noised, original> pair generation from clean corpora.

Noise is character-level: insert, delete, or replace random characters at
random locations. Whitespace is never inserted, deleted, or replaced, so the
whitespace word count of a sentence is invariant under corruption and word
filters mean the same thing before and after noising. Insert/replace
characters are drawn from a corpus-derived alphabet, frequency-weighted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .corpus import Dataset, ExamplePair, Locale, Manifest

# Substream tags so train/eval/sampling draws never collide.
_STREAM_TRAIN = 0
_STREAM_EVAL = 1
_STREAM_SAMPLE = 2


@dataclass(frozen=True)
class NoiseSpec:
    """Operation mix, per-sentence edit count range, copy counts, and seed.

    The operation probabilities are exact rationals and must sum to 1.
    Edits per sentence are sampled uniformly from {min_edits..max_edits}.
    ``train_copies`` defaults to 8 noised sentences per original for the
    training set; evaluation uses ``eval_copies`` (default 1).
    """

    p_insert: Fraction = Fraction(1, 3)
    p_delete: Fraction = Fraction(1, 3)
    p_replace: Fraction = Fraction(1, 3)
    min_edits: int = 1
    max_edits: int = 3
    train_copies: int = 8
    eval_copies: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.p_insert + self.p_delete + self.p_replace != 1:
            raise ValueError("operation probabilities must sum to 1 exactly")
        if min(self.p_insert, self.p_delete, self.p_replace) < 0:
            raise ValueError("operation probabilities must be non-negative")
        if not (0 <= self.min_edits <= self.max_edits):
            raise ValueError("need 0 <= min_edits <= max_edits")
        if self.train_copies < 1 or self.eval_copies < 1:
            raise ValueError("copy counts must be >= 1")

    def to_dict(self) -> dict:
        return {
            "p_insert": str(self.p_insert),
            "p_delete": str(self.p_delete),
            "p_replace": str(self.p_replace),
            "min_edits": self.min_edits,
            "max_edits": self.max_edits,
            "train_copies": self.train_copies,
            "eval_copies": self.eval_copies,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(
            p_insert=Fraction(d.get("p_insert", "1/3")),
            p_delete=Fraction(d.get("p_delete", "1/3")),
            p_replace=Fraction(d.get("p_replace", "1/3")),
            min_edits=int(d.get("min_edits", 1)),
            max_edits=int(d.get("max_edits", 3)),
            train_copies=int(d.get("train_copies", 8)),
            eval_copies=int(d.get("eval_copies", 1)),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "NoiseSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class Alphabet:
    """Distinct non-whitespace characters of a corpus with relative frequencies."""

    def __init__(self, symbols: Sequence[str], frequencies: Sequence[float]):
        if len(symbols) != len(frequencies) or not symbols:
            raise ValueError("symbols and frequencies must be non-empty and aligned")
        total = float(sum(frequencies))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"frequencies sum to {total}, not 1")
        self.symbols = list(symbols)
        self.frequencies = np.asarray(frequencies, dtype=np.float64)
        self._cdf = np.cumsum(self.frequencies)

    def sample(self, rng: np.random.Generator) -> str:
        i = int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return self.symbols[min(i, len(self.symbols) - 1)]


def build_alphabet(corpus: Iterable[str]) -> Alphabet:
    """Count non-whitespace characters; frequencies proportional to occurrence."""
    counts: dict[str, int] = {}
    for line in corpus:
        for ch in line:
            if not ch.isspace():
                counts[ch] = counts.get(ch, 0) + 1
    if not counts:
        raise ValueError("corpus contains no non-whitespace characters")
    symbols = sorted(counts)
    total = sum(counts.values())
    return Alphabet(symbols, [counts[s] / total for s in symbols])


_OPS = ("insert", "delete", "replace")


def _draw_op(spec: NoiseSpec, rng: np.random.Generator) -> str:
    r = rng.random()
    if r < float(spec.p_insert):
        return "insert"
    if r < float(spec.p_insert + spec.p_delete):
        return "delete"
    return "replace"


def _deletable_positions(chars: list[str]) -> list[int]:
    # Only characters inside words of length >= 2 may be deleted: deleting a
    # one-character word would change the whitespace word count.
    positions = []
    i, n = 0, len(chars)
    while i < n:
        if chars[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not chars[j].isspace():
            j += 1
        if j - i >= 2:
            positions.extend(range(i, j))
        i = j
    return positions


def corrupt(
    sentence: str,
    spec: NoiseSpec,
    alphabet: Alphabet,
    rng: np.random.Generator,
    op_log: list[str] | None = None,
) -> str:
    """Apply k ~ Uniform{min_edits..max_edits} sequential character edits.

    Delete is resampled whenever no position can be deleted without emptying
    a word, so the result is never empty. Pass ``op_log`` to record the
    operations actually applied.
    """
    if not sentence:
        raise ValueError("sentence is empty")
    chars = list(sentence)
    k = int(rng.integers(spec.min_edits, spec.max_edits + 1))
    for _ in range(k):
        op = _draw_op(spec, rng)
        if op == "delete":
            deletable = _deletable_positions(chars)
            while not deletable and op == "delete":
                if spec.p_insert + spec.p_replace == 0:
                    raise ValueError("cannot delete from a one-character sentence")
                op = _draw_op(spec, rng)
        if op == "insert":
            pos = int(rng.integers(0, len(chars) + 1))
            chars.insert(pos, alphabet.sample(rng))
        elif op == "delete":
            chars.pop(deletable[int(rng.integers(0, len(deletable)))])
        else:
            candidates = [i for i, c in enumerate(chars) if not c.isspace()]
            pos = candidates[int(rng.integers(0, len(candidates)))]
            chars[pos] = alphabet.sample(rng)
        if op_log is not None:
            op_log.append(op)
    return "".join(chars)


def _sentence_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, stream, index))))


def generate_training(
    corpus: Sequence[str],
    spec: NoiseSpec,
    alphabet: Alphabet,
    locale: Locale,
) -> Dataset:
    """Emit ``train_copies`` <corrupt(s), s> pairs per sentence, sentence-major.

    Each sentence draws from its own (seed, index)-derived stream, so the
    corpus may be sharded and regenerated in any partition with identical
    output.
    """
    pairs = []
    for i, sentence in enumerate(corpus):
        rng = _sentence_rng(spec.seed, _STREAM_TRAIN, i)
        for _ in range(spec.train_copies):
            pairs.append(ExamplePair(corrupt(sentence, spec, alphabet, rng), sentence, locale))
    return Dataset(pairs, Manifest(seed=spec.seed))


def generate_eval(
    corpus: Sequence[str],
    spec: NoiseSpec,
    alphabet: Alphabet,
    locale: Locale,
    target_count: int,
    min_words: int = 6,
) -> Dataset:
    """Noise each sentence, drop trivial/short pairs, sample exactly target_count.

    Trivial means noised == original. Short means fewer than ``min_words``
    whitespace-separated words. Raises if the surviving pool is smaller than
    ``target_count``.
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    pool = []
    for i, sentence in enumerate(corpus):
        rng = _sentence_rng(spec.seed, _STREAM_EVAL, i)
        for _ in range(spec.eval_copies):
            noised = corrupt(sentence, spec, alphabet, rng)
            if noised == sentence:
                continue
            if len(sentence.split()) < min_words:
                continue
            pool.append(ExamplePair(noised, sentence, locale))
    if len(pool) < target_count:
        raise ValueError(f"eval pool size {len(pool)} is below target {target_count}")
    rng = _sentence_rng(spec.seed, _STREAM_SAMPLE, 0)
    chosen = sorted(rng.choice(len(pool), size=target_count, replace=False).tolist())
    return Dataset([pool[i] for i in chosen], Manifest(seed=spec.seed))
