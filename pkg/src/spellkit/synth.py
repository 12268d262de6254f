"""Toy language generator for end-to-end experiments.

Each toy language has a private-use locale code, its own script (disjoint
code-point ranges, so languages never share characters), a fixed word
inventory, and Zipf-weighted word frequencies. Sentences are single-space
joined words, at least six words long so evaluation length filters keep
everything.
"""

from __future__ import annotations

import numpy as np

from .corpus import Locale
from .seeds import derive_seed

# Script ranges are all NFC-stable lowercase letters with 1-3 byte UTF-8
# encodings, and none are whitespace.
SCRIPTS = {
    "zxa": [chr(c) for c in range(ord("a"), ord("z") + 1)],
    "zxb": [chr(c) for c in range(0x03B1, 0x03CA) if c != 0x03C2],  # Greek, no final sigma
    "zxc": [chr(c) for c in range(0x0430, 0x0450)],  # Cyrillic
    "zxd": [chr(c) for c in range(0x0561, 0x0587)],  # Armenian
    "zxe": [chr(c) for c in range(0x10D0, 0x10F1)],  # Georgian
}

DEFAULT_WORDS = 150
_SENT_MIN_WORDS = 6
_SENT_MAX_WORDS = 9


def language_locales() -> list[Locale]:
    return [Locale.parse(code) for code in sorted(SCRIPTS)]


def make_words(code: str, seed: int, n_words: int = DEFAULT_WORDS) -> list[str]:
    """A fixed word inventory: distinct words of 3-6 letters from the script."""
    letters = SCRIPTS[code]
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "synth-words", code)))
    words: list[str] = []
    seen = set()
    while len(words) < n_words:
        length = int(rng.integers(3, 7))
        word = "".join(letters[int(i)] for i in rng.integers(0, len(letters), size=length))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def make_corpus(code: str, n_sentences: int, seed: int, n_words: int = DEFAULT_WORDS) -> list[str]:
    """Sentences of 6-9 words drawn from a Zipf-weighted inventory."""
    if code not in SCRIPTS:
        raise ValueError(f"unknown toy language {code!r}; have {sorted(SCRIPTS)}")
    words = make_words(code, seed, n_words)
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    weights = 1.0 / (ranks + 2.7)
    weights /= weights.sum()
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "synth-corpus", code)))
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(_SENT_MIN_WORDS, _SENT_MAX_WORDS + 1))
        idx = rng.choice(len(words), size=length, p=weights)
        sentences.append(" ".join(words[int(i)] for i in idx))
    return sentences
