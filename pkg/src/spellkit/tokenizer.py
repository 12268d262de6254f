"""Subword tokenizers: BPE (character-initialized) and BBPE (byte-initialized).

Both schemes learn merges greedily over whitespace-delimited word types, with
a leading boundary-marker symbol on every word so merges never cross
whitespace. Text is NFC-normalized before segmentation. Detokenization joins
words with single spaces, so runs of whitespace collapse.

Vocabulary layout (ids are dense):
    0..3   specials: <pad>, <s>, </s>, <unk>
    4      word-boundary marker (decodes to a space)
    5..    base alphabet: all 256 byte values (BBPE) or the training
           corpus's distinct characters (BPE), then learned merges.

Model file format (UTF-8 text, bit-exact across platforms):
    line 1: ``subword/v1 <scheme> <vocab_size>``
    then one ``V <id> <hex-escaped token>`` line per vocabulary entry
    then one ``M <left_id> <right_id> <new_id>`` line per merge, in order.
"""

from __future__ import annotations

import unicodedata
from pathlib import Path
from typing import Iterable, Sequence

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
MARKER_ID = 4

_SPECIAL_CONTENT = (b"<pad>", b"<s>", b"</s>", b"<unk>")
_MARKER_CONTENT = b" "

SCHEMES = ("bpe", "bbpe")

TokenSeq = list[int]


class DecodedText:
    """Decode result: the text plus a flag set when byte repair was needed."""

    def __init__(self, text: str, lossy: bool = False):
        self.text = text
        self.lossy = lossy

    def __repr__(self) -> str:
        return f"DecodedText({self.text!r}, lossy={self.lossy})"


class TokenizerModel:
    """A trained subword vocabulary: token contents plus ordered merge rules."""

    def __init__(self, scheme: str, tokens: list[bytes], merges: list[tuple[int, int, int]]):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.scheme = scheme
        self.tokens = tokens
        self.merges = merges
        self._check()
        # (left, right) -> (rank, new_id) for rank-greedy encoding
        self._merge_rank = {(l, r): (rank, new) for rank, (l, r, new) in enumerate(merges)}
        if scheme == "bpe":
            self._char_to_id = {
                t.decode("utf-8"): i
                for i, t in enumerate(tokens[5 : self.base_size()], start=5)
            }
        self._word_cache: dict[str, tuple[int, ...]] = {}

    def _check(self) -> None:
        if len(self.tokens) < 5 or self.tokens[:4] != list(_SPECIAL_CONTENT):
            raise ValueError("vocabulary must start with the four specials and the marker")
        for left, right, new in self.merges:
            if not (left < new and right < new < len(self.tokens)):
                raise ValueError(f"merge ({left},{right})->{new} is not topologically consistent")
            if self.tokens[new] != self.tokens[left] + self.tokens[right]:
                raise ValueError(f"merge {new} content does not equal its operands")

    # -- structure ---------------------------------------------------------

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def base_size(self) -> int:
        """Entries before the first learned merge (specials + marker + alphabet)."""
        return len(self.tokens) - len(self.merges)

    # -- encoding ----------------------------------------------------------

    def _word_base_ids(self, word: str) -> list[int]:
        if self.scheme == "bbpe":
            return [MARKER_ID] + [5 + b for b in word.encode("utf-8")]
        return [MARKER_ID] + [self._char_to_id.get(ch, UNK_ID) for ch in word]

    def _encode_word(self, word: str) -> tuple[int, ...]:
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        ids = self._word_base_ids(word)
        while len(ids) >= 2:
            best_rank = None
            best_pair = None
            for pair in zip(ids, ids[1:]):
                entry = self._merge_rank.get(pair)
                if entry is not None and (best_rank is None or entry[0] < best_rank):
                    best_rank, best_pair = entry[0], pair
            if best_pair is None:
                break
            new_id = self._merge_rank[best_pair][1]
            ids = _replace_pair(ids, best_pair, new_id)
        result = tuple(ids)
        if len(self._word_cache) < 1 << 20:
            self._word_cache[word] = result
        return result

    def encode(self, text: str) -> TokenSeq:
        """NFC-normalize, split on whitespace, tokenize each word."""
        out: TokenSeq = []
        for word in unicodedata.normalize("NFC", text).split():
            out.extend(self._encode_word(word))
        return out

    # -- decoding ----------------------------------------------------------

    def decode(self, seq: Sequence[int]) -> DecodedText:
        """Concatenate token contents; markers become spaces; validate UTF-8.

        pad/bos/eos are skipped. An invalid byte stream (possible for BBPE
        under arbitrary ids) is repaired with U+FFFD and flagged lossy.
        """
        chunks = []
        for i in seq:
            if not (0 <= i < len(self.tokens)):
                raise ValueError(f"token id {i} out of range for vocab of {len(self.tokens)}")
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            chunks.append(_MARKER_CONTENT if i == MARKER_ID else self.tokens[i])
        raw = b"".join(chunks)
        try:
            return DecodedText(raw.decode("utf-8").strip(" "), lossy=False)
        except UnicodeDecodeError:
            return DecodedText(raw.decode("utf-8", errors="replace").strip(" "), lossy=True)

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"subword/v1 {self.scheme} {len(self.tokens)}"]
        lines += [f"V {i} {t.hex()}" for i, t in enumerate(self.tokens)]
        lines += [f"M {l} {r} {n}" for l, r, n in self.merges]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path: str | Path) -> "TokenizerModel":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty tokenizer file")
        header = lines[0].split()
        if len(header) != 3 or header[0] != "subword/v1":
            raise ValueError(f"bad tokenizer header: {lines[0]!r}")
        scheme, declared = header[1], int(header[2])
        tokens: list[bytes] = []
        merges: list[tuple[int, int, int]] = []
        for line in lines[1:]:
            fields = line.split()
            if fields[0] == "V":
                if int(fields[1]) != len(tokens):
                    raise ValueError(f"non-dense vocab id in line {line!r}")
                tokens.append(bytes.fromhex(fields[2]))
            elif fields[0] == "M":
                merges.append((int(fields[1]), int(fields[2]), int(fields[3])))
            else:
                raise ValueError(f"unknown record {line!r}")
        if len(tokens) != declared:
            raise ValueError(f"header declares {declared} tokens, file has {len(tokens)}")
        return cls(scheme, tokens, merges)


def _replace_pair(ids: Sequence[int], pair: tuple[int, int], new_id: int) -> list[int]:
    out = []
    i = 0
    while i < len(ids):
        if i + 1 < len(ids) and ids[i] == pair[0] and ids[i + 1] == pair[1]:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return out


def train_subword(corpus: Iterable[str], scheme: str, vocab_size: int) -> TokenizerModel:
    """Learn merges by greedy highest-frequency pair counting over word types.

    Merging stops at ``vocab_size`` entries or when no adjacent pair occurs
    at least twice. Equal-frequency ties go to the lexicographically smallest
    pair of token contents, so training is order- and platform-independent.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")

    word_counts: dict[str, int] = {}
    for line in corpus:
        for word in unicodedata.normalize("NFC", line).split():
            word_counts[word] = word_counts.get(word, 0) + 1

    tokens: list[bytes] = list(_SPECIAL_CONTENT) + [_MARKER_CONTENT]
    if scheme == "bbpe":
        tokens += [bytes([b]) for b in range(256)]
        char_to_id = {}
    else:
        chars = sorted({ch for w in word_counts for ch in w})
        char_to_id = {ch: 5 + i for i, ch in enumerate(chars)}
        tokens += [ch.encode("utf-8") for ch in chars]

    if vocab_size <= len(tokens):
        raise ValueError(
            f"vocab_size {vocab_size} too small: base vocabulary already has {len(tokens)} entries"
        )

    # Word types as mutable id sequences, weighted by frequency.
    seqs: list[list[int]] = []
    weights: list[int] = []
    for word, count in sorted(word_counts.items()):
        if scheme == "bbpe":
            ids = [MARKER_ID] + [5 + b for b in word.encode("utf-8")]
        else:
            ids = [MARKER_ID] + [char_to_id[ch] for ch in word]
        seqs.append(ids)
        weights.append(count)

    merges: list[tuple[int, int, int]] = []
    while len(tokens) < vocab_size:
        pair_counts: dict[tuple[int, int], int] = {}
        for ids, w in zip(seqs, weights):
            for pair in zip(ids, ids[1:]):
                pair_counts[pair] = pair_counts.get(pair, 0) + w
        if not pair_counts:
            break
        top = max(pair_counts.values())
        if top < 2:
            break
        left, right = min(
            (p for p, c in pair_counts.items() if c == top),
            key=lambda p: (tokens[p[0]], tokens[p[1]]),
        )
        new_id = len(tokens)
        tokens.append(tokens[left] + tokens[right])
        merges.append((left, right, new_id))
        for i, ids in enumerate(seqs):
            if len(ids) >= 2:
                seqs[i] = _replace_pair(ids, (left, right), new_id)
    return TokenizerModel(scheme, tokens, merges)
