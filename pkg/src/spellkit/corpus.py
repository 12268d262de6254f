"""Datasets of <input, label> correction pairs: load, save, split, audit.

JSONL is the canonical interchange format (one object per line, UTF-8, keys
exactly ``input``, ``label``, ``locale``). TSV (3 tab-separated columns, no
header) is accepted for ingestion. A dataset saved to ``name.jsonl`` gets a
sidecar manifest ``name.jsonl.manifest.json`` recording source, seed, and
per-locale counts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_LOCALE_RE = re.compile(r"^([a-z]{2,3})(?:-([A-Z]{2}))?$")


@dataclass(frozen=True)
class Locale:
    """A language (ISO-639-1/2 lowercase) with an optional uppercase region."""

    language_code: str
    region_code: str | None = None

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[a-z]{2,3}", self.language_code):
            raise ValueError(f"invalid language code {self.language_code!r}")
        if self.region_code is not None and not re.fullmatch(r"[A-Z]{2}", self.region_code):
            raise ValueError(f"invalid region code {self.region_code!r}")

    @classmethod
    def parse(cls, text: str) -> "Locale":
        m = _LOCALE_RE.match(text)
        if m is None:
            raise ValueError(f"invalid locale {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        if self.region_code is None:
            return self.language_code
        return f"{self.language_code}-{self.region_code}"


@dataclass(frozen=True)
class ExamplePair:
    """One <input, label> record: a possibly-misspelled query and its correction."""

    input: str
    label: str
    locale: Locale

    def __post_init__(self) -> None:
        for name, text in (("input", self.input), ("label", self.label)):
            if not text.strip():
                raise ValueError(f"{name} is empty")
            if any(ord(ch) < 0x20 for ch in text):
                raise ValueError(f"{name} contains control characters")


@dataclass
class Manifest:
    source: str | None = None
    seed: int | None = None
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"source": self.source, "seed": self.seed, "counts": dict(self.counts)}

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        return cls(source=d.get("source"), seed=d.get("seed"), counts=dict(d.get("counts", {})))


@dataclass
class Dataset:
    """An ordered sequence of pairs plus a manifest describing where it came from."""

    pairs: list[ExamplePair]
    manifest: Manifest = field(default_factory=Manifest)

    def __post_init__(self) -> None:
        expected = _count_locales(self.pairs)
        if not self.manifest.counts:
            self.manifest.counts = expected
        elif self.manifest.counts != expected:
            raise ValueError(
                f"manifest counts {self.manifest.counts} do not match pairs {expected}"
            )

    def __len__(self) -> int:
        return len(self.pairs)

    def locales(self) -> list[Locale]:
        """Distinct locales present, sorted by canonical text form."""
        return sorted({p.locale for p in self.pairs}, key=str)


def _count_locales(pairs: list[ExamplePair]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in pairs:
        key = str(p.locale)
        counts[key] = counts.get(key, 0) + 1
    return counts


def _parse_jsonl_line(line: str, lineno: int) -> ExamplePair:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"malformed JSON at line {lineno}: {e}") from e
    if not isinstance(obj, dict) or set(obj.keys()) != {"input", "label", "locale"}:
        raise ValueError(
            f"malformed record at line {lineno}: keys must be exactly input, label, locale"
        )
    try:
        locale = Locale.parse(obj["locale"])
    except (ValueError, TypeError):
        raise ValueError(f"invalid locale at line {lineno}") from None
    try:
        return ExamplePair(input=obj["input"], label=obj["label"], locale=locale)
    except (ValueError, TypeError) as e:
        raise ValueError(f"invalid record at line {lineno}: {e}") from e


def _parse_tsv_line(line: str, lineno: int) -> ExamplePair:
    cols = line.split("\t")
    if len(cols) != 3:
        raise ValueError(f"malformed record at line {lineno}: expected 3 tab-separated columns")
    try:
        locale = Locale.parse(cols[2])
    except ValueError:
        raise ValueError(f"invalid locale at line {lineno}") from None
    try:
        return ExamplePair(input=cols[0], label=cols[1], locale=locale)
    except ValueError as e:
        raise ValueError(f"invalid record at line {lineno}: {e}") from e


def load_pairs(path: str | Path, format: str = "jsonl") -> Dataset:
    """Load a dataset, preserving file order. Errors name the offending line."""
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown format {format!r}")
    path = Path(path)
    parse = _parse_jsonl_line if format == "jsonl" else _parse_tsv_line
    pairs = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            pairs.append(parse(line, lineno))
    return Dataset(pairs=pairs, manifest=Manifest(source=str(path)))


def save_pairs(dataset: Dataset, path: str | Path, format: str = "jsonl") -> None:
    """Write a dataset plus its ``<name>.manifest.json`` sidecar."""
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown format {format!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for p in dataset.pairs:
            if format == "jsonl":
                f.write(json.dumps(
                    {"input": p.input, "label": p.label, "locale": str(p.locale)},
                    ensure_ascii=False,
                ))
            else:
                f.write(f"{p.input}\t{p.label}\t{p.locale}")
            f.write("\n")
    sidecar = path.with_name(path.name + ".manifest.json")
    sidecar.write_text(
        json.dumps(dataset.manifest.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def split(dataset: Dataset, eval_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint train/eval partition via a seeded shuffle of record indices.

    |eval| = round(eval_fraction * |dataset|); each side keeps original order.
    """
    n = len(dataset.pairs)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if not (0.0 < eval_fraction < 1.0):
        raise ValueError(f"eval_fraction must be in (0,1), got {eval_fraction}")
    k = round(eval_fraction * n)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    eval_idx = set(int(i) for i in order[:k])
    train_pairs = [p for i, p in enumerate(dataset.pairs) if i not in eval_idx]
    eval_pairs = [p for i, p in enumerate(dataset.pairs) if i in eval_idx]
    source = dataset.manifest.source
    return (
        Dataset(train_pairs, Manifest(source=source, seed=seed)),
        Dataset(eval_pairs, Manifest(source=source, seed=seed)),
    )


def overlap_count(train: Dataset, eval: Dataset) -> int:
    """Number of eval pairs whose label string also occurs as a train label."""
    train_labels = {p.label for p in train.pairs}
    return sum(1 for p in eval.pairs if p.label in train_labels)
