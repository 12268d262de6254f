"""Sequence-level distillation: teachers label corpora, students learn labels.

Teachers are consumed strictly as text-to-text functions (a Checkpoint is
greedy-decoded; any other callable is used as-is), so the student never sees
teacher internals. Teacher heterogeneity (different tokenizers, depths) is
therefore free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .corpus import Dataset, ExamplePair, Locale, Manifest
from .evaluation import judge, score
from .model.checkpoint import Checkpoint
from .model.search import decode_greedy_batch

MONOLINGUAL = "monolingual"
MULTILINGUAL = "multilingual"

VARIANTS = ("single_multilingual", "matched_monolingual", "best_teacher")


@dataclass
class TeacherEntry:
    locale: Locale
    corrector: Checkpoint | Callable[[str], str]
    kind: str
    name: str = ""
    dev_f1: float | None = None

    def __post_init__(self):
        if self.kind not in (MONOLINGUAL, MULTILINGUAL):
            raise ValueError(f"kind must be monolingual or multilingual, got {self.kind!r}")
        if self.dev_f1 is not None and not 0 <= self.dev_f1 <= 1:
            raise ValueError("dev_f1 must be in [0, 1]")


@dataclass
class TeacherRegistry:
    entries: dict = field(default_factory=dict)  # Locale -> TeacherEntry

    def add(self, entry: TeacherEntry) -> None:
        if entry.locale in self.entries:
            raise ValueError(f"registry already has a teacher for {entry.locale}")
        self.entries[entry.locale] = entry

    def __getitem__(self, locale: Locale) -> TeacherEntry:
        return self.entries[locale]

    def locales(self) -> list[Locale]:
        return sorted(self.entries, key=str)


@dataclass
class DistillPlan:
    variant: str
    registry: TeacherRegistry
    input_corpora: dict  # Locale -> sequence of input strings

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "single_multilingual":
            correctors = {id(e.corrector) for e in self.registry.entries.values()}
            if len(correctors) > 1:
                raise ValueError("single_multilingual requires one shared teacher checkpoint")


def _as_function(corrector, batch_size: int = 96) -> Callable[[Sequence[str]], list[str]]:
    """Lift a teacher to a batch text->text function."""
    if isinstance(corrector, Checkpoint):
        def run(texts: Sequence[str]) -> list[str]:
            return [r.text for r in decode_greedy_batch(corrector, texts, batch_size=batch_size)]

        return run
    if hasattr(corrector, "correct_many"):
        return corrector.correct_many
    if callable(corrector):
        return lambda texts: [corrector(t) for t in texts]
    raise TypeError(f"teacher must be a Checkpoint or a callable, got {type(corrector)}")


def generate_labels(
    teacher: Checkpoint | Callable[[str], str],
    inputs: Sequence[tuple[str, Locale]],
    input_transform: Callable[[str], str] | None = None,
) -> tuple[Dataset, dict]:
    """Label every input with the teacher's correction, preserving order.

    The teacher always sees the raw input text; `input_transform` (locale
    tagging for student conditioning) applies only to the stored pair input.
    A teacher output that is unusable as a label, empty after stripping or
    containing control characters no pair can store, falls back to the raw
    input; the count is reported in the stats dict.
    """
    texts = [t for t, _ in inputs]
    labels = _as_function(teacher)(texts)
    fallbacks = 0
    pairs = []
    for (raw, locale), label in zip(inputs, labels):
        if not label.strip() or any(ord(ch) < 0x20 for ch in label):
            label = raw
            fallbacks += 1
        stored = input_transform(raw) if input_transform else raw
        pairs.append(ExamplePair(input=stored, label=label, locale=locale))
    stats = {"n": len(pairs), "unusable_output_fallbacks": fallbacks}
    manifest = Manifest(source="distill", seed=0)
    return Dataset(pairs=pairs, manifest=manifest), stats


def teacher_f1(
    corrector: Checkpoint | Callable[[str], str], dev: Dataset, batch_size: int = 96
) -> float:
    """Exact-match F1 of a corrector against a dev set's gold labels."""
    texts = [p.input for p in dev.pairs]
    outputs = _as_function(corrector, batch_size)(texts)
    system = [judge(p.input, out) for p, out in zip(dev.pairs, outputs)]
    gold = [judge(p.input, p.label) for p in dev.pairs]
    return score(system, gold).f1


def select_best_teacher(candidates: dict, dev: dict) -> TeacherRegistry:
    """Per locale, keep the candidate with the highest dev F1.

    `candidates` maps Locale -> sequence of TeacherEntry; `dev` maps
    Locale -> Dataset. Ties prefer monolingual entries, then earlier
    candidates. Selected entries get dev_f1 filled in.
    """
    registry = TeacherRegistry()
    for locale in sorted(candidates, key=str):
        entries = list(candidates[locale])
        if not entries:
            raise ValueError(f"no teacher candidates for {locale}")
        dev_set = dev.get(locale)
        if dev_set is None or len(dev_set.pairs) == 0:
            raise ValueError(f"missing or empty dev set for {locale}")
        scored = []
        for rank, entry in enumerate(entries):
            f1 = teacher_f1(entry.corrector, dev_set)
            mono_rank = 0 if entry.kind == MONOLINGUAL else 1
            scored.append((-f1, mono_rank, rank, entry, f1))
        scored.sort(key=lambda s: s[:3])
        _, _, _, best, f1 = scored[0]
        registry.add(
            TeacherEntry(
                locale=best.locale,
                corrector=best.corrector,
                kind=best.kind,
                name=best.name,
                dev_f1=f1,
            )
        )
    return registry


def assemble_student_data(
    plan: DistillPlan,
    input_transform: Callable[[str, Locale], str] | None = None,
) -> tuple[Dataset, dict]:
    """Concatenate teacher-labeled shards in locale-sorted order.

    Returns the dataset plus a provenance dict describing which teacher
    produced each shard.
    """
    all_pairs = []
    provenance = {"variant": plan.variant, "shards": []}
    for locale in plan.registry.locales():
        corpus = plan.input_corpora.get(locale)
        if corpus is None or len(corpus) == 0:
            raise ValueError(f"empty input corpus for {locale}")
        entry = plan.registry[locale]
        transform = (lambda t, loc=locale: input_transform(t, loc)) if input_transform else None
        shard, stats = generate_labels(
            entry.corrector, [(t, locale) for t in corpus], input_transform=transform
        )
        all_pairs.extend(shard.pairs)
        provenance["shards"].append(
            {
                "locale": str(locale),
                "teacher": entry.name or entry.kind,
                "kind": entry.kind,
                **stats,
            }
        )
    dataset = Dataset(pairs=all_pairs, manifest=Manifest(source=f"distill:{plan.variant}", seed=0))
    return dataset, provenance


def add_language(
    existing_student_data: Dataset,
    new_teacher: TeacherEntry,
    new_corpus: Sequence[str],
    input_transform: Callable[[str], str] | None = None,
) -> tuple[Dataset, dict]:
    """Append one new language's teacher-labeled pairs; existing rows untouched."""
    if not new_corpus:
        raise ValueError("new corpus is empty")
    present = {p.locale for p in existing_student_data.pairs}
    if new_teacher.locale in present:
        raise ValueError(f"locale {new_teacher.locale} already present in the student data")
    shard, stats = generate_labels(
        new_teacher.corrector,
        [(t, new_teacher.locale) for t in new_corpus],
        input_transform=input_transform,
    )
    merged = list(existing_student_data.pairs) + list(shard.pairs)
    dataset = Dataset(
        pairs=merged,
        manifest=Manifest(source=existing_student_data.manifest.source, seed=0),
    )
    return dataset, {"locale": str(new_teacher.locale), **stats}


def tag_input(text: str, locale: Locale) -> str:
    """Locale-condition a student input with a textual prefix tag."""
    return f"<{locale}> {text}"


def write_provenance(path: str | Path, provenance: dict) -> None:
    Path(path).write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8")
