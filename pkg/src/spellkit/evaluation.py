"""Exact-match spelling-correction metrics.

A corrector's behavior on one query is summarized as a Judgment: AUTO when it
rewrote the query, NONE when it left it alone (modulo normalization). Scoring
aligns a system run against gold judgments by position and counts exact
matches after normalization.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Sequence

AUTO = "AUTO"
NONE = "NONE"


@dataclass(frozen=True)
class Judgment:
    action: str
    query: str

    def __post_init__(self):
        if self.action not in (AUTO, NONE):
            raise ValueError(f"action must be AUTO or NONE, got {self.action!r}")


@dataclass
class EvalReport:
    n_sys_auto: int
    n_gold_auto: int
    n_match: int
    precision: float
    recall: float
    f1: float
    degenerate_flags: set = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "n_sys_auto": self.n_sys_auto,
            "n_gold_auto": self.n_gold_auto,
            "n_match": self.n_match,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate_flags": sorted(self.degenerate_flags),
        }


def normalize(query: str, fold_case: bool = False) -> str:
    """Strip punctuation (Unicode categories P*), collapse whitespace, trim.

    Case folding is off by default; pass fold_case=True to compare
    case-insensitively.
    """
    kept = []
    for ch in query:
        if unicodedata.category(ch).startswith("P"):
            continue
        kept.append(ch)
    out = " ".join("".join(kept).split())
    return out.casefold() if fold_case else out


def judge(input_text: str, model_output: str, fold_case: bool = False) -> Judgment:
    """AUTO iff the output differs from the input after normalization."""
    if normalize(model_output, fold_case) != normalize(input_text, fold_case):
        return Judgment(AUTO, model_output)
    return Judgment(NONE, input_text)


def score(
    system: Sequence[Judgment],
    gold: Sequence[Judgment],
    fold_case: bool = False,
) -> EvalReport:
    """Precision/recall/F1 over positionally aligned judgment sequences.

    A match at position i requires both sides AUTO and normalized queries
    equal. Degenerate denominators yield metric 0 plus a flag instead of NaN
    so reports stay aggregatable.
    """
    if len(system) != len(gold):
        raise ValueError(f"length mismatch: {len(system)} system vs {len(gold)} gold judgments")
    n_sys_auto = sum(1 for j in system if j.action == AUTO)
    n_gold_auto = sum(1 for j in gold if j.action == AUTO)
    n_match = sum(
        1
        for s, g in zip(system, gold)
        if s.action == AUTO
        and g.action == AUTO
        and normalize(s.query, fold_case) == normalize(g.query, fold_case)
    )
    flags = set()
    if n_sys_auto == 0:
        flags.add("no_sys_auto")
        precision = 0.0
    else:
        precision = n_match / n_sys_auto
    if n_gold_auto == 0:
        flags.add("no_gold_auto")
        recall = 0.0
    else:
        recall = n_match / n_gold_auto
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return EvalReport(n_sys_auto, n_gold_auto, n_match, precision, recall, f1, flags)


def relative_delta(report: EvalReport, baseline: EvalReport) -> float:
    """Percent change of F1 against a baseline, rounded to one decimal."""
    if baseline.f1 <= 0:
        raise ValueError("baseline F1 must be positive for a relative delta")
    return round(100.0 * (report.f1 - baseline.f1) / baseline.f1, 1)
