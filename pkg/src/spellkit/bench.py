"""Latency and throughput measurement for text→text correction functions.

The system under test is an in-process callable, which keeps network noise
out of the numbers. Requests are issued through a thread pool at a fixed
concurrency; warmup requests run first and are excluded from statistics.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence


@dataclass(frozen=True)
class LoadProfile:
    total_requests: int
    concurrency: int = 1
    timeout_s: float = 1.0
    warmup_requests: int = 0

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if not self.total_requests > self.warmup_requests >= 0:
            raise ValueError("need total_requests > warmup_requests >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class LatencyReport:
    p50: float
    p99: float
    tps: float
    timeout_count: int
    error_count: int
    samples: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p50": self.p50,
            "p99": self.p99,
            "tps": self.tps,
            "timeout_count": self.timeout_count,
            "error_count": self.error_count,
            "n_samples": len(self.samples),
        }


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: sorted ascending, element ceil(q*n/100) - 1."""
    if len(samples) == 0:
        raise ValueError("percentile of empty samples")
    if not 0 < q <= 100:
        raise ValueError(f"q must be in (0, 100], got {q}")
    ordered = sorted(samples)
    rank = math.ceil(q * len(ordered) / 100)
    return ordered[rank - 1]


def run_load(
    correct_fn: Callable[[str], str],
    profile: LoadProfile,
    inputs: Sequence[str],
) -> LatencyReport:
    """Drive correct_fn at the profile's concurrency and collect latencies.

    Inputs are assigned round-robin. A request that exceeds the timeout is
    recorded at the timeout value (production semantics: the caller gave up
    and served the input uncorrected). A request that raises is counted as an
    error and excluded from latency samples.
    """
    if not inputs:
        raise ValueError("need at least one input")

    def one(i: int) -> tuple[float, bool, bool]:
        # returns (latency, timed_out, errored)
        text = inputs[i % len(inputs)]
        start = time.perf_counter()
        try:
            correct_fn(text)
        except Exception:
            return 0.0, False, True
        elapsed = time.perf_counter() - start
        if elapsed > profile.timeout_s:
            return profile.timeout_s, True, False
        return elapsed, False, False

    with ThreadPoolExecutor(max_workers=profile.concurrency) as pool:
        list(pool.map(one, range(profile.warmup_requests)))
        measured_start = time.perf_counter()
        results = list(
            pool.map(one, range(profile.warmup_requests, profile.total_requests))
        )
        measured_elapsed = time.perf_counter() - measured_start

    samples = [lat for lat, _, err in results if not err]
    timeout_count = sum(1 for _, t, _ in results if t)
    error_count = sum(1 for _, _, e in results if e)
    if samples:
        p50 = percentile(samples, 50)
        p99 = percentile(samples, 99)
        tps = len(samples) / measured_elapsed if measured_elapsed > 0 else 0.0
    else:
        p50 = p99 = tps = 0.0
    return LatencyReport(p50, p99, tps, timeout_count, error_count, samples)


def compare(student: LatencyReport, teacher: LatencyReport) -> dict:
    """Student-vs-teacher summary: P99 improvement percent and TPS ratio."""
    if teacher.p99 <= 0:
        raise ValueError("teacher p99 must be positive to compare")
    if teacher.tps <= 0:
        raise ValueError("teacher tps must be positive to compare")
    p99_improvement_pct = 100.0 * (teacher.p99 - student.p99) / teacher.p99
    tps_ratio = student.tps / teacher.tps
    return {
        "p99_improvement_pct": p99_improvement_pct,
        "tps_ratio": tps_ratio,
        "tps_ratio_rendered": f"+{tps_ratio:.1f}x",
    }
