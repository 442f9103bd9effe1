"""Latency histograms, tail statistics and the two optimality criteria.

Tail weight is measured by the tail mass ratio: the fraction of samples
above twice the median. Percentiles use the nearest-rank rule.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .trace import COMPLETED, DROPPED, Trace


class EmptySampleError(ValueError):
    pass


@dataclass(frozen=True)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    underflow: int = 0
    overflow: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            lines.append(f"{lo!r},{hi!r},{int(c)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TailStats:
    median: float
    p95: float
    p99: float
    tail_mass_ratio: float
    sample_count: int


@dataclass(frozen=True)
class Thresholds:
    """Pass thresholds. Artifact defaults, not measured values."""

    latency_rel_change: float = 0.15
    dup_reduction: float = 0.20
    tail_mass_reduction: float = 0.20


@dataclass(frozen=True)
class Criterion1:
    mean_latency_baseline: float
    mean_latency_hybrid: float
    relative_change: float
    verdict: bool


@dataclass(frozen=True)
class Criterion2:
    dup_count_a: int
    dup_count_b: int
    tail_a: TailStats
    tail_b: TailStats
    dup_reduction: float
    tail_mass_reduction: float
    verdict: bool


@dataclass(frozen=True)
class CriteriaReport:
    criterion1: Criterion1
    criterion2: Criterion2
    dropped_baseline: int = 0
    dropped_candidate: int = 0
    thresholds: Thresholds = field(default_factory=Thresholds)

    def to_dict(self) -> dict:
        return asdict(self)


def nearest_rank(sorted_samples, p: float) -> float:
    """Nearest-rank percentile of already sorted samples, ``0 < p <= 100``."""
    n = len(sorted_samples)
    if n == 0:
        raise EmptySampleError("no samples")
    rank = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_samples[rank - 1])


def latency_samples(trace: Trace, family: bool = True) -> tuple[np.ndarray, int]:
    """Completed-request latencies and the number of dropped requests.

    In family mode each original contributes one sample: first completion in
    its duplicate family minus the original's creation time.
    """
    dropped = sum(1 for r in trace.requests if r.status == DROPPED)
    if not family:
        lat = [r.completed_at - r.created_at for r in trace.requests
               if r.status == COMPLETED]
    else:
        created = {r.id: r.created_at for r in trace.requests if r.parent_id is None}
        first: dict[int, float] = {}
        for r in trace.requests:
            if r.status != COMPLETED:
                continue
            prev = first.get(r.root_id)
            if prev is None or r.completed_at < prev:
                first[r.root_id] = r.completed_at
        lat = [first[i] - created[i] for i in created if i in first]
    if not lat:
        raise EmptySampleError("trace has no completed requests")
    return np.asarray(lat, dtype=float), dropped


def build_histogram(samples, bin_count: int = 50, range_=None, edges=None) -> Histogram:
    """Equal-width histogram. Default range is ``[0, p99.5]``.

    The last bin is closed on the right; values beyond it count as overflow.
    """
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise EmptySampleError("cannot histogram an empty sample")
    if edges is None:
        if bin_count < 1:
            raise ValueError("bin_count must be >= 1")
        if range_ is None:
            hi = nearest_rank(np.sort(s), 99.5)
            lo = 0.0
            if hi <= lo:
                hi = lo + 1.0
        else:
            lo, hi = map(float, range_)
        edges = np.linspace(lo, hi, bin_count + 1)
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing with at least 2 entries")
    under = int(np.sum(s < edges[0]))
    over = int(np.sum(s > edges[-1]))
    counts, _ = np.histogram(s[(s >= edges[0]) & (s <= edges[-1])], bins=edges)
    return Histogram(edges, counts.astype(np.int64), under, over)


def tail_stats(samples) -> TailStats:
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise EmptySampleError("cannot compute tail statistics of an empty sample")
    med = nearest_rank(s, 50)
    return TailStats(
        median=med,
        p95=nearest_rank(s, 95),
        p99=nearest_rank(s, 99),
        tail_mass_ratio=float(np.sum(s > 2.0 * med)) / s.size,
        sample_count=int(s.size),
    )


def _reduction(a: float, b: float) -> float:
    return (a - b) / a if a > 0 else 0.0


def criteria_report(baseline: Trace, candidate: Trace,
                    thresholds: Thresholds = Thresholds()) -> CriteriaReport:
    lat_a, drop_a = latency_samples(baseline, family=True)
    lat_b, drop_b = latency_samples(candidate, family=True)
    mean_a, mean_b = float(lat_a.mean()), float(lat_b.mean())
    rel = (mean_b - mean_a) / mean_a if mean_a > 0 else 0.0
    c1 = Criterion1(mean_a, mean_b, rel, abs(rel) <= thresholds.latency_rel_change)

    tail_a, tail_b = tail_stats(lat_a), tail_stats(lat_b)
    dups_a, dups_b = baseline.duplicate_count, candidate.duplicate_count
    dup_red = _reduction(dups_a, dups_b)
    tail_red = _reduction(tail_a.tail_mass_ratio, tail_b.tail_mass_ratio)
    c2 = Criterion2(
        dup_count_a=dups_a, dup_count_b=dups_b, tail_a=tail_a, tail_b=tail_b,
        dup_reduction=dup_red, tail_mass_reduction=tail_red,
        verdict=dup_red >= thresholds.dup_reduction
        and tail_red >= thresholds.tail_mass_reduction,
    )
    return CriteriaReport(c1, c2, drop_a, drop_b, thresholds)
