"""Parallel Monte Carlo estimators for the cascade, with schedule-independent output.

Every estimator derives one counter-based substream per (point, sample)
pair, so results are bit-identical for any worker count: workers only
decide who computes which fixed chunk of the sample index space.
Standard errors are CLT-based (sample standard deviation / sqrt(n)).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass, field

import numpy as np

from .cascade_core import (
    CascadeParams,
    ClockSource,
    derive_stream,
    leaf_census,
    sample_product_indicator,
    sample_tail_flags,
)
from .grid_numerics import GridFunction, evaluate

__all__ = [
    "McConfig",
    "EstimatePoint",
    "EstimateSeries",
    "Histogram",
    "ComparisonReport",
    "estimate_v_curve",
    "estimate_leaf_histogram",
    "estimate_S_tail",
    "estimate_L_tail",
    "compare_series",
]

_CHUNK = 1000


@dataclass(frozen=True)
class McConfig:
    """Sample budget, recursion depth, seed, and a worker-count hint.

    The hint never changes any estimate; it only sizes the process pool.
    """

    seed: int
    samples: int = 10000
    depth: int = 10
    workers: int = 1

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.depth < 0:
            raise ValueError(f"depth must be >= 0, got {self.depth}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class EstimatePoint:
    t: float
    mean: float
    stderr: float
    n_samples: int


@dataclass(frozen=True)
class EstimateSeries:
    """Per-point Monte Carlo means with CLT standard errors."""

    points: tuple[EstimatePoint, ...]

    def ts(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.points])

    def stderrs(self) -> np.ndarray:
        return np.array([p.stderr for p in self.points])


@dataclass(frozen=True)
class Histogram:
    """Unit-width integer bins of truncated leaf counts.

    Bins are stored sparsely as value -> count; counts are bounded by
    2**depth so no overflow bin is needed.  `truncated_count` tallies the
    samples whose tree was still alive at the depth cap (their untruncated
    count would be larger).
    """

    t: float
    depth: int
    counts: dict[int, int]
    total: int
    truncated_count: int
    max_observed: int

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.total:
            raise ValueError("histogram counts do not sum to the total")
        if self.counts and max(self.counts) != self.max_observed:
            raise ValueError("max_observed inconsistent with occupied bins")

    def frequency(self, value: int) -> float:
        return self.counts.get(value, 0) / self.total

    def count_at_least(self, threshold: int) -> int:
        return sum(c for v, c in self.counts.items() if v >= threshold)

    def mean(self) -> float:
        return sum(v * c for v, c in self.counts.items()) / self.total

    def stderr(self) -> float:
        if self.total < 2:
            return 0.0
        m = self.mean()
        var = sum(c * (v - m) ** 2 for v, c in self.counts.items()) / (self.total - 1)
        return math.sqrt(var / self.total)


def _mean_stderr(samples: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(samples))
    if samples.size < 2:
        return mean, 0.0
    return mean, float(np.std(samples, ddof=1) / math.sqrt(samples.size))


def _chunks(n: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + _CHUNK, n)) for lo in range(0, n, _CHUNK)]


def _map_chunks(fn, tasks: list, workers: int) -> list:
    """Run chunk tasks in order; pool failures fall back to serial execution."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    try:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    except (BrokenProcessPool, OSError, PermissionError) as exc:  # pragma: no cover
        warnings.warn(f"process pool unavailable ({exc}); running serially")
        return [fn(t) for t in tasks]


def _vcurve_chunk(task) -> np.ndarray:
    alpha, seed, t, n, v0, clocks, base_index, lo, hi = task
    params = CascadeParams(alpha, seed)
    x0 = v0  # GridFunction is callable with the tail policy built in
    out = np.empty(hi - lo)
    for i in range(lo, hi):
        stream = derive_stream(params, base_index + i)
        out[i - lo] = sample_product_indicator(params, t, n, x0, clocks, stream)
    return out


def estimate_v_curve(
    alpha: float,
    t_points,
    n: int,
    v0: GridFunction,
    cfg: McConfig,
    clocks: ClockSource | None = None,
) -> EstimateSeries:
    """Monte Carlo means of the depth-n product recursion seeded by v0.

    Each t gets fresh substreams (index = point * samples + sample), so the
    points are independent and z-tests against a deterministic reference
    are valid per point.
    """
    clocks = clocks or ClockSource.exponential()
    t_list = [float(t) for t in t_points]
    points = []
    for t_idx, t in enumerate(t_list):
        if t < 0.0:
            raise ValueError(f"t_points must be >= 0, got {t}")
        base = t_idx * cfg.samples
        tasks = [
            (alpha, cfg.seed, t, n, v0, clocks, base, lo, hi) for lo, hi in _chunks(cfg.samples)
        ]
        samples = np.concatenate(_map_chunks(_vcurve_chunk, tasks, cfg.workers))
        mean, stderr = _mean_stderr(samples)
        points.append(EstimatePoint(t, mean, stderr, cfg.samples))
    return EstimateSeries(tuple(points))


def _hist_chunk(task) -> tuple[np.ndarray, int]:
    alpha, seed, t, depth, clocks, lo, hi = task
    params = CascadeParams(alpha, seed)
    counts = np.empty(hi - lo, dtype=np.int64)
    truncated = 0
    for i in range(lo, hi):
        stream = derive_stream(params, i)
        census = leaf_census(params, t, depth, clocks, stream)
        counts[i - lo] = census.count_up_to(depth)
        truncated += census.truncated_at(depth)
    return counts, truncated


def estimate_leaf_histogram(
    alpha: float,
    t: float,
    depth: int,
    cfg: McConfig,
    clocks: ClockSource | None = None,
) -> Histogram:
    """Histogram of truncated leaf counts over cfg.samples independent trees."""
    clocks = clocks or ClockSource.exponential()
    tasks = [(alpha, cfg.seed, float(t), depth, clocks, lo, hi) for lo, hi in _chunks(cfg.samples)]
    results = _map_chunks(_hist_chunk, tasks, cfg.workers)
    values = np.concatenate([r[0] for r in results])
    truncated = int(sum(r[1] for r in results))
    uniq, cnt = np.unique(values, return_counts=True)
    counts = {int(v): int(c) for v, c in zip(uniq, cnt)}
    return Histogram(
        t=float(t),
        depth=depth,
        counts=counts,
        total=int(values.size),
        truncated_count=truncated,
        max_observed=int(values.max()),
    )


def _tail_chunk(task) -> tuple[np.ndarray, np.ndarray]:
    alpha, seed, t, depth, clocks, base_index, lo, hi = task
    params = CascadeParams(alpha, seed)
    s_flags = np.empty(hi - lo)
    l_flags = np.empty(hi - lo)
    for i in range(lo, hi):
        stream = derive_stream(params, base_index + i)
        flags = sample_tail_flags(params, t, depth, clocks, stream)
        s_flags[i - lo] = 1.0 if flags.s_exceeds else 0.0
        l_flags[i - lo] = 1.0 if flags.l_exceeds else 0.0
    return s_flags, l_flags


def _estimate_tail_series(
    alpha: float,
    t_points,
    depth: int,
    cfg: McConfig,
    clocks: ClockSource | None,
    which: str,
) -> EstimateSeries:
    clocks = clocks or ClockSource.exponential()
    points = []
    for t_idx, t in enumerate(float(t) for t in t_points):
        if t < 0.0:
            raise ValueError(f"t_points must be >= 0, got {t}")
        base = t_idx * cfg.samples
        tasks = [
            (alpha, cfg.seed, t, depth, clocks, base, lo, hi) for lo, hi in _chunks(cfg.samples)
        ]
        results = _map_chunks(_tail_chunk, tasks, cfg.workers)
        col = 0 if which == "s" else 1
        flags = np.concatenate([r[col] for r in results])
        mean, stderr = _mean_stderr(flags)
        points.append(EstimatePoint(t, mean, stderr, cfg.samples))
    return EstimateSeries(tuple(points))


def estimate_S_tail(
    alpha: float,
    t_points,
    depth: int,
    cfg: McConfig,
    clocks: ClockSource | None = None,
) -> EstimateSeries:
    """Empirical P(min path sum at `depth` > t); increases to the minimal
    solution's tail as depth grows.

    Shares trees with :func:`estimate_L_tail` at equal config (both flags
    come from one traversal per sample), so the L series dominates this one
    pointwise, sample by sample.
    """
    if alpha <= 0.0:
        raise ValueError("path tails require alpha > 0")
    return _estimate_tail_series(alpha, t_points, depth, cfg, clocks, "s")


def estimate_L_tail(
    alpha: float,
    t_points,
    depth: int,
    cfg: McConfig,
    clocks: ClockSource | None = None,
) -> EstimateSeries:
    """Empirical P(max path sum at `depth` > t), a lower bound for the
    longest-path tail that is nondecreasing in depth."""
    if alpha <= 0.0:
        raise ValueError("path tails require alpha > 0")
    return _estimate_tail_series(alpha, t_points, depth, cfg, clocks, "l")


@dataclass(frozen=True)
class ComparisonReport:
    """Per-point z-scores of a Monte Carlo series against a deterministic curve."""

    ts: tuple[float, ...]
    z_scores: tuple[float, ...]
    tail_evaluations: tuple[bool, ...]
    max_abs_z: float
    fraction_within: float
    z_threshold: float
    min_fraction: float
    passed: bool
    quantiles: dict[str, float] = field(default_factory=dict)


def compare_series(
    mc: EstimateSeries,
    reference: GridFunction,
    z_threshold: float = 4.0,
    min_fraction: float = 0.95,
) -> ComparisonReport:
    """z = (mean - reference) / stderr per point; stderr-0 points must match exactly.

    Points beyond the reference grid evaluate through its tail policy and
    are flagged.  The report passes when at least `min_fraction` of the
    points satisfy |z| <= z_threshold.
    """
    ts, zs, tails = [], [], []
    t_end = reference.grid.t_end
    for p in mc.points:
        ref = evaluate(reference, p.t)
        tails.append(p.t > t_end)
        if p.stderr == 0.0:
            z = 0.0 if p.mean == ref else math.inf
        else:
            z = (p.mean - ref) / p.stderr
        ts.append(p.t)
        zs.append(z)
    abs_z = np.abs(np.array(zs))
    finite = abs_z[np.isfinite(abs_z)]
    quantiles = {
        "p50": float(np.quantile(finite, 0.5)) if finite.size else math.inf,
        "p90": float(np.quantile(finite, 0.9)) if finite.size else math.inf,
    }
    fraction = float(np.mean(abs_z <= z_threshold))
    return ComparisonReport(
        ts=tuple(ts),
        z_scores=tuple(zs),
        tail_evaluations=tuple(tails),
        max_abs_z=float(abs_z.max()) if abs_z.size else 0.0,
        fraction_within=fraction,
        z_threshold=z_threshold,
        min_fraction=min_fraction,
        passed=fraction >= min_fraction,
        quantiles=quantiles,
    )
