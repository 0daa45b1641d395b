"""Runnable invariant suite behind the `check` subcommand.

Each check exercises one contract of the samplers, the grid recursions, the
estimators, or the serialization layer, with sample sizes small enough for
an interactive run.  All randomness is seeded, so a passing run is
reproducible bit for bit.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis_io import (
    read_histogram_csv,
    read_series_csv,
    verify_manifest,
    write_histogram_csv,
    write_manifest,
    write_series_csv,
    RunManifest,
)
from .cascade_core import (
    CascadeParams,
    ClockSource,
    derive_stream,
    leaf_census,
    path_extrema_by_depth,
    sample_product_indicator,
    sample_tail_flags,
)
from .grid_numerics import (
    GridFunction,
    UniformGrid,
    convolve_kernel,
    evaluate,
    iterate_qn,
    iterate_vn,
    picard_v0,
)
from .monte_carlo import (
    McConfig,
    estimate_L_tail,
    estimate_S_tail,
    estimate_leaf_histogram,
    estimate_v_curve,
)

__all__ = ["CheckResult", "run_all_checks"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _result(name: str, passed: bool, detail: str) -> CheckResult:
    return CheckResult(name, bool(passed), detail)


def check_stream_determinism(seed: int) -> CheckResult:
    params = CascadeParams(1.5, seed)
    a = derive_stream(params, 0).standard_exponential(64)
    b = derive_stream(params, 0).standard_exponential(64)
    c = derive_stream(params, 1).standard_exponential(64)
    same = bool(np.array_equal(a, b))
    differs = bool(not np.array_equal(a, c))
    return _result(
        "stream_determinism",
        same and differs,
        f"substream 0 replays identically: {same}; substream 1 differs: {differs}",
    )


def check_sampler_determinism(seed: int) -> CheckResult:
    params = CascadeParams(1.5, seed)
    clocks = ClockSource.exponential()
    v0 = picard_v0(1.5, UniformGrid(8.0, 0.01), 3)
    runs = []
    for _ in range(2):
        census = leaf_census(params, 2.0, 10, clocks, derive_stream(params, 5))
        x = sample_product_indicator(params, 2.0, 6, v0, clocks, derive_stream(params, 6))
        flags = sample_tail_flags(params, 2.0, 20, clocks, derive_stream(params, 7))
        runs.append((census.count_up_to(10), census.truncated_at(10), x, flags))
    ok = runs[0] == runs[1]
    return _result("sampler_determinism", ok, f"two replays gave {runs[0]} and {runs[1]}")


def check_leaf_count_coupled_monotonicity(seed: int, samples: int) -> CheckResult:
    params = CascadeParams(1.5, seed)
    clocks = ClockSource.exponential()
    violations = 0
    for i in range(samples):
        census = leaf_census(params, 2.0, 12, clocks, derive_stream(params, i))
        counts = [census.count_up_to(n) for n in range(13)]
        if any(b < a for a, b in zip(counts, counts[1:])):
            violations += 1
    return _result(
        "leaf_count_coupled_monotonicity",
        violations == 0,
        f"{violations} monotonicity violations in {samples} coupled trees",
    )


def check_path_extrema_monotonicity(seed: int, samples: int) -> CheckResult:
    params = CascadeParams(1.5, seed)
    clocks = ClockSource.exponential()
    bad = 0
    for i in range(samples):
        s, l = path_extrema_by_depth(params, 10, clocks, derive_stream(params, i))
        if np.any(np.diff(s) <= 0) or np.any(np.diff(l) <= 0) or np.any(s > l):
            bad += 1
    return _result(
        "path_extrema_monotonicity",
        bad == 0,
        f"{bad} violations of s<=l / strict depth growth in {samples} trees",
    )


def check_subcritical_survival_vanishes(seed: int, samples: int) -> CheckResult:
    """For alpha <= 1 the min path sum exceeds any fixed t as depth grows."""
    clocks = ClockSource.exponential()
    details = []
    ok = True
    for alpha in (0.66, 1.0):
        params = CascadeParams(alpha, seed)
        freqs = []
        for depth in (8, 24):
            hits = sum(
                sample_tail_flags(params, 2.0, depth, clocks, derive_stream(params, i)).s_exceeds
                for i in range(samples)
            )
            freqs.append(hits / samples)
        ok = ok and freqs[1] >= freqs[0] - 3.0 / math.sqrt(samples) and freqs[1] > 0.9
        details.append(f"alpha={alpha}: P(S>2) {freqs[0]:.3f}->{freqs[1]:.3f}")
    return _result("subcritical_survival_vanishes", ok, "; ".join(details))


def check_product_indicator_mean(alpha: float, seed: int, samples: int) -> CheckResult:
    """Monte Carlo product recursion agrees with the deterministic iterate."""
    grid = UniformGrid(8.0, 0.01)
    v0 = picard_v0(alpha, grid, 5)
    n = 5
    vn = iterate_vn(alpha, grid, n, v0)
    cfg = McConfig(seed=seed, samples=samples, depth=n)
    series = estimate_v_curve(alpha, [1.0, 2.0, 4.0], n, v0, cfg)
    worst = 0.0
    for p in series.points:
        ref = evaluate(vn, p.t)
        z = abs(p.mean - ref) / p.stderr if p.stderr > 0 else 0.0
        worst = max(worst, z)
    return _result(
        "product_indicator_mean",
        worst <= 5.0,
        f"max |z| = {worst:.2f} over 3 points at {samples} samples (threshold 5)",
    )


def check_picard_monotone_in_k(alpha: float) -> CheckResult:
    grid = UniformGrid(8.0, 0.01)
    prev = None
    worst = 0.0
    for k in range(9):
        u = picard_v0(alpha, grid, k).values
        if prev is not None:
            worst = max(worst, float(np.max(u - prev)))
        prev = u
    return _result(
        "picard_monotone_in_k",
        worst <= 1e-9,
        f"max positive increment across k=0..8: {worst:.2e}",
    )


def check_q_iterates_decreasing(alpha: float) -> CheckResult:
    """Seeded from the constant supersolution 1, the q-chain never increases."""
    grid = UniformGrid(8.0, 0.01)
    q0 = GridFunction.constant(grid, 1.0)
    _, levels = iterate_qn(alpha, grid, 8, q0, collect=set(range(1, 9)))
    worst = 0.0
    prev = q0.values
    for j in range(1, 9):
        cur = levels[j].values
        worst = max(worst, float(np.max(cur - prev)))
        prev = cur
    return _result(
        "q_iterates_decreasing",
        worst <= 1e-12,
        f"max positive increment across n=1..8: {worst:.2e} (seed q0=1)",
    )


def check_range_and_boundaries(alpha: float) -> CheckResult:
    grid = UniformGrid(8.0, 0.01)
    v0 = picard_v0(alpha, grid, 5)
    vn = iterate_vn(alpha, grid, 6, v0)
    qn = iterate_qn(alpha, grid, 6, v0.complement())
    in_range = (
        float(np.min(vn.values)) >= 0.0
        and float(np.max(vn.values)) <= 1.0
        and float(np.min(qn.values)) >= 0.0
        and float(np.max(qn.values)) <= 1.0
    )
    boundaries = qn.values[0] == 0.0 and vn.values[0] == 1.0
    return _result(
        "range_and_boundaries",
        in_range and boundaries,
        f"iterates in [0,1]: {in_range}; q(0)={qn.values[0]}, v(0)={vn.values[0]}",
    )


def check_quadrature_order() -> CheckResult:
    errs = []
    for step in (0.01, 0.005):
        grid = UniformGrid(8.0, step)
        ones = GridFunction.constant(grid, 1.0)
        g = convolve_kernel(ones, 1.0, grid)
        errs.append(float(np.max(np.abs(g.values - (1.0 - np.exp(-grid.nodes))))))
    ratio = errs[0] / errs[1]
    return _result(
        "quadrature_order",
        3.5 <= ratio <= 4.5,
        f"halving the step changed the kernel error by x{ratio:.2f} ({errs[0]:.2e} -> {errs[1]:.2e})",
    )


def check_q_dominated_by_seed(alpha: float) -> CheckResult:
    """Every iterate from the supersolution seed stays below the seed."""
    grid = UniformGrid(8.0, 0.01)
    q0 = GridFunction.constant(grid, 1.0)
    _, levels = iterate_qn(alpha, grid, 6, q0, collect=set(range(1, 7)))
    worst = max(float(np.max(levels[j].values - q0.values)) for j in range(1, 7))
    return _result(
        "q_dominated_by_seed",
        worst <= 1e-12,
        f"max excess over the seed across n=1..6: {worst:.2e}",
    )


def check_worker_count_invariance(alpha: float, seed: int) -> CheckResult:
    grid = UniformGrid(4.0, 0.02)
    v0 = picard_v0(alpha, grid, 3)
    series = []
    hists = []
    for workers in (1, 2):
        cfg = McConfig(seed=seed, samples=200, depth=6, workers=workers)
        series.append(estimate_v_curve(alpha, [1.0, 3.0], 6, v0, cfg))
        hists.append(estimate_leaf_histogram(alpha, 2.0, 8, cfg))
    same_series = series[0] == series[1]
    same_hist = hists[0] == hists[1]
    return _result(
        "worker_count_invariance",
        same_series and same_hist,
        f"series identical: {same_series}; histogram identical: {same_hist}",
    )


def check_ci_calibration(seed: int, reps: int, samples: int) -> CheckResult:
    """Nominal 3-sigma intervals must cover known truths in >= 99% of runs."""
    truth_hist = 1.0 - math.exp(-2.0)
    truth_mean = math.exp(-2.0)
    grid = UniformGrid(4.0, 0.1)
    zero = GridFunction.constant(grid, 0.0)
    covered_hist = 0
    covered_mean = 0
    for r in range(reps):
        cfg = McConfig(seed=seed + r, samples=samples, depth=10)
        hist = estimate_leaf_histogram(0.0, 2.0, 10, cfg)
        freq = hist.frequency(2)
        se = math.sqrt(max(freq * (1.0 - freq), 1e-12) / hist.total)
        covered_hist += abs(freq - truth_hist) <= 3.0 * se
        point = estimate_v_curve(0.0, [2.0], 1, zero, cfg).points[0]
        covered_mean += abs(point.mean - truth_mean) <= 3.0 * point.stderr
    ok = covered_hist >= math.ceil(0.99 * reps) and covered_mean >= math.ceil(0.99 * reps)
    return _result(
        "ci_calibration",
        ok,
        f"3-sigma coverage: histogram {covered_hist}/{reps}, mean {covered_mean}/{reps}",
    )


def check_tail_domination(alpha: float, seed: int, samples: int) -> CheckResult:
    """L-tail estimates dominate S-tail estimates pointwise (shared trees),
    and both indicator families are monotone in depth within one census."""
    cfg = McConfig(seed=seed, samples=samples, depth=12)
    ts = [1.0, 2.0, 4.0]
    s_series = estimate_S_tail(alpha, ts, 12, cfg)
    l_series = estimate_L_tail(alpha, ts, 12, cfg)
    dominated = bool(np.all(l_series.means() >= s_series.means()))
    params = CascadeParams(alpha, seed)
    clocks = ClockSource.exponential()
    mono_bad = 0
    for i in range(min(samples, 300)):
        census = leaf_census(params, 2.0, 12, clocks, derive_stream(params, i))
        s_flags = [not census.survives_to(d) for d in range(13)]
        l_flags = [census.crosses_by(d) for d in range(13)]
        if any(b < a for a, b in zip(s_flags, s_flags[1:])):
            mono_bad += 1
        if any(b < a for a, b in zip(l_flags, l_flags[1:])):
            mono_bad += 1
        if any(s and not l for s, l in zip(s_flags, l_flags)):
            mono_bad += 1
    return _result(
        "tail_domination",
        dominated and mono_bad == 0,
        f"L>=S pointwise: {dominated}; census flag violations: {mono_bad}",
    )


def check_heavy_tail_signature(seed: int, samples: int) -> CheckResult:
    """Mean truncated leaf count at alpha=1.5 grows with the depth cap."""
    means, errs = [], []
    for depth in (5, 10, 15):
        cfg = McConfig(seed=seed, samples=samples, depth=depth)
        hist = estimate_leaf_histogram(1.5, 2.0, depth, cfg)
        means.append(hist.mean())
        errs.append(hist.stderr())
    ok = all(
        means[i + 1] - means[i] > errs[i + 1] + errs[i] for i in range(2)
    )
    detail = ", ".join(f"n={d}: {m:.2f}+-{e:.2f}" for d, m, e in zip((5, 10, 15), means, errs))
    return _result("heavy_tail_signature", ok, detail)


def check_serialization_roundtrip(alpha: float, seed: int) -> CheckResult:
    grid = UniformGrid(4.0, 0.05)
    v0 = picard_v0(alpha, grid, 3)
    cfg = McConfig(seed=seed, samples=50, depth=5)
    series = estimate_v_curve(alpha, [0.0, 1.0, 2.5], 5, v0, cfg)
    hist = estimate_leaf_histogram(alpha, 2.0, 8, cfg)
    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        s_path = write_series_csv(series, tmp_path / "series.csv")
        h_path = write_histogram_csv(hist, tmp_path / "hist.csv")
        series_back = read_series_csv(s_path)
        hist_back = read_histogram_csv(h_path, t=hist.t, depth=hist.depth)
        manifest = RunManifest.create("check", alpha, 4.0, 0.05, 1e-6, 5, 3, 50, seed)
        manifest = manifest.with_outputs([s_path, h_path])
        m_path = write_manifest(manifest, tmp_path / "manifest.json")
        problems = verify_manifest(m_path)
        ok = (
            series_back == series
            and hist_back.counts == hist.counts
            and hist_back.total == hist.total
            and hist_back.truncated_count == hist.truncated_count
            and not problems
        )
    return _result(
        "serialization_roundtrip",
        ok,
        f"series/histogram round-trip exact and manifest verified ({len(problems)} problems)",
    )


def run_all_checks(
    alpha: float = 1.5,
    seed: int = 1,
    samples: int = 2000,
    fast: bool = False,
) -> list[CheckResult]:
    """Run every invariant check; `fast` trims the statistical sample sizes."""
    n = max(200, samples // 10) if fast else samples
    reps = 30 if fast else 100
    results = [
        check_stream_determinism(seed),
        check_sampler_determinism(seed),
        check_leaf_count_coupled_monotonicity(seed, min(n, 500)),
        check_path_extrema_monotonicity(seed, min(n, 500)),
        check_subcritical_survival_vanishes(seed, min(n, 1000)),
        check_product_indicator_mean(alpha, seed, n),
        check_picard_monotone_in_k(alpha),
        check_q_iterates_decreasing(alpha),
        check_range_and_boundaries(alpha),
        check_quadrature_order(),
        check_q_dominated_by_seed(alpha),
        check_worker_count_invariance(alpha, seed),
        check_ci_calibration(seed, reps, max(500, n // 2)),
        check_tail_domination(alpha, seed, n),
        check_heavy_tail_signature(seed, n),
        check_serialization_roundtrip(alpha, seed),
    ]
    return results
