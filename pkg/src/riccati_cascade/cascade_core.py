"""Seeded samplers for the alpha-Riccati branching cascade.

The cascade is the random binary tree in which the edge below a depth-j
vertex carries an independent clock scaled by alpha**-j.  A vertex whose
cumulative path time first exceeds the horizon t is a "t-leaf"; the tree
is never materialized, only the alive region (vertices whose cumulative
time stays <= t) is traversed, one level at a time.

All samplers are pure functions of (params, inputs, stream state).  Use
:func:`derive_stream` to obtain independent substreams that depend only on
(seed, sample_index), never on evaluation order or worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "CascadeParams",
    "ClockSource",
    "PathExtrema",
    "LeafCountSample",
    "LeafCensus",
    "TailFlags",
    "derive_stream",
    "leaf_census",
    "sample_truncated_leaf_count",
    "sample_path_extrema",
    "path_extrema_by_depth",
    "sample_product_indicator",
    "sample_tail_flags",
    "crossing_horizon_cut",
]

_MAX_COUNT_DEPTH = 62  # leaf counts live in int64; 2**depth must fit
_MAX_EXTREMA_DEPTH = 22  # exact extrema hold all 2**depth path sums in memory
_DEFAULT_FRONTIER_CAP = 1 << 24
_DEFAULT_VISIT_CAP = 50_000_000
_CLOCK_BLOCK = 256


@dataclass(frozen=True)
class CascadeParams:
    """Branching scale alpha (>= 0) plus the 64-bit master seed."""

    alpha: float
    seed: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class ClockSource:
    """Edge-clock distribution: mean-one exponential, or a constant test hook."""

    mode: str = "exponential"
    value: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("exponential", "constant"):
            raise ValueError(f"unknown clock mode {self.mode!r}")
        if self.mode == "constant" and not (math.isfinite(self.value) and self.value > 0.0):
            raise ValueError("constant clocks require a positive value")

    @classmethod
    def exponential(cls) -> "ClockSource":
        return cls("exponential")

    @classmethod
    def constant(cls, c: float) -> "ClockSource":
        return cls("constant", float(c))

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.mode == "exponential":
            return gen.standard_exponential(n)
        return np.full(n, self.value)


@dataclass(frozen=True)
class PathExtrema:
    """Min and max cumulative path time over all paths of the given depth."""

    s_partial: float
    l_partial: float
    depth: int

    def __post_init__(self) -> None:
        if self.s_partial > self.l_partial:
            raise ValueError("s_partial must not exceed l_partial")


@dataclass(frozen=True)
class LeafCountSample:
    """Truncated leaf count; `truncated` marks paths still alive at the depth cap."""

    count: int
    truncated: bool


@dataclass(frozen=True)
class TailFlags:
    """Joint indicators for one tree: min path sum > t, max path sum > t."""

    s_exceeds: bool
    l_exceeds: bool


class LeafCensus:
    """Per-depth census of one simulated tree, truncated at `depth`.

    leaves_by_depth[d] counts t-leaves at depth d; alive_by_depth[d] counts
    vertices at depth d whose cumulative time is still <= t.  A single
    census yields the truncated leaf count for every threshold n <= depth
    under exact pathwise coupling (same tree, different cut).
    """

    __slots__ = ("t", "depth", "leaves_by_depth", "alive_by_depth")

    def __init__(self, t: float, depth: int, leaves_by_depth: np.ndarray, alive_by_depth: np.ndarray):
        self.t = t
        self.depth = depth
        self.leaves_by_depth = leaves_by_depth
        self.alive_by_depth = alive_by_depth

    def count_up_to(self, n: int) -> int:
        """Leaf count truncated at depth n (0 <= n <= depth)."""
        if not 0 <= n <= self.depth:
            raise ValueError(f"threshold {n} outside censused range 0..{self.depth}")
        return int(self.leaves_by_depth[: n + 1].sum())

    def truncated_at(self, n: int) -> bool:
        """True when some path is still alive at depth n (count may undershoot)."""
        if not 0 <= n <= self.depth:
            raise ValueError(f"threshold {n} outside censused range 0..{self.depth}")
        return bool(self.alive_by_depth[n] > 0)

    def survives_to(self, n: int) -> bool:
        """True iff some path's cumulative time through depth n is <= t."""
        return self.truncated_at(n)

    def crosses_by(self, n: int) -> bool:
        """True iff some path crossed the horizon at generation <= n."""
        return self.count_up_to(n) > 0


def derive_stream(params: CascadeParams, sample_index: int) -> np.random.Generator:
    """Independent substream determined by (seed, sample_index) alone.

    Counter-based: the Philox counter block for substream i starts at
    i * 2**128, so substreams never overlap and their identity does not
    depend on evaluation order or worker count.
    """
    idx = int(sample_index)
    if not (0 <= idx < 2**64):
        raise ValueError(f"sample_index must be a 64-bit unsigned integer, got {sample_index}")
    bitgen = np.random.Philox(key=int(params.seed), counter=[0, 0, idx, 0])
    return np.random.Generator(bitgen)


def _validate_horizon_depth(t: float, depth: int, max_depth: int) -> None:
    if not (math.isfinite(t) and t >= 0.0):
        raise ValueError(f"horizon t must be finite and >= 0, got {t}")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if depth > max_depth:
        raise ValueError(
            f"depth {depth} exceeds the supported maximum {max_depth} "
            "(2**depth would overflow the counters)"
        )


def leaf_census(
    params: CascadeParams,
    t: float,
    depth: int,
    clocks: ClockSource,
    stream: np.random.Generator,
    frontier_cap: int = _DEFAULT_FRONTIER_CAP,
) -> LeafCensus:
    """Simulate one tree and tally leaves and alive vertices per depth.

    Level-order traversal of the alive region; vertices at horizon exactly 0
    are leaves without consuming a clock (the horizon-0 tree is just the
    root).  Memory is O(alive frontier), not O(2**depth).
    """
    _validate_horizon_depth(t, depth, _MAX_COUNT_DEPTH)
    alpha = params.alpha
    leaves = np.zeros(depth + 1, dtype=np.int64)
    alive = np.zeros(depth + 1, dtype=np.int64)
    horizons = np.array([float(t)])
    for d in range(depth + 1):
        if horizons.size == 0:
            break
        nonzero = horizons[horizons > 0.0]
        leaves[d] += horizons.size - nonzero.size  # horizon-0 vertices are leaves
        if nonzero.size == 0:
            break
        draws = clocks.draw(stream, nonzero.size)
        survivors = nonzero[draws <= nonzero] - draws[draws <= nonzero]
        leaves[d] += nonzero.size - survivors.size
        alive[d] = survivors.size
        if d == depth:
            break
        horizons = np.repeat(alpha * survivors, 2)
        if horizons.size > frontier_cap:
            raise RuntimeError(
                f"alive frontier exceeded {frontier_cap} vertices at depth {d + 1}; "
                "reduce depth or raise frontier_cap"
            )
    return LeafCensus(t, depth, leaves, alive)


def sample_truncated_leaf_count(
    params: CascadeParams,
    t: float,
    depth: int,
    clocks: ClockSource,
    stream: np.random.Generator,
) -> LeafCountSample:
    """Number of t-leaves of depth <= `depth` in one sampled tree.

    The count never exceeds 2**depth.  When `truncated` is set, paths were
    still alive at the depth cap and the untruncated count would be larger.
    """
    census = leaf_census(params, t, depth, clocks, stream)
    return LeafCountSample(census.count_up_to(depth), census.truncated_at(depth))


def path_extrema_by_depth(
    params: CascadeParams,
    depth: int,
    clocks: ClockSource,
    stream: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact (min, max) cumulative path time at every depth 0..depth, coupled.

    Enumerates all 2**depth paths of one tree, so depth is capped; the
    returned arrays are nondecreasing in depth by construction (every
    generation adds a positive term).
    """
    if params.alpha == 0.0:
        raise ValueError("path extrema are undefined at alpha=0 (alpha**-j diverges)")
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if depth > _MAX_EXTREMA_DEPTH:
        raise ValueError(
            f"exact path extrema enumerate 2**depth paths; depth {depth} exceeds "
            f"the supported maximum {_MAX_EXTREMA_DEPTH}"
        )
    alpha = params.alpha
    s = np.empty(depth + 1)
    l = np.empty(depth + 1)
    sums = clocks.draw(stream, 1)
    s[0] = l[0] = sums[0]
    for d in range(1, depth + 1):
        sums = np.repeat(sums, 2) + alpha ** (-d) * clocks.draw(stream, 2 ** d)
        s[d] = sums.min()
        l[d] = sums.max()
    return s, l


def sample_path_extrema(
    params: CascadeParams,
    depth: int,
    clocks: ClockSource,
    stream: np.random.Generator,
) -> PathExtrema:
    """Exact min/max cumulative path time over all paths of the given depth."""
    s, l = path_extrema_by_depth(params, depth, clocks, stream)
    return PathExtrema(float(s[depth]), float(l[depth]), depth)


def sample_product_indicator(
    params: CascadeParams,
    t: float,
    n: int,
    x0,
    clocks: ClockSource,
    stream: np.random.Generator,
    frontier_cap: int = _DEFAULT_FRONTIER_CAP,
) -> float:
    """One draw of the depth-n product recursion seeded by x0.

    A vertex whose clock exceeds its horizon contributes the factor 1; a
    surviving vertex passes the rescaled remaining horizon to two children.
    After n levels the surviving horizons are fed through x0 and multiplied
    (empty product = 1).  For n=0 the value is x0(t) directly.  The
    expectation equals the n-th deterministic iterate seeded by x0.
    """
    _validate_horizon_depth(t, n, _MAX_COUNT_DEPTH)
    alpha = params.alpha

    def _x0_values(args: np.ndarray) -> np.ndarray:
        vals = np.asarray(x0(args), dtype=float)
        if vals.shape != args.shape:
            vals = np.broadcast_to(vals, args.shape)
        if vals.size and (np.min(vals) < 0.0 or np.max(vals) > 1.0):
            raise ValueError("x0 returned a value outside [0, 1]")
        return vals

    if n == 0:
        return float(_x0_values(np.array([float(t)]))[0])
    horizons = np.array([float(t)])
    for _ in range(n):
        # a horizon-0 vertex with budget left contributes the factor 1
        # (its clock exceeds 0 surely); at budget 0 it must go through x0
        nonzero = horizons[horizons > 0.0]
        if nonzero.size == 0:
            return 1.0
        draws = clocks.draw(stream, nonzero.size)
        survivors = nonzero[draws <= nonzero] - draws[draws <= nonzero]
        horizons = np.repeat(alpha * survivors, 2)
        if horizons.size > frontier_cap:
            raise RuntimeError(
                f"alive frontier exceeded {frontier_cap} vertices; "
                "reduce n or raise frontier_cap"
            )
    if horizons.size == 0:
        return 1.0
    return float(np.prod(_x0_values(horizons)))


@lru_cache(maxsize=64)
def crossing_horizon_cut(alpha: float, log_prob: float = -70.0) -> float:
    """Horizon h* with P(max path sum > h*) <= exp(log_prob), for alpha > 1.

    Chernoff bound on L <= sum_j alpha**-j * M_j with M_j the max of 2**j
    unit exponentials:  E exp(s M_j) <= Gamma(1-s) * 2**(j s), so
    P(L > h) <= C(theta) * exp(-theta h) for any theta < 1.  Subtrees whose
    local horizon exceeds the cut cross with negligible probability and are
    pruned by the tail samplers.
    """
    if alpha <= 1.0:
        raise ValueError("the crossing-probability cut requires alpha > 1")
    best = math.inf
    for theta in np.arange(0.05, 1.0, 0.05):
        ln_c = 0.0
        j = 0
        while True:
            s = theta * alpha ** (-j)
            ln_c += s * j * math.log(2.0) + math.lgamma(1.0 - s)
            j += 1
            if s < 1e-12 or j > 20_000:
                break
        best = min(best, (ln_c - log_prob) / theta)
    return float(best)


class _ClockBuffer:
    """Scalar clock draws served from vectorized blocks; preserves draw order."""

    __slots__ = ("_clocks", "_gen", "_block", "_buf", "_pos")

    def __init__(self, clocks: ClockSource, gen: np.random.Generator, block: int = _CLOCK_BLOCK):
        self._clocks = clocks
        self._gen = gen
        self._block = block
        self._buf = clocks.draw(gen, block)
        self._pos = 0

    def next(self) -> float:
        if self._pos == self._block:
            self._buf = self._clocks.draw(self._gen, self._block)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)


def sample_tail_flags(
    params: CascadeParams,
    t: float,
    depth: int,
    clocks: ClockSource,
    stream: np.random.Generator,
    visit_cap: int = _DEFAULT_VISIT_CAP,
) -> TailFlags:
    """Joint indicators {min path sum > t} and {max path sum > t} for one tree.

    Depth-first search with early exit: the max exceeds t as soon as any
    vertex crosses its horizon, the min exceeds t only when no path stays
    alive through `depth`.  For alpha > 1, a subtree whose local horizon
    is beyond :func:`crossing_horizon_cut` survives and never crosses, up
    to probability exp(-70); it is resolved without descent, which keeps
    the search polynomial at any depth.  Both flags come from the same
    tree, so {min > t} implies {max > t} sample by sample.
    """
    _validate_horizon_depth(t, depth, 2**31)
    alpha = params.alpha
    if t == 0.0:
        return TailFlags(True, True)  # all clocks are positive
    cut = crossing_horizon_cut(alpha) if alpha > 1.0 else None
    buf = _ClockBuffer(clocks, stream)
    crossing_found = False
    alive_found = False
    visits = 0
    stack = [(float(t), 0)]
    while stack:
        if crossing_found and alive_found:
            break
        horizon, d = stack.pop()
        visits += 1
        if visits > visit_cap:
            raise RuntimeError(
                f"tail-flag search exceeded {visit_cap} vertex visits; "
                "raise visit_cap or reduce depth"
            )
        if horizon == 0.0:
            crossing_found = True  # horizon-0 vertex is a leaf
            continue
        if cut is not None and horizon > cut:
            alive_found = True  # crossing probability below exp(-70)
            continue
        clock = buf.next()
        if clock > horizon:
            crossing_found = True
            continue
        if d == depth:
            alive_found = True
            continue
        child = alpha * (horizon - clock)
        stack.append((child, d + 1))
        stack.append((child, d + 1))
    return TailFlags(not alive_found, crossing_found)
