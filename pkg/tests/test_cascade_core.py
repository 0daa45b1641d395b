"""Sampler contracts: determinism, hand-computable oracles, coupled monotonicity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccati_cascade import (
    CascadeParams,
    ClockSource,
    crossing_horizon_cut,
    derive_stream,
    leaf_census,
    path_extrema_by_depth,
    sample_path_extrema,
    sample_product_indicator,
    sample_tail_flags,
    sample_truncated_leaf_count,
)

EXP = ClockSource.exponential()


def params(alpha, seed=12345):
    return CascadeParams(alpha, seed)


class TestDeriveStream:
    def test_same_index_replays_identically(self):
        p = params(1.5, seed=7)
        a = derive_stream(p, 0).standard_exponential(100)
        b = derive_stream(p, 0).standard_exponential(100)
        assert np.array_equal(a, b)

    def test_different_index_differs_in_first_draw(self):
        p = params(1.5, seed=7)
        a = derive_stream(p, 0).standard_exponential(1)
        b = derive_stream(p, 1).standard_exponential(1)
        assert a[0] != b[0]

    def test_substream_first_draws_all_distinct(self):
        # empirical collision check across 10^5 substreams
        p = params(1.5, seed=7)
        draws = np.array(
            [derive_stream(p, i).standard_exponential(1)[0] for i in range(100_000)]
        )
        assert np.unique(draws).size == draws.size

    def test_rejects_bad_index(self):
        with pytest.raises(ValueError):
            derive_stream(params(1.0), -1)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            CascadeParams(-0.5, 1)
        with pytest.raises(ValueError):
            CascadeParams(1.0, -3)


class TestClockSource:
    def test_exponential_mean_one(self):
        gen = derive_stream(params(1.0, seed=11), 0)
        draws = EXP.draw(gen, 1_000_000)
        # standard error of the mean is 1/1000; require 5 sigma
        assert abs(draws.mean() - 1.0) < 5e-3

    def test_constant_draws_exact(self):
        gen = derive_stream(params(1.0, seed=11), 0)
        draws = ClockSource.constant(0.7).draw(gen, 100)
        assert np.all(draws == 0.7)

    def test_constant_requires_positive(self):
        with pytest.raises(ValueError):
            ClockSource.constant(0.0)


class TestLeafCount:
    def test_zero_horizon_is_root_only(self):
        # the horizon-0 tree is just the root; no clock is consumed
        p = params(1.5, seed=3)
        stream = derive_stream(p, 0)
        sample = sample_truncated_leaf_count(p, 0.0, 10, EXP, stream)
        assert sample == (type(sample))(count=1, truncated=False)
        untouched = derive_stream(p, 0).standard_exponential(1)
        assert stream.standard_exponential(1)[0] == untouched[0]

    def test_alpha_zero_one_step_law(self):
        # at alpha=0 the children inherit horizon 0 and are leaves, so the
        # count is 2 exactly when the root clock stays below t
        p = params(0.0, seed=21)
        n = 10_000
        counts = np.array(
            [
                sample_truncated_leaf_count(p, 2.0, 10, EXP, derive_stream(p, i)).count
                for i in range(n)
            ]
        )
        assert set(np.unique(counts)) <= {1, 2}
        p2 = 1.0 - math.exp(-2.0)
        band = 3.0 * math.sqrt(p2 * (1.0 - p2) / n)
        assert abs(np.mean(counts == 2) - p2) < band

    def test_constant_clock_enumeration(self):
        # alpha=1.5, t=2, unit clocks: every path crosses at generation 2
        p = params(1.5, seed=5)
        sample = sample_truncated_leaf_count(p, 2.0, 10, ClockSource.constant(1.0), derive_stream(p, 0))
        assert sample.count == 4
        assert not sample.truncated

    def test_depth_zero_base_case(self):
        # unit clock vs horizon 2: the root survives, so the count is 0 and truncated
        p = params(1.5, seed=5)
        sample = sample_truncated_leaf_count(p, 2.0, 0, ClockSource.constant(1.0), derive_stream(p, 0))
        assert sample.count == 0
        assert sample.truncated

    def test_rejects_negative_horizon_and_huge_depth(self):
        p = params(1.0)
        with pytest.raises(ValueError):
            sample_truncated_leaf_count(p, -1.0, 5, EXP, derive_stream(p, 0))
        with pytest.raises(ValueError):
            sample_truncated_leaf_count(p, 1.0, 63, EXP, derive_stream(p, 0))

    @settings(max_examples=60, deadline=None)
    @given(
        alpha=st.floats(0.0, 4.0),
        t=st.floats(0.0, 4.0),
        depth=st.integers(0, 8),
        idx=st.integers(0, 1000),
    )
    def test_count_bounds(self, alpha, t, depth, idx):
        p = params(alpha, seed=99)
        sample = sample_truncated_leaf_count(p, t, depth, EXP, derive_stream(p, idx))
        assert 0 <= sample.count <= 2**depth
        if not sample.truncated:
            assert sample.count >= 1
        if t == 0.0:
            assert sample.count == 1 and not sample.truncated

    def test_census_coupled_monotone(self):
        p = params(1.5, seed=31)
        for i in range(300):
            census = leaf_census(p, 2.0, 12, EXP, derive_stream(p, i))
            counts = [census.count_up_to(n) for n in range(13)]
            assert all(b >= a for a, b in zip(counts, counts[1:]))
            # a truncated cut must stay below a deeper cut plus its leaves
            assert census.count_up_to(12) == census.leaves_by_depth.sum()

    def test_determinism(self):
        p = params(1.5, seed=8)
        a = sample_truncated_leaf_count(p, 2.0, 10, EXP, derive_stream(p, 4))
        b = sample_truncated_leaf_count(p, 2.0, 10, EXP, derive_stream(p, 4))
        assert a == b

    def test_frontier_cap_guards_runaway_trees(self):
        # strong hyperexplosion at a long horizon keeps nearly every vertex
        # alive, so a tiny cap must trip
        p = params(3.0, seed=61)
        with pytest.raises(RuntimeError, match="frontier"):
            leaf_census(p, 8.0, 20, EXP, derive_stream(p, 0), frontier_cap=8)


class TestPathExtrema:
    def test_depth_zero_is_root_clock(self):
        p = params(1.5, seed=13)
        stream = derive_stream(p, 0)
        root_clock = derive_stream(p, 0).standard_exponential(1)[0]
        pe = sample_path_extrema(p, 0, EXP, stream)
        assert pe.s_partial == pe.l_partial == pytest.approx(root_clock)

    def test_constant_clock_geometric_sum(self):
        # unit clocks, alpha=2: every path sums 1 + 1/2 + 1/4
        p = params(2.0, seed=13)
        pe = sample_path_extrema(p, 2, ClockSource.constant(1.0), derive_stream(p, 0))
        assert pe.s_partial == pytest.approx(1.75)
        assert pe.l_partial == pytest.approx(1.75)

    def test_matches_pathwise_enumeration(self):
        # independent oracle: walk every root-to-leaf path over the recorded
        # clock draws (level d consumes 2^d clocks in child order)
        p = params(1.3, seed=17)
        depth = 4
        s, l = path_extrema_by_depth(p, depth, EXP, derive_stream(p, 0))
        twin = derive_stream(p, 0)
        level_draws = [EXP.draw(twin, 2**d) for d in range(depth + 1)]
        path_sums = []
        for leaf in range(2**depth):
            total = 0.0
            for d in range(depth + 1):
                total += 1.3 ** (-d) * level_draws[d][leaf >> (depth - d)]
            path_sums.append(total)
        assert s[depth] == pytest.approx(min(path_sums))
        assert l[depth] == pytest.approx(max(path_sums))

    def test_monotone_in_depth_and_ordered(self):
        p = params(0.8, seed=19)
        for i in range(200):
            s, l = path_extrema_by_depth(p, 10, EXP, derive_stream(p, i))
            assert np.all(np.diff(s) > 0)
            assert np.all(np.diff(l) > 0)
            assert np.all(s <= l)

    def test_alpha_zero_rejected(self):
        with pytest.raises(ValueError):
            sample_path_extrema(params(0.0), 3, EXP, derive_stream(params(0.0), 0))

    def test_depth_cap_rejected(self):
        p = params(1.5)
        with pytest.raises(ValueError):
            sample_path_extrema(p, 30, EXP, derive_stream(p, 0))


class TestProductIndicator:
    def test_zero_horizon_is_one(self):
        p = params(1.5, seed=23)
        for n in (1, 3, 10):
            x = sample_product_indicator(p, 0.0, n, lambda a: np.zeros_like(a), EXP, derive_stream(p, 0))
            assert x == 1.0

    def test_constant_one_seed_absorbs(self):
        p = params(1.5, seed=23)
        for t in (0.0, 1.0, 4.0):
            x = sample_product_indicator(p, t, 8, lambda a: np.ones_like(a), EXP, derive_stream(p, 1))
            assert x == 1.0

    def test_zero_seed_one_step_mean(self):
        # with a zero seed, X_1(t) is the indicator of the root crossing
        p = params(1.5, seed=29)
        n = 10_000
        vals = np.array(
            [
                sample_product_indicator(p, 2.0, 1, lambda a: np.zeros_like(a), EXP, derive_stream(p, i))
                for i in range(n)
            ]
        )
        assert set(np.unique(vals)) <= {0.0, 1.0}
        p1 = math.exp(-2.0)
        band = 3.0 * math.sqrt(p1 * (1.0 - p1) / n)
        assert abs(vals.mean() - p1) < band

    def test_n_zero_evaluates_seed(self):
        p = params(1.5, seed=23)
        x = sample_product_indicator(p, 3.0, 0, lambda a: np.full_like(a, 0.25), EXP, derive_stream(p, 0))
        assert x == 0.25

    def test_out_of_range_seed_rejected(self):
        p = params(1.5, seed=23)
        with pytest.raises(ValueError):
            sample_product_indicator(p, 1.0, 0, lambda a: np.full_like(a, 1.5), EXP, derive_stream(p, 0))
        with pytest.raises(ValueError):
            sample_product_indicator(p, 8.0, 2, lambda a: np.full_like(a, -0.1), EXP, derive_stream(p, 1))


class TestTailFlags:
    def test_zero_horizon_both_exceed(self):
        p = params(1.5, seed=37)
        flags = sample_tail_flags(p, 0.0, 10, EXP, derive_stream(p, 0))
        assert flags.s_exceeds and flags.l_exceeds

    def test_depth_zero_matches_root_clock_law(self):
        # at depth 0 both extrema equal the root clock: P(exceeds t) = e^-t
        p = params(1.5, seed=41)
        n = 10_000
        hits = 0
        for i in range(n):
            flags = sample_tail_flags(p, 1.0, 0, EXP, derive_stream(p, i))
            assert flags.s_exceeds == flags.l_exceeds
            hits += flags.s_exceeds
        p1 = math.exp(-1.0)
        band = 3.0 * math.sqrt(p1 * (1.0 - p1) / n)
        assert abs(hits / n - p1) < band

    def test_s_exceeds_implies_l_exceeds(self):
        for alpha in (0.66, 1.5, 3.0):
            p = params(alpha, seed=43)
            for i in range(500):
                flags = sample_tail_flags(p, 2.0, 12, EXP, derive_stream(p, i))
                assert flags.l_exceeds or not flags.s_exceeds

    def test_nonexplosive_crossing_is_certain(self):
        # alpha below 1: path sums grow geometrically, every tree crosses t=2
        p = params(0.66, seed=47)
        assert all(
            sample_tail_flags(p, 2.0, 30, EXP, derive_stream(p, i)).l_exceeds
            for i in range(2000)
        )

    def test_matches_census_distribution(self):
        # survival flag and census alive-at-depth estimate the same probability
        p = params(1.5, seed=53)
        n = 4000
        census_freq = np.mean(
            [leaf_census(p, 2.0, 6, EXP, derive_stream(p, i)).survives_to(6) for i in range(n)]
        )
        flag_freq = np.mean(
            [
                not sample_tail_flags(p, 2.0, 6, EXP, derive_stream(p, n + i)).s_exceeds
                for i in range(n)
            ]
        )
        se = math.sqrt(2.0 * 0.25 / n)
        assert abs(census_freq - flag_freq) < 5.0 * se

    def test_horizon_cut_monotone_in_alpha(self):
        cuts = [crossing_horizon_cut(a) for a in (1.2, 1.5, 2.0, 3.0)]
        assert all(b <= a for a, b in zip(cuts, cuts[1:]))
        with pytest.raises(ValueError):
            crossing_horizon_cut(1.0)

    def test_determinism(self):
        p = params(3.0, seed=59)
        a = sample_tail_flags(p, 2.0, 25, EXP, derive_stream(p, 9))
        b = sample_tail_flags(p, 2.0, 25, EXP, derive_stream(p, 9))
        assert a == b
