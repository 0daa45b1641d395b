"""Quadrature and recursion contracts, checked against analytic oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccati_cascade import (
    GridFunction,
    GridMemoryError,
    UniformGrid,
    check_identity_v_q,
    convolve_kernel,
    evaluate,
    integrate_tail,
    iterate_qn,
    iterate_vn,
    picard_v0,
    riccati_residual,
)

GRID = UniformGrid(8.0, 0.01)


class TestUniformGrid:
    def test_node_layout(self):
        assert GRID.node_count == 801
        assert GRID.t_end == pytest.approx(8.0)
        coarse = UniformGrid(1.0, 0.3)
        assert coarse.node_count == 5  # ceil(1/0.3) = 4 intervals
        assert coarse.t_end == pytest.approx(1.2)

    def test_validation(self):
        with pytest.raises(ValueError):
            UniformGrid(8.0, 0.0)
        with pytest.raises(ValueError):
            UniformGrid(0.005, 0.01)

    def test_nodes_immutable(self):
        with pytest.raises(ValueError):
            GRID.nodes[0] = 1.0


class TestEvaluate:
    def test_constant(self):
        ones = GridFunction.constant(GRID, 1.0)
        for t in (0.0, 3.3333, 8.0, 100.0):
            assert evaluate(ones, t) == 1.0

    def test_linear_between_nodes(self):
        grid = UniformGrid(0.01, 0.01)
        f = GridFunction(grid, np.array([0.0, 0.01]), 0.01)
        assert evaluate(f, 0.005) == pytest.approx(0.005)

    def test_tail_policy(self):
        f = GridFunction(GRID, np.linspace(0, 1, GRID.node_count), 0.25)
        assert evaluate(f, 13.0) == 0.25

    def test_negative_rejected(self):
        ones = GridFunction.constant(GRID, 1.0)
        with pytest.raises(ValueError):
            evaluate(ones, -0.1)

    def test_vectorized(self):
        ones = GridFunction.constant(GRID, 1.0)
        out = evaluate(ones, np.array([0.0, 4.0, 9.0]))
        assert np.array_equal(out, np.ones(3))

    def test_callable_alias(self):
        ones = GridFunction.constant(GRID, 1.0)
        assert ones(2.0) == evaluate(ones, 2.0)

    def test_range_bounds_validation(self):
        with pytest.raises(ValueError):
            GridFunction(GRID, np.full(GRID.node_count, 1.5), 1.0, range_bounds=True)


class TestConvolveKernel:
    def test_constant_one_analytic(self):
        ones = GridFunction.constant(GRID, 1.0)
        g = convolve_kernel(ones, 1.0, GRID)
        err = np.max(np.abs(g.values - (1.0 - np.exp(-GRID.nodes))))
        assert err < 1e-3
        assert g.values[0] == 0.0

    def test_halving_step_quarters_error(self):
        errs = []
        for step in (0.01, 0.005):
            grid = UniformGrid(8.0, step)
            g = convolve_kernel(GridFunction.constant(grid, 1.0), 1.0, grid)
            errs.append(np.max(np.abs(g.values - (1.0 - np.exp(-grid.nodes)))))
        assert 3.5 <= errs[0] / errs[1] <= 4.5

    def test_zero_integrand(self):
        zero = GridFunction.constant(GRID, 0.0)
        g = convolve_kernel(zero, 2.0, GRID)
        assert np.all(g.values == 0.0)

    def test_matches_direct_composite_trapezoid(self):
        # independent oracle: the O(N^2) trapezoid sum, node by node
        grid = UniformGrid(2.0, 0.05)
        nodes = grid.nodes
        vals = 0.5 + 0.4 * np.sin(nodes) ** 2
        f = GridFunction(grid, vals, 0.3)
        alpha = 1.7
        g = convolve_kernel(f, alpha, grid)
        for i in (0, 1, 7, 23, len(nodes) - 1):
            s = nodes[: i + 1]
            integrand = np.exp(-s) * np.interp(alpha * (nodes[i] - s), nodes, vals, right=0.3)
            direct = np.trapezoid(integrand, dx=grid.step)
            assert g.values[i] == pytest.approx(direct, abs=1e-12)

    def test_rejects_negative_alpha(self):
        with pytest.raises(ValueError):
            convolve_kernel(GridFunction.constant(GRID, 1.0), -1.0, GRID)


class TestPicard:
    def test_k0_is_constant_one(self):
        u0 = picard_v0(3.0, GRID, 0)
        assert np.all(u0.values == 1.0)
        assert u0.tail_value == 1.0

    def test_k1_analytic(self):
        u1 = picard_v0(3.0, GRID, 1)
        err = np.max(np.abs(u1.values - (1.0 - np.exp(-GRID.nodes))))
        assert err < 1e-3

    def test_reference_seed_is_a_distribution_profile(self):
        # the alpha=3, k=5 seed curve: values in [0,1], nondecreasing in t
        u5 = picard_v0(3.0, GRID, 5)
        assert float(np.min(u5.values)) >= 0.0
        assert float(np.max(u5.values)) <= 1.0
        assert np.all(np.diff(u5.values) >= -1e-12)

    def test_nonincreasing_in_k(self):
        prev = None
        for k in range(9):
            u = picard_v0(1.5, GRID, k).values
            if prev is not None:
                assert np.max(u - prev) <= 1e-9
            prev = u

    def test_restriction_extent_stable(self):
        # forcing the full expansion must not change the restricted values
        u_adaptive = picard_v0(1.5, GRID, 5)
        u_full = picard_v0(1.5, GRID, 5, expand_full=True)
        assert np.max(np.abs(u_adaptive.values - u_full.values)) < 1e-9

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            picard_v0(0.0, GRID, 3)
        with pytest.raises(ValueError):
            picard_v0(1.5, GRID, -1)


class TestIterateVn:
    def test_n0_returns_seed_unchanged(self):
        v0 = picard_v0(1.5, GRID, 3)
        assert iterate_vn(1.5, GRID, 0, v0) is v0

    def test_zero_seed_one_step_is_exponential(self):
        zero = GridFunction.constant(GRID, 0.0)
        v1 = iterate_vn(1.5, GRID, 1, zero)
        assert np.max(np.abs(v1.values - np.exp(-GRID.nodes))) < 1e-4

    def test_constant_one_is_fixed_point(self):
        ones = GridFunction.constant(GRID, 1.0)
        v = iterate_vn(2.0, GRID, 6, ones)
        assert np.all(v.values == 1.0)

    def test_initial_value_exact(self):
        v0 = picard_v0(1.5, GRID, 5)
        for n in (1, 4, 9):
            assert iterate_vn(1.5, GRID, n, v0).values[0] == 1.0

    def test_matches_literal_recursion_at_quadrature_order(self):
        # the literal form adds exp(-t) and convolves the square directly;
        # the difference to the complement-form implementation is pure
        # quadrature noise and shrinks like h^2
        diffs = []
        for step in (0.01, 0.005):
            base = UniformGrid(8.0, step)
            work = UniformGrid(32.0, step)
            v0 = picard_v0(1.5, base, 5)
            vv = evaluate(v0, work.nodes)
            tail = v0.tail_value
            for _ in range(5):
                sq = GridFunction(work, np.clip(vv, 0, 1) ** 2, tail**2)
                g = convolve_kernel(sq, 1.5, work)
                vv = np.clip(np.exp(-work.nodes) + g.values, 0.0, 1.0)
                tail = 1.0
            vn = iterate_vn(1.5, base, 5, v0)
            n_base = base.node_count
            diffs.append(float(np.max(np.abs(vn.values - vv[:n_base]))))
        assert diffs[0] < 5e-4
        assert 2.5 <= diffs[0] / diffs[1] <= 5.5


class TestIterateQn:
    def test_supersolution_one_step_analytic(self):
        ones = GridFunction.constant(GRID, 1.0)
        q1 = iterate_qn(0.66, GRID, 1, ones)
        assert np.max(np.abs(q1.values - (1.0 - np.exp(-GRID.nodes)))) < 1e-4

    def test_zero_is_fixed_point(self):
        zero = GridFunction.constant(GRID, 0.0)
        q = iterate_qn(1.5, GRID, 7, zero)
        assert np.all(q.values == 0.0)

    def test_initial_value_exact(self):
        q0 = picard_v0(1.5, GRID, 5).complement()
        for n in (1, 3, 8):
            assert iterate_qn(1.5, GRID, n, q0).values[0] == 0.0

    def test_collect_levels(self):
        q0 = GridFunction.constant(GRID, 1.0)
        q8, levels = iterate_qn(1.5, GRID, 8, q0, collect={2, 5, 8})
        assert set(levels) == {2, 5, 8}
        assert np.array_equal(levels[8].values, q8.values)

    def test_supersolution_chain_decreasing(self):
        q0 = GridFunction.constant(GRID, 1.0)
        _, levels = iterate_qn(2.5, GRID, 6, q0, collect=set(range(1, 7)))
        prev = q0.values
        for j in range(1, 7):
            assert np.max(levels[j].values - prev) <= 1e-12
            prev = levels[j].values

    @settings(max_examples=25, deadline=None)
    @given(
        alpha=st.floats(0.3, 3.0),
        seed_level=st.floats(0.0, 1.0),
        n=st.integers(1, 4),
    )
    def test_range_preserved(self, alpha, seed_level, n):
        grid = UniformGrid(2.0, 0.05)
        q0 = GridFunction.constant(grid, seed_level)
        q = iterate_qn(alpha, grid, n, q0)
        assert float(np.min(q.values)) >= 0.0
        assert float(np.max(q.values)) <= 1.0
        assert q.values[0] == 0.0

    def test_rejects_out_of_range_seed(self):
        bad = GridFunction(GRID, np.full(GRID.node_count, 1.2), 1.0)
        with pytest.raises(ValueError):
            iterate_qn(1.5, GRID, 2, bad)


class TestIdentity:
    def test_weak_hyperexplosive_case(self):
        assert check_identity_v_q(1.5, GRID, 5) < 1e-4

    def test_strong_hyperexplosive_case(self):
        assert check_identity_v_q(3.0, GRID, 10) < 1e-4

    def test_trivial_seed(self):
        ones = GridFunction.constant(GRID, 1.0)
        v = iterate_vn(2.0, GRID, 4, ones)
        q = iterate_qn(2.0, GRID, 4, ones.complement())
        assert np.max(np.abs(v.values - (1.0 - q.values))) == 0.0


class TestResidual:
    def test_constant_one_solves_exactly(self):
        ones = GridFunction.constant(GRID, 1.0)
        report = riccati_residual(ones, 2.0)
        assert report.max_abs_residual == 0.0

    def test_exponential_profile_at_alpha_one(self):
        # v = e^-t at alpha=1: v' + v - v^2 = -e^-2t, so |r(0)| is about 1
        f = GridFunction(GRID, np.exp(-GRID.nodes), math.exp(-8.0))
        report = riccati_residual(f, 1.0)
        expected = -np.exp(-2.0 * GRID.nodes)
        assert abs(report.residual[0] - expected[0]) < 1e-3
        assert np.max(np.abs(report.residual - expected)) < 1e-3
        assert report.interior_range[1] == pytest.approx(8.0)

    def test_iterated_curve_residual_shrinks(self):
        v0 = picard_v0(1.5, GRID, 5)
        res_small_n = riccati_residual(iterate_vn(1.5, GRID, 5, v0), 1.5).max_abs_residual
        res_large_n = riccati_residual(iterate_vn(1.5, GRID, 20, v0), 1.5).max_abs_residual
        assert res_large_n < res_small_n

    def test_residual_shrinks_under_step_refinement(self):
        res = {}
        for step in (0.01, 0.005):
            grid = UniformGrid(8.0, step)
            v0 = picard_v0(1.5, grid, 5)
            res[step] = riccati_residual(iterate_vn(1.5, grid, 40, v0), 1.5).max_abs_residual
        assert res[0.005] < res[0.01]

    def test_interior_excludes_tail_arguments(self):
        v0 = picard_v0(3.0, GRID, 5)
        report = riccati_residual(v0, 3.0)
        assert report.interior_range[1] <= 8.0 / 3.0 + 0.011

    def test_small_grid_rejected(self):
        grid = UniformGrid(0.02, 0.01)
        f = GridFunction.constant(grid, 1.0)
        with pytest.raises(ValueError):
            riccati_residual(GridFunction(UniformGrid(0.01, 0.01), np.array([1.0, 1.0]), 1.0), 1.0)
        assert riccati_residual(f, 1.0).max_abs_residual == 0.0


class TestIntegrateTail:
    def test_constant_one(self):
        ones = GridFunction.constant(GRID, 1.0)
        result = integrate_tail(ones)
        assert result.head == pytest.approx(8.0)
        assert result.diverges

    def test_exponential_analytic(self):
        f = GridFunction(GRID, np.exp(-GRID.nodes), math.exp(-8.0))
        result = integrate_tail(f)
        assert abs(result.head - (1.0 - math.exp(-8.0))) < 1e-4
        assert result.diverges  # positive flat tail

    def test_explosion_seed_surrogate_is_integrable(self):
        q0 = picard_v0(1.5, GRID, 5).complement()
        result = integrate_tail(q0)
        assert math.isfinite(result.head)
        assert result.tail_value == 0.0
        assert not result.diverges


class TestWorkingGridLimits:
    def test_node_cap_raises(self):
        q0 = GridFunction.constant(GRID, 1.0)
        with pytest.raises(GridMemoryError):
            iterate_qn(3.0, GRID, 8, q0, node_cap=1000)

    def test_full_expansion_overflow_raises(self):
        q0 = GridFunction.constant(GRID, 1.0)
        with pytest.raises(GridMemoryError):
            iterate_qn(3.0, GRID, 20, q0, expand_full=True)
