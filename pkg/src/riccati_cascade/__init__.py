"""Simulation and numerical analysis of the alpha-Riccati branching cascade.

The package samples the random binary cascade whose depth-j edges carry
mean-one exponential clocks scaled by alpha**-j, evaluates the associated
integral recursions on uniform time grids, and cross-validates the two
routes (Monte Carlo vs deterministic quadrature) with seeded, worker-count
independent reproducibility.
"""

__version__ = "0.1.0"

from .cascade_core import (
    CascadeParams,
    ClockSource,
    LeafCensus,
    LeafCountSample,
    PathExtrema,
    TailFlags,
    crossing_horizon_cut,
    derive_stream,
    leaf_census,
    path_extrema_by_depth,
    sample_path_extrema,
    sample_product_indicator,
    sample_tail_flags,
    sample_truncated_leaf_count,
)
from .grid_numerics import (
    GridFunction,
    GridMemoryError,
    ResidualReport,
    TailIntegral,
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
from .monte_carlo import (
    ComparisonReport,
    EstimatePoint,
    EstimateSeries,
    Histogram,
    McConfig,
    compare_series,
    estimate_L_tail,
    estimate_S_tail,
    estimate_leaf_histogram,
    estimate_v_curve,
)

__all__ = [
    "__version__",
    "CascadeParams",
    "ClockSource",
    "LeafCensus",
    "LeafCountSample",
    "PathExtrema",
    "TailFlags",
    "crossing_horizon_cut",
    "derive_stream",
    "leaf_census",
    "path_extrema_by_depth",
    "sample_path_extrema",
    "sample_product_indicator",
    "sample_tail_flags",
    "sample_truncated_leaf_count",
    "GridFunction",
    "GridMemoryError",
    "ResidualReport",
    "TailIntegral",
    "UniformGrid",
    "check_identity_v_q",
    "convolve_kernel",
    "evaluate",
    "integrate_tail",
    "iterate_qn",
    "iterate_vn",
    "picard_v0",
    "riccati_residual",
    "ComparisonReport",
    "EstimatePoint",
    "EstimateSeries",
    "Histogram",
    "McConfig",
    "compare_series",
    "estimate_L_tail",
    "estimate_S_tail",
    "estimate_leaf_histogram",
    "estimate_v_curve",
]
