"""Subspace-constrained randomized Kaczmarz solvers and experiment harness."""

from .analysis import (
    CorruptionBoundReport,
    HorizonReport,
    SpectralReport,
    SubsetSpectrum,
    coherence_rate_bound,
    corruption_bound,
    leverage_scores,
    noisy_horizon,
    sample_good_subset,
    scrk_rate_bound,
    subset_max_frobenius,
    subset_min_singular,
)
from .linalg import (
    ProjectorFactorization,
    SvdFactors,
    block_pseudoinverse,
    build_projector,
    project,
    project_rows,
    projected_submatrix_svd,
    pseudoinverse,
    svd,
)
from .problems import (
    CorruptionSpec,
    GeneratorSpec,
    add_corruptions,
    add_noise,
    ct_system,
    generate,
    ode_line_system,
    with_trusted_block,
)
from .solvers import (
    ConvergenceTrace,
    LinearProblem,
    SolverConfig,
    quantile_threshold,
    rejection_sampling_step,
    rk_step,
    run_solver,
    sample_row,
    scrk_step,
    two_step_block_update,
    uniform_variant_threshold,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
