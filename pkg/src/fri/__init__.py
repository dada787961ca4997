"""Fast randomized iteration.

Classical iterative schemes (power iteration, fixed-point solves, matrix
exponential action) with the iterates replaced by sparse random vectors whose
conditional expectation matches the true iterate, so that eigenvalues and
fixed functionals can be estimated for operators far too large to store a
solution vector for.
"""

__version__ = "0.1.0"

from .compress import (
    CompressionError,
    CompressionRule,
    RngStream,
    SplitResult,
    compress,
    exact_preservation_split,
    stochastic_round_floor_ceil,
    stochastic_round_independent_uniform,
    stochastic_round_stratified,
    stochastic_round_systematic,
    tbs_truncate,
)
from .ising import IsingParams, IsingOperator, ising_exact, ising_operator, tail_weight_functional
from .iterate import (
    AffineUpdateMap,
    IterationConfig,
    IterationError,
    OperatorMap,
    Trajectory,
    TrajectoryRecord,
    deterministic_iterate,
    deterministic_power,
    fri_expm,
    fri_iterate,
    fri_iterate_residual,
    fri_power,
    fri_solve,
    write_trajectory_csv,
)
from .linop import ColumnOracle, ExplicitMatrix, apply_column_compressed, apply_sparse
from .mmio import (
    MatrixMarketError,
    load_matrix_market,
    load_vector_market,
    save_matrix_market,
    save_vector_market,
)
from .sparse import (
    DenseFunctional,
    SparseVector,
    all_ones,
    axpy,
    basis_functional,
    dot,
    dump_lines,
    from_arrays,
    from_pairs,
    functional_from_sparse,
    indicator,
    l1_norm,
    normalize_l1,
    project_zero,
    scale,
)
from .stats import (
    EstimateSummary,
    integrated_autocorrelation_time,
    summarize,
    trajectory_average,
)

__all__ = [name for name in dir() if not name.startswith("_")]
