"""Mean time to absorption for Kronecker-structured Markov chains.

Models of loosely interconnected components are kept as small automata
coupled by synchronized transitions; generators, iterates, and operators all
live in tensor-train format, so state spaces far beyond dense reach stay
tractable.  A brute-force dense oracle covers small instances for
verification.
"""

from .casestudy import (
    CaseStudyParams,
    generate_case_study,
    random_topology,
    reference_topology,
)
from .errors import (
    AbsorptionError,
    AccuracyError,
    DivergenceError,
    ModelError,
    RankBudgetError,
    SanttError,
    ShapeMismatchError,
    SizeCapError,
    SpectrumError,
)
from .kron import (
    ExponentialSum,
    KronSumInverse,
    KronSumOperator,
    exp_sum_coeffs,
    expm_dense,
    kron_sum_inverse_apply,
    kron_sum_inverse_as_ttm,
    spectrum_interval,
)
from .model import (
    Descriptor,
    SanModel,
    Splitting,
    SyncTransition,
    build_descriptor,
    build_splitting,
    default_gamma,
    load_model,
    rcm_order,
    save_model,
)
from .oracle import (
    DenseChain,
    dense_contraction_checks,
    dense_generator,
    dense_mtta,
)
from .solver import (
    SolveReport,
    SolverConfig,
    apply_m,
    compute_mtta,
    neumann_linear,
    neumann_squared,
    neumann_transpose,
    prepare_workspace,
)
from .tt import (
    RoundingPolicy,
    TTMatrix,
    TTVector,
    tt_add,
    tt_diag,
    tt_dot,
    tt_from_dense,
    tt_norm_f,
    tt_ones,
    tt_rank_one,
    tt_round,
    tt_scale,
    tt_to_dense,
    tt_unit,
    tt_zeros,
    ttm_add,
    ttm_apply,
    ttm_apply_left,
    ttm_from_kron_terms,
    ttm_identity,
    ttm_kron_sum,
    ttm_multiply,
    ttm_to_dense,
)

__version__ = "0.1.0"
