"""Linear unbiased estimators for causal effects under additive exposure models."""

from .design import (
    BernoulliDesign,
    ExplicitDesign,
    ExposureDistribution,
    allocation_matrix,
    allocations,
    bernoulli_exposure_distribution,
    bernoulli_exposure_prob,
    exposure_distribution_exact,
    uniform_distribution,
)
from .estimators import (
    ConstraintMatrix,
    LinearEstimator,
    SupportCheck,
    affine_rank,
    basis_count,
    build_affine_basis,
    build_four_term_alue,
    build_malue_set,
    build_two_term_alue,
    build_zero_estimators,
    check_support_condition,
    check_unbiased,
    check_zero_expectation,
    constraint_matrix,
    decompose_in_basis,
    evaluate_estimator,
    lue_dimension,
    malue_count,
    sample_random_lue,
    zero_count,
)
from .exposure import (
    ExposureSpec,
    ParameterIndex,
    apply_exposure_mapping,
    enumerate_exposures,
    indicator_vector,
    parameter_order,
    remap_exposures,
)
from .mivlue import (
    KktSystem,
    LimitSolution,
    MivlueSolution,
    PriorSpec,
    SingularSystemError,
    assemble_system,
    max_alpha3,
    outcome_variance,
    six_term_alpha_weights,
    solve_from_moments,
    solve_mivlue,
    solve_mivlue_limit,
    support_null_prior,
)
from .networks import (
    Network,
    gen_erdos_renyi_directed,
    gen_k_regular_directed,
    treated_degree,
)
from .simulation import (
    ExperimentConfig,
    ImseReport,
    NetworkConfig,
    OutcomeModel,
    UnitParameters,
    build_estimator_family,
    compute_imse,
    estimate_average_effect,
    potential_outcome,
    sample_parameters,
)
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
