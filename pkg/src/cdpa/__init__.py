"""Common and distinctive pattern decomposition for paired datasets.

Decomposes two variables-by-samples matrices observed on the same
samples into a shared common-pattern matrix and per-dataset distinctive
patterns, on top of a canonical common/distinctive source split of the
denoised signals.
"""

from .align import (
    DspfpConfig,
    MatchProblem,
    PermutationPlan,
    SignChoice,
    build_match_problem,
    choose_sign,
    dspfp_match,
    exhaustive_match,
    match_objective,
    zero_pad,
)
from .dcca import (
    CanonicalSystem,
    CommonFactorSet,
    MixingChannel,
    SourceDecomposition,
    canonical_system,
    common_factor_coefficients,
    common_factor_scores,
    source_decomposition,
)
from .denoise import (
    Diagnostics,
    ObservedMatrix,
    RankProfile,
    SignalCovariance,
    SignalEstimate,
    center_rows,
    compute_diagnostics,
    correlation_screen,
    ed_select_rank,
    mdl_select_r12,
    noise_trace,
    signal_covariance,
    soft_threshold_denoise,
)
from .errors import (
    BadConfig,
    BadDimensions,
    CdpaError,
    ChannelRankDeficient,
    DegenerateThreshold,
    InputError,
    NumericalError,
    RankDeficiency,
    RankTooLarge,
    TooFewSamples,
    TooLarge,
    ZeroSignal,
)
from .matrixio import read_matrix, read_matrix_binary, write_matrix_binary
from .patterns import (
    BootstrapInterval,
    CdpaConfig,
    DecompositionResult,
    DualWeight,
    PatternDecomposition,
    PopulationPatterns,
    assemble_patterns,
    bootstrap_ci,
    common_pattern,
    dual_weights,
    estimate_cdpa,
    explained_variance,
    pattern_decomposition,
    population_cdpa,
)
from .simulate import (
    ErrorReport,
    GroundTruth,
    SimulationConfig,
    closed_form_explained_variance,
    error_metrics,
    generate_setup,
    oracle_explained_variance,
    planted_correlations,
    run_replications,
)
from .subspace import (
    ChannelPatternBasis,
    ChannelSubspacePair,
    channel_common_basis,
    orthonormal_basis,
    principal_angles,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
