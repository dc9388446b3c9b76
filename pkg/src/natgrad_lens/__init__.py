"""Reconstruct, analyze and validate the symmetric positive definite metric
that casts an effective learning rule as natural gradient descent."""

from .errors import (
    AlignmentError,
    CertificateError,
    ConfigError,
    EffectivenessError,
    NoRootError,
    ParseError,
)
from .linalg import (
    EigenDecomposition,
    SymMatrix,
    angle_between,
    orthonormal_complement_basis,
    solve_lyapunov,
    sym_eigen,
)
from .metrics import (
    CanonicalDecomposition,
    EigenvalueBounds,
    ExtendedPair,
    Metric,
    SpectrumReport,
    UpdateGradientPair,
    ValidityReport,
    build_canonical_metric,
    build_family_metric,
    canonical_decomposition,
    closed_form_spectrum,
    condition_number_bound,
    extend_time_varying,
    extreme_eigenvalue_bounds,
    metric_from_matrix,
    optimal_metric,
    verify_natural_gradient_form,
)
from .discrete import (
    CombinedMetric,
    ContinuumProbe,
    DiscreteGradientResult,
    DiscreteStep,
    LossOracle,
    StochasticMetric,
    StochasticSample,
    build_discrete_metric,
    certified_max_learning_rate,
    combined_metric,
    continuum_limit_probe,
    discrete_gradient,
    max_learning_rate,
    quadratic_oracle,
    quartic_oracle,
    stochastic_average_metric,
    taylor_lambda,
)
from .experiments import (
    EffectivenessReport,
    FaConfig,
    LtiConfig,
    TrajectoryTrace,
    check_effectiveness,
    run_feedback_alignment,
    run_lti,
)

__version__ = "0.1.0"
