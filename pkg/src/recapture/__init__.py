"""Population-size estimation from multi-list capture-recapture data."""

from .api import PopulationSizeEstimator
from .core import (
    CaptureProfile,
    ListSubset,
    QVector,
    SensitivityParams,
    alpha1_from_conditional_probs,
    enumerate_suffix_zero_profiles,
    gamma_inverse,
    gamma_inverse_bounds,
    odds_ratio_decomposition,
)
from .data import CovariateColumn, ObservedDataset
from .estimators import (
    BoundsReport,
    EifSample,
    EstimateReport,
    bound_psi_inv_one_step,
    efficiency_bound,
    n_bounds_and_ci,
    n_point_and_ci,
    one_step_psi_inv,
    plug_in_psi_inv,
    psi_inv_ci,
)
from .exceptions import (
    ConfigurationError,
    DataValidationError,
    ProbabilityDomainError,
    RecaptureError,
)
from .nuisance import LearnerSpec, QEstimates, cross_fit_q, fit_q, split_folds
from .simulate import (
    SimulationConfig,
    StudyResult,
    generate_population,
    generate_stratified_population,
    perturb_q,
    remainder_diagnostic,
    run_study,
)

__all__ = [
    "BoundsReport",
    "CaptureProfile",
    "ConfigurationError",
    "CovariateColumn",
    "DataValidationError",
    "EifSample",
    "EstimateReport",
    "LearnerSpec",
    "ListSubset",
    "ObservedDataset",
    "PopulationSizeEstimator",
    "ProbabilityDomainError",
    "QEstimates",
    "QVector",
    "RecaptureError",
    "SensitivityParams",
    "SimulationConfig",
    "StudyResult",
    "alpha1_from_conditional_probs",
    "bound_psi_inv_one_step",
    "cross_fit_q",
    "efficiency_bound",
    "enumerate_suffix_zero_profiles",
    "fit_q",
    "gamma_inverse",
    "gamma_inverse_bounds",
    "generate_population",
    "generate_stratified_population",
    "n_bounds_and_ci",
    "n_point_and_ci",
    "odds_ratio_decomposition",
    "one_step_psi_inv",
    "perturb_q",
    "plug_in_psi_inv",
    "psi_inv_ci",
    "remainder_diagnostic",
    "run_study",
    "split_folds",
]

__version__ = "0.1.0"
