"""dualreg: conditional distribution and quantile estimation by dual regression.

The package estimates the conditional distribution values of every sample
point simultaneously, by maximizing the correlation between outcomes and
residual assignments under orthogonality constraints. The workhorse is a
linear location-scale fit whose multipliers double as quantile-coefficient
curves; generalizations cover richer convex basis expansions and two
instrumental-variables estimators, with a quantile-regression and
rearrangement benchmark plus a Monte Carlo harness alongside.
"""

from .basis import BUILTIN_BASES, BasisSpec, canonical_basis, get_basis, rational_cubic_basis
from .baseline import QrFit, fit_qr, qr_coefficient_process, rearranged_cdf, rearranged_quantiles
from .core import (
    Dataset,
    DesignMatrix,
    Ecdf,
    build_design,
    ecdf_transform,
    quantile_coefficients,
    reconstruct_y,
    residual_from_multipliers,
)
from .exceptions import (
    BracketError,
    ConfigError,
    DataError,
    DesignRankError,
    DomainError,
    DualRegressionError,
    GridError,
    InitializationError,
    InvalidSpecError,
    MaxIterationsError,
    NonMonotoneMapError,
    NotJustIdentifiedError,
    NumericalError,
    ScaleNotPositiveError,
    SingularJacobianError,
    StudyAbortedError,
)
from .gdr import GdrFit, fit_gdr, gdr_moments, invert_foc
from .io import dual_fit_document, dual_fit_from_document, read_dataset_csv
from .iv import (
    FirstStage,
    IvFit,
    covariance_iv,
    first_stage,
    fit_iv_direct,
    fit_iv_indirect,
    recover_multipliers,
    two_stage_least_squares,
)
from .simulate import DgpSpec, SimReport, draw_sample, lp_error, rmae, run_study
from .solver import (
    CovarianceEstimate,
    DualFit,
    MomentReport,
    SolverOptions,
    covariance,
    duality_gap,
    fit_dual,
    moment_report,
    primal_gradient,
    primal_objective,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_BASES",
    "BasisSpec",
    "BracketError",
    "ConfigError",
    "CovarianceEstimate",
    "DataError",
    "Dataset",
    "DesignMatrix",
    "DesignRankError",
    "DgpSpec",
    "DomainError",
    "DualFit",
    "DualRegressionError",
    "Ecdf",
    "FirstStage",
    "GdrFit",
    "GridError",
    "InitializationError",
    "InvalidSpecError",
    "IvFit",
    "MaxIterationsError",
    "MomentReport",
    "NonMonotoneMapError",
    "NotJustIdentifiedError",
    "NumericalError",
    "QrFit",
    "ScaleNotPositiveError",
    "SimReport",
    "SingularJacobianError",
    "SolverOptions",
    "StudyAbortedError",
    "build_design",
    "canonical_basis",
    "covariance",
    "covariance_iv",
    "draw_sample",
    "dual_fit_document",
    "dual_fit_from_document",
    "duality_gap",
    "ecdf_transform",
    "first_stage",
    "fit_dual",
    "fit_gdr",
    "fit_iv_direct",
    "fit_iv_indirect",
    "fit_qr",
    "gdr_moments",
    "get_basis",
    "invert_foc",
    "lp_error",
    "moment_report",
    "primal_gradient",
    "primal_objective",
    "qr_coefficient_process",
    "quantile_coefficients",
    "rational_cubic_basis",
    "read_dataset_csv",
    "rearranged_cdf",
    "rearranged_quantiles",
    "reconstruct_y",
    "recover_multipliers",
    "residual_from_multipliers",
    "rmae",
    "run_study",
    "two_stage_least_squares",
]
