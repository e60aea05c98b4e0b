"""Numerics laboratory for multiplicative equations driven by Brownian
motion and regularized by a frozen fractional perturbation of the
coefficient argument.

The pipeline: sample exact fractional drivers, accumulate occupation
measures and local times, average coefficient fields along the
perturbation, sew germs into integrals, solve quenched ensembles for a
decreasing family of mollification radii, and verify the integral
identities that make the mollified limit meaningful.
"""

from .averaging import (AveragedField, HolderEstimate, RegularityBudget,
                        admissible_regularity, average_direct,
                        average_via_local_time, convolution_agreement_bound,
                        holder_exponent, hurst_admissible_fbm_driver,
                        hurst_admissible_main)
from .errors import (BlowUpError, ClampWarning, CoverageError, FbmLabError,
                     GenerationError, HypothesisError, InsufficientDataError,
                     IntegrabilityWarning, ParameterError, ResolutionError)
from .fields import (CLAMP_VALUE, MatrixField, MollifierSpec, ScalarField,
                     constant_field, hs_norm_sq, identity_field, lp_norm,
                     mollify, singular_example)
from .occupation import (LocalTimeField, OccupationMeasure, SpatialGrid,
                         local_time, multilinear_interpolate,
                         occupation_formula_residual, occupation_measure)
from .paths import (BmPath, FbmPath, TimeGrid, fbm_covariance, generate_bm,
                    generate_bm_increments, generate_fbm, generate_fbm_batch)
from .sewing import (Germ, SewingDiagnostics, SewingResult, delta,
                     nonlinear_young_solve, remainder_check, sew,
                     stochastic_sewing_diagnostic)
from .solver import (Ensemble, MollifiedCauchyReport, QuenchedScenario,
                     euler_maruyama, mollified_family,
                     mollified_integral_sequence, solve_ensemble)
from .verify import (WEIGHT_DICTIONARY_VERSION, IdentityReport,
                     MomentRatioReport, cross_term_check, ito_isometry_check,
                     lebesgue_vs_sewing, martingale_residuals, moment_ratio,
                     moment_ratio_trend, quantized_perturbation,
                     weight_dictionary)

__version__ = "0.1.0"

__all__ = [
    "AveragedField", "BmPath", "BlowUpError", "CLAMP_VALUE", "ClampWarning",
    "CoverageError", "Ensemble", "FbmLabError", "FbmPath", "GenerationError",
    "Germ", "HolderEstimate", "HypothesisError", "IdentityReport",
    "InsufficientDataError", "IntegrabilityWarning", "LocalTimeField",
    "MatrixField", "MollifiedCauchyReport", "MollifierSpec",
    "MomentRatioReport", "OccupationMeasure", "ParameterError",
    "QuenchedScenario", "RegularityBudget", "ResolutionError", "ScalarField",
    "SewingDiagnostics", "SewingResult", "SpatialGrid", "TimeGrid",
    "WEIGHT_DICTIONARY_VERSION",
    "admissible_regularity", "average_direct", "average_via_local_time",
    "constant_field", "convolution_agreement_bound", "cross_term_check",
    "delta", "euler_maruyama", "fbm_covariance", "generate_bm",
    "generate_bm_increments", "generate_fbm", "generate_fbm_batch",
    "hs_norm_sq", "holder_exponent", "hurst_admissible_fbm_driver",
    "hurst_admissible_main", "identity_field", "ito_isometry_check",
    "lebesgue_vs_sewing", "local_time", "lp_norm", "martingale_residuals",
    "moment_ratio", "moment_ratio_trend", "mollified_family",
    "mollified_integral_sequence", "mollify", "multilinear_interpolate",
    "nonlinear_young_solve", "occupation_formula_residual",
    "occupation_measure", "quantized_perturbation", "remainder_check", "sew",
    "singular_example", "solve_ensemble", "stochastic_sewing_diagnostic",
    "weight_dictionary",
]
