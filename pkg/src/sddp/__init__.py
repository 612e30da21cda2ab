"""Supervised deep dynamic PCA: target-aware factor extraction for forecasting
with high-dimensional time-series predictors."""

from sddp.errors import (
    ConfigError,
    DataError,
    DegenerateLossError,
    NumericError,
    ParseError,
    SddpError,
    ShapeError,
)
from sddp.factors import FactorModel, extract_factors, pca_baseline, select_num_factors
from sddp.forecast import ForecastModel, fit_forecaster, fit_vanilla, predict
from sddp.linalg import (
    EigenDecomposition,
    RngStream,
    procrustes_residual,
    rng_stream,
    second_moment,
    symmetric_eig,
)
from sddp.panel import (
    MaskedPanel,
    StandardizationStats,
    TimePanel,
    chronological_split,
    inject_missing,
    load_panel,
    standardize,
    write_panel,
)

from sddp.pipeline import METHODS, Pipeline, fit_pipeline, holdout_forecasts
from sddp.simulate import SyntheticConfig, alignment_error, convergence_study, simulate
from sddp.target_aware import (
    TargetAwarePanel,
    fit_sdpca_linear,
    fit_target_aware,
    fit_target_aware_masked,
)

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "ConfigError",
    "DataError",
    "DegenerateLossError",
    "FactorModel",
    "ForecastModel",
    "EigenDecomposition",
    "MaskedPanel",
    "NumericError",
    "ParseError",
    "Pipeline",
    "RngStream",
    "SddpError",
    "ShapeError",
    "StandardizationStats",
    "SyntheticConfig",
    "TargetAwarePanel",
    "TimePanel",
    "alignment_error",
    "chronological_split",
    "convergence_study",
    "extract_factors",
    "fit_forecaster",
    "fit_pipeline",
    "fit_sdpca_linear",
    "fit_target_aware",
    "fit_target_aware_masked",
    "fit_vanilla",
    "holdout_forecasts",
    "inject_missing",
    "load_panel",
    "pca_baseline",
    "predict",
    "procrustes_residual",
    "rng_stream",
    "second_moment",
    "select_num_factors",
    "simulate",
    "standardize",
    "symmetric_eig",
    "write_panel",
]
