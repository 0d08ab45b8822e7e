"""Residual-based step-down multiple testing for Gaussian means with known covariance."""

from .calibration import CalibrationResult, calibrate_first_threshold, estimate_fwer
from .engine import (
    StageRecord,
    StepDownConfig,
    ThresholdProfile,
    Trajectory,
    make_config,
    run_baseline,
    run_batch,
    run_mrd,
    run_stepdown,
    select_index,
)
from .gaussian import (
    ActiveState,
    CovarianceModel,
    build_model,
    conditional_residual,
    conditional_variance,
    downdate_precision,
    residuals_via_precision,
    shift_direction,
    standardize_observation,
    y_coordinates,
)
from .geometry import check_interval, check_rejection_path, check_shift_invariance, scan_line, verify_suite
from .risk import compare_dominance, estimate_risk, loss
from .transforms import Override, ScoreTransformSpec, make_instance, make_transform, score

__version__ = "0.1.0"

__all__ = [
    "ActiveState",
    "CalibrationResult",
    "CovarianceModel",
    "Override",
    "ScoreTransformSpec",
    "StageRecord",
    "StepDownConfig",
    "ThresholdProfile",
    "Trajectory",
    "build_model",
    "calibrate_first_threshold",
    "check_interval",
    "check_rejection_path",
    "check_shift_invariance",
    "compare_dominance",
    "conditional_residual",
    "conditional_variance",
    "downdate_precision",
    "estimate_fwer",
    "estimate_risk",
    "loss",
    "make_config",
    "make_instance",
    "make_transform",
    "residuals_via_precision",
    "run_baseline",
    "run_batch",
    "run_mrd",
    "run_stepdown",
    "scan_line",
    "score",
    "select_index",
    "shift_direction",
    "standardize_observation",
    "verify_suite",
    "y_coordinates",
]
