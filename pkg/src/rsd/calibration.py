"""Monte Carlo threshold calibration under the global null."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import sampling
from .engine import StepDownConfig, ThresholdProfile, run_batch
from .errors import BadAlpha, BadDimension, BadThresholds, TooFewReps
from .gaussian import CovarianceModel, active_residuals
from .transforms import ScoreTransformSpec

MIN_CALIBRATION_REPS = 10_000
MIN_ESTIMATE_REPS = 1_000

STREAM_CALIBRATE = 0
STREAM_FWER = 1
STREAM_RISK = 2


@dataclass(frozen=True)
class CalibrationResult:
    thresholds: ThresholdProfile
    achieved_fwer: float
    mc_stderr: float
    reps: int
    seed: int


def _check(alpha: float, reps: int, floor: int) -> None:
    if not 0 < alpha < 1:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    if reps < floor:
        raise TooFewReps(f"need at least {floor} replicates, got {reps}")


def first_stage_max(model: CovarianceModel, transform: ScoreTransformSpec, X: NDArray) -> NDArray:
    """Largest stage-1 score of every row of ``X``."""
    U = np.abs(active_residuals(model.precision, X))
    S = np.column_stack([transform.instance(1, j, ())(U[:, j]) for j in range(model.n)])
    return S.max(axis=1)


def quantile_index(alpha: float, reps: int) -> int:
    """0-based position of the ceil((1 - alpha) * reps)-th order statistic."""
    k = math.ceil(round((1.0 - alpha) * reps, 9))
    return min(max(k, 1), reps) - 1


def calibrate_first_threshold(
    model: CovarianceModel,
    transform: ScoreTransformSpec,
    alpha: float,
    reps: int,
    seed: int,
    profile: Literal["constant", "holm-like"] = "constant",
    shape: Sequence[float] | None = None,
    workers: int | None = None,
) -> CalibrationResult:
    """Pick ``C_1`` so that P(max stage-1 score > C_1) = alpha when theta = 0.

    Under the global null a rejection happens iff stage 1 rejects, so only
    ``C_1`` is identified; later stages follow ``profile``. ``holm-like``
    rescales a positive non-increasing ``shape`` so its first entry is ``C_1``.
    """
    _check(alpha, reps, MIN_CALIBRATION_REPS)
    zero = np.zeros(model.n)
    maxima = np.concatenate(
        sampling.map_blocks(
            model, zero, reps, seed, (STREAM_CALIBRATE,),
            lambda X: first_stage_max(model, transform, X), workers,
        )
    )
    c1 = float(np.sort(maxima)[quantile_index(alpha, reps)])
    scale = "raw" if transform.is_identity else "score"
    if profile == "constant":
        values = (c1,) * model.n
    elif profile == "holm-like":
        if shape is None or len(shape) != model.n:
            raise BadDimension(f"holm-like profile needs a shape of length {model.n}")
        s = np.asarray(shape, dtype=float)
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise BadThresholds("shape must be positive and non-increasing")
        if c1 <= 0:
            raise BadThresholds("holm-like scaling needs a positive first threshold")
        values = tuple(float(v) for v in c1 * s / s[0])
    else:
        raise BadThresholds(f"unknown profile rule {profile!r}")
    thresholds = ThresholdProfile(values, scale)
    config = StepDownConfig(model=model, transform=transform, thresholds=thresholds)
    rate, se = estimate_fwer(config, zero, reps, seed, workers=workers)
    return CalibrationResult(thresholds, rate, se, reps, seed)


def rejection_indicators(
    config: StepDownConfig,
    theta: ArrayLike,
    reps: int,
    seed: int,
    workers: int | None = None,
    stream: int = STREAM_FWER,
) -> NDArray[np.bool_]:
    """Per-replicate flag: was any coordinate with theta_j == 0 rejected."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (config.model.n,):
        raise BadDimension(f"theta must have length {config.model.n}")
    null = theta == 0

    def block(X: NDArray) -> NDArray:
        return run_batch(config, X).decisions[:, null].any(axis=1)

    return np.concatenate(sampling.map_blocks(config.model, theta, reps, seed, (stream,), block, workers))


def estimate_fwer(
    config: StepDownConfig,
    theta: ArrayLike,
    reps: int,
    seed: int,
    workers: int | None = None,
) -> tuple[float, float]:
    if reps < MIN_ESTIMATE_REPS:
        raise TooFewReps(f"need at least {MIN_ESTIMATE_REPS} replicates, got {reps}")
    hits = rejection_indicators(config, theta, reps, seed, workers)
    p = float(np.count_nonzero(hits)) / reps
    return p, math.sqrt(p * (1.0 - p) / reps)
