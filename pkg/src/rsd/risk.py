"""Per-coordinate 0-1 risks and an empirical dominance screen."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import sampling
from .calibration import MIN_ESTIMATE_REPS, STREAM_RISK
from .engine import Procedure
from .errors import BadDimension, GridMismatch, TooFewReps
from .gaussian import CovarianceModel

Verdict = Literal["A_dominates", "B_dominates", "incomparable", "statistical_tie"]


def loss(decision: ArrayLike, theta: ArrayLike) -> NDArray[np.int8]:
    """0-1 loss per coordinate; ``decision`` may be one vector or a batch of rows."""
    phi = np.asarray(decision).astype(bool)
    th = np.asarray(theta, dtype=float)
    if phi.shape[-1:] != th.shape:
        raise BadDimension(f"decision shape {phi.shape} does not match theta length {th.shape}")
    return np.where(th == 0, phi, ~phi).astype(np.int8)


@dataclass(frozen=True, eq=False)
class RiskEstimate:
    theta: NDArray[np.float64]
    risk: NDArray[np.float64]
    stderr: NDArray[np.float64]
    reps: int
    seed: int


def estimate_risk(
    procedure: Procedure,
    model: CovarianceModel,
    theta: ArrayLike,
    reps: int,
    seed: int,
    grid_index: int = 0,
    workers: int | None = None,
) -> RiskEstimate:
    """Mean loss over X ~ N(theta, sigma).

    Two procedures evaluated with the same (seed, grid_index) see the same
    draws, so their differences are paired.
    """
    if reps < MIN_ESTIMATE_REPS:
        raise TooFewReps(f"need at least {MIN_ESTIMATE_REPS} replicates, got {reps}")
    th = np.asarray(theta, dtype=float)
    if th.shape != (model.n,):
        raise BadDimension(f"theta must have length {model.n}")

    def block(X: NDArray) -> NDArray:
        return loss(procedure(X), th).sum(axis=0, dtype=np.int64)

    totals = np.sum(sampling.map_blocks(model, th, reps, seed, (STREAM_RISK, grid_index), block, workers), axis=0)
    r = totals / reps
    return RiskEstimate(th, r, np.sqrt(r * (1.0 - r) / reps), reps, seed)


def demo_grid(n: int, levels: Sequence[float] = (0.0, 1.0, 3.0)) -> list[NDArray[np.float64]]:
    """Every theta with entries from ``levels``; only offered for n <= 4."""
    if not 1 <= n <= 4:
        raise GridMismatch(f"the demo grid is limited to n <= 4, got n={n}; pass an explicit grid")
    return [np.array(t, dtype=float) for t in itertools.product(levels, repeat=n)]


def sweep_risk(
    procedure: Procedure,
    model: CovarianceModel,
    grid: Sequence[ArrayLike],
    reps: int,
    seed: int,
    workers: int | None = None,
) -> list[RiskEstimate]:
    return [estimate_risk(procedure, model, th, reps, seed, i, workers) for i, th in enumerate(grid)]


@dataclass(frozen=True, eq=False)
class DominanceResult:
    verdict: Verdict
    margins: NDArray[np.float64]  # risk_A - risk_B, shape (grid, n)
    buffer: NDArray[np.float64]  # 2 * pooled stderr


def compare_dominance(risk_a: Sequence[RiskEstimate], risk_b: Sequence[RiskEstimate]) -> DominanceResult:
    """Screen for empirical dominance with a two-standard-error buffer.

    A verdict of dominance is a simulation finding only; absence of one
    means no empirical improvement was found.
    """
    if len(risk_a) != len(risk_b) or not risk_a:
        raise GridMismatch("risk sets must cover the same non-empty theta grid")
    for a, b in zip(risk_a, risk_b):
        if a.theta.shape != b.theta.shape or not np.array_equal(a.theta, b.theta):
            raise GridMismatch(f"theta mismatch: {a.theta.tolist()} vs {b.theta.tolist()}")
    ra = np.array([e.risk for e in risk_a])
    rb = np.array([e.risk for e in risk_b])
    se = np.sqrt(np.array([e.stderr for e in risk_a]) ** 2 + np.array([e.stderr for e in risk_b]) ** 2)
    d = ra - rb
    buf = 2.0 * se
    a_better = d < -buf
    b_better = d > buf
    if not a_better.any() and not b_better.any():
        verdict: Verdict = "statistical_tie"
    elif a_better.any() and not b_better.any():
        verdict = "A_dominates"
    elif b_better.any() and not a_better.any():
        verdict = "B_dominates"
    else:
        verdict = "incomparable"
    return DominanceResult(verdict, d, buf)


def total_errors(decision: ArrayLike, theta: ArrayLike) -> tuple[int, int]:
    """(type I, type II) error counts of one decision vector."""
    phi = np.asarray(decision).astype(bool)
    th = np.asarray(theta, dtype=float)
    return int(np.sum(phi & (th == 0))), int(np.sum(~phi & (th != 0)))

