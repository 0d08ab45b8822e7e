"""Covariance model, conditional residuals and active-set precision machinery.

Coordinates are 0-based throughout the Python API. A *history* is the
ordered tuple of coordinates eliminated (rejected) so far; the *active set*
is everything else.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import (
    BadDimension,
    BadIndex,
    BadParameter,
    ConditioningWarning,
    InconsistentState,
    IndexInHistory,
    IndexNotActive,
    LastCoordinate,
    NotPositiveDefinite,
    NotSymmetric,
)

SYMMETRY_RTOL = 1e-12
PIVOT_RATIO_WARN = 1e12
STATE_ATOL = 1e-8


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """A validated positive definite covariance with cached factorization.

    ``scales`` holds the diagonal of ``sigma`` (the variances, not the
    standard deviations); ``corr`` is the matching correlation matrix.
    """

    n: int
    sigma: NDArray[np.float64]
    corr: NDArray[np.float64]
    scales: NDArray[np.float64]
    chol: NDArray[np.float64]
    precision: NDArray[np.float64]

    def standardized(self) -> "CovarianceModel":
        return build_model(self.corr)


def build_model(sigma: ArrayLike) -> CovarianceModel:
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
        raise BadDimension(f"covariance must be a non-empty square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise BadParameter("covariance has non-finite entries")
    n = s.shape[0]
    diag = np.diag(s)
    scale = float(np.max(np.abs(diag))) if n else 1.0
    asym = float(np.max(np.abs(s - s.T)))
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"max asymmetry {asym:.3g} exceeds {SYMMETRY_RTOL:g} x max variance")
    s = 0.5 * (s + s.T)
    try:
        L = linalg.cholesky(s, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky factorization failed") from exc
    pivots = np.diag(L) ** 2
    if not np.all(pivots > 0):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization")
    if pivots.max() / pivots.min() > PIVOT_RATIO_WARN:
        warnings.warn(
            f"pivot ratio {pivots.max() / pivots.min():.3g} exceeds {PIVOT_RATIO_WARN:g}",
            ConditioningWarning,
            stacklevel=2,
        )
    P = linalg.cho_solve((L, True), np.eye(n))
    P = 0.5 * (P + P.T)
    sd = np.sqrt(diag)
    corr = s / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return CovarianceModel(
        n=n,
        sigma=_frozen(s),
        corr=_frozen(corr),
        scales=_frozen(diag),
        chol=_frozen(L),
        precision=_frozen(P),
    )


def random_correlation(rng: np.random.Generator, n: int, ridge: float = 0.1) -> NDArray:
    """Draw ``A A^T + ridge I`` with standard normal ``A`` and rescale to unit diagonal."""
    A = rng.standard_normal((n, n))
    S = A @ A.T + ridge * np.eye(n)
    d = np.sqrt(np.diag(S))
    C = S / np.outer(d, d)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


def _as_vector(model: CovarianceModel, x: ArrayLike) -> NDArray:
    v = np.asarray(x, dtype=float)
    if v.shape[-1:] != (model.n,):
        raise BadDimension(f"expected trailing dimension {model.n}, got shape {v.shape}")
    return v


def standardize_observation(model: CovarianceModel, x: ArrayLike) -> NDArray:
    return _as_vector(model, x) / np.sqrt(model.scales)


def _check_history(model: CovarianceModel, history: Sequence[int], j: int | None = None) -> tuple[int, ...]:
    hist = tuple(int(i) for i in history)
    for i in hist:
        if not 0 <= i < model.n:
            raise BadIndex(f"history entry {i} outside 0..{model.n - 1}")
    if len(set(hist)) != len(hist):
        raise BadIndex(f"history {hist} has repeated entries")
    if len(hist) > model.n - 1:
        raise BadIndex("history must leave at least one coordinate")
    if j is not None:
        if not 0 <= j < model.n:
            raise BadIndex(f"coordinate {j} outside 0..{model.n - 1}")
        if j in hist:
            raise IndexInHistory(f"coordinate {j} already eliminated")
    return hist


def _conditioning_set(model: CovarianceModel, hist: tuple[int, ...], j: int) -> list[int]:
    removed = set(hist)
    return [i for i in range(model.n) if i != j and i not in removed]


def conditional_variance(model: CovarianceModel, history: Sequence[int], j: int) -> float:
    """Schur complement ``sigma_jj - s^T S^{-1} s`` over the coordinates outside history and j."""
    hist = _check_history(model, history, j)
    others = _conditioning_set(model, hist, j)
    sjj = model.sigma[j, j]
    if not others:
        return float(sjj)
    s = model.sigma[others, j]
    S = model.sigma[np.ix_(others, others)]
    return float(sjj - s @ linalg.solve(S, s, assume_a="pos"))


def conditional_residual(model: CovarianceModel, x: ArrayLike, history: Sequence[int], j: int) -> float:
    """Standardized residual of ``x_j`` after regressing on the other active coordinates.

    Computed from the explicit regression formula with a fresh solve; this is
    the reference route that :func:`residuals_via_precision` must reproduce.
    """
    v = _as_vector(model, x)
    if v.ndim != 1:
        raise BadDimension("conditional_residual takes a single observation")
    if not np.all(np.isfinite(v)):
        raise BadParameter("observation has non-finite entries")
    hist = _check_history(model, history, j)
    others = _conditioning_set(model, hist, j)
    if not others:
        return float(v[j] / np.sqrt(model.sigma[j, j]))
    s = model.sigma[others, j]
    S = model.sigma[np.ix_(others, others)]
    beta = linalg.solve(S, s, assume_a="pos")
    var = model.sigma[j, j] - s @ beta
    return float((v[j] - beta @ v[others]) / np.sqrt(var))


@dataclass(frozen=True, eq=False)
class ActiveState:
    """Surviving coordinates and the inverse of their covariance block."""

    active: tuple[int, ...]
    precision: NDArray[np.float64]
    history: tuple[int, ...] = ()
    variances: NDArray[np.float64] | None = None  # full diag of sigma, for the exact 1x1 inverse

    def position(self, k: int) -> int:
        try:
            return self.active.index(k)
        except ValueError:
            raise IndexNotActive(f"coordinate {k} is not active") from None

    def validate(self, model: CovarianceModel, atol: float = STATE_ATOL) -> None:
        a = list(self.active)
        if set(a) & set(self.history) or len(a) + len(self.history) != model.n:
            raise InconsistentState("active set and history do not partition the coordinates")
        err = np.max(np.abs(self.precision @ model.sigma[np.ix_(a, a)] - np.eye(len(a))))
        if err > atol:
            raise InconsistentState(f"precision check failed, max error {err:.3g}")


def initial_state(model: CovarianceModel) -> ActiveState:
    return ActiveState(active=tuple(range(model.n)), precision=model.precision, history=(), variances=model.scales)


def fresh_state(model: CovarianceModel, history: Sequence[int]) -> ActiveState:
    """Active state built by direct inversion of the surviving block (no downdates)."""
    hist = _check_history(model, history)
    active = tuple(i for i in range(model.n) if i not in set(hist))
    block = model.sigma[np.ix_(active, active)]
    P = linalg.cho_solve(linalg.cho_factor(block, lower=True), np.eye(len(active)))
    return ActiveState(active=active, precision=_frozen(0.5 * (P + P.T)), history=hist, variances=model.scales)


def active_residuals(precision: NDArray, x_active: NDArray) -> NDArray:
    """Rows of ``x_active @ P`` divided by ``sqrt(diag P)``; accepts (m, a) or (a,)."""
    X = np.atleast_2d(x_active)
    U = (X @ precision) / np.sqrt(np.diag(precision))
    return U if np.ndim(x_active) == 2 else U[0]


def residuals_via_precision(state: ActiveState, x: ArrayLike) -> dict[int, float]:
    v = np.asarray(x, dtype=float)
    a = len(state.active)
    if state.precision.shape != (a, a):
        raise InconsistentState("precision shape does not match active set")
    if v.ndim != 1 or (a and max(state.active) >= v.shape[0]):
        raise InconsistentState(f"observation of shape {v.shape} does not cover active set")
    U = active_residuals(state.precision, v[list(state.active)])
    return {j: float(u) for j, u in zip(state.active, U)}


def downdate_precision(state: ActiveState, k: int) -> ActiveState:
    """Remove coordinate ``k`` from the active set with a rank-one Schur downdate."""
    pos = state.position(k)
    if len(state.active) < 2:
        raise LastCoordinate("cannot eliminate the last active coordinate")
    P = state.precision
    keep = [i for i in range(len(state.active)) if i != pos]
    p = P[keep, pos]
    active = tuple(state.active[i] for i in keep)
    if len(active) == 1 and state.variances is not None:
        Pn = np.array([[1.0 / state.variances[active[0]]]])
    else:
        Pn = P[np.ix_(keep, keep)] - np.outer(p, p) / P[pos, pos]
    return ActiveState(active=active, precision=_frozen(Pn), history=state.history + (k,), variances=state.variances)


@dataclass(frozen=True, eq=False)
class ShiftDirection:
    """Column ``coordinate`` of sigma: moving along it changes only that y-coordinate."""

    coordinate: int
    g: NDArray[np.float64]


def y_coordinates(model: CovarianceModel, x: ArrayLike) -> NDArray:
    v = _as_vector(model, x)
    return linalg.cho_solve((model.chol, True), v.T).T


def shift_direction(model: CovarianceModel, k: int) -> ShiftDirection:
    if not 0 <= k < model.n:
        raise BadIndex(f"coordinate {k} outside 0..{model.n - 1}")
    g = model.sigma[:, k].copy()
    e = np.zeros(model.n)
    e[k] = 1.0
    err = np.max(np.abs(y_coordinates(model, g) - e))
    if err > STATE_ATOL:
        warnings.warn(f"shift direction check off by {err:.3g}", ConditioningWarning, stacklevel=2)
    return ShiftDirection(coordinate=k, g=_frozen(g))
