"""Residual-based step-down procedures.

``run_stepdown`` executes the generalized procedure on one observation and
returns a full :class:`Trajectory`. ``run_mrd`` is a deliberately separate
implementation of the plain maximum-residual procedure (fresh regression
solves, no transform layer) used as a cross-check. ``run_batch`` evaluates
many observations at once by grouping rows that share an elimination
history; it is what the Monte Carlo and scanning code calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from . import gaussian as gs
from .errors import BadAlpha, BadDimension, BadParameter, BadThresholds, EmptyActiveSet
from .transforms import ScoreTransformSpec, make_transform

Scale = Literal["raw", "score"]
Action = Literal["reject", "stop"]


@dataclass(frozen=True)
class ThresholdProfile:
    """Stage cutoffs ``C_1 >= ... >= C_n``.

    ``raw`` profiles live on the |residual| scale and must be positive;
    ``score`` profiles follow a transform's range and may be negative.
    ``+inf`` entries are allowed and mean "never reject at this stage".
    """

    values: tuple[float, ...]
    scale: Scale = "raw"

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise BadThresholds("threshold profile must be a non-empty list")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise BadThresholds("thresholds must be finite or +inf")
        if np.any(v[1:] > v[:-1]):
            raise BadThresholds(f"thresholds must be non-increasing, got {v.tolist()}")
        if self.scale not in ("raw", "score"):
            raise BadThresholds(f"unknown threshold scale {self.scale!r}")
        if self.scale == "raw" and np.any(v <= 0):
            raise BadThresholds("raw-scale thresholds must be positive")
        object.__setattr__(self, "values", tuple(float(c) for c in v))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, t: int) -> float:
        return self.values[t]

    @classmethod
    def constant(cls, c: float, n: int, scale: Scale = "raw") -> "ThresholdProfile":
        return cls((float(c),) * n, scale)


def as_profile(C: ThresholdProfile | Sequence[float], scale: Scale = "raw") -> ThresholdProfile:
    return C if isinstance(C, ThresholdProfile) else ThresholdProfile(tuple(C), scale)


@dataclass(frozen=True, eq=False)
class StepDownConfig:
    model: gs.CovarianceModel
    transform: ScoreTransformSpec = field(default_factory=ScoreTransformSpec)
    thresholds: ThresholdProfile = None  # type: ignore[assignment]
    tie_rule: str = "lowest-index"

    def __post_init__(self) -> None:
        if self.thresholds is None:
            raise BadThresholds("a threshold profile is required")
        if not isinstance(self.thresholds, ThresholdProfile):
            object.__setattr__(self, "thresholds", as_profile(self.thresholds, "raw" if self.transform.is_identity else "score"))
        if len(self.thresholds) != self.model.n:
            raise BadDimension(f"{len(self.thresholds)} thresholds for {self.model.n} hypotheses")
        if self.tie_rule != "lowest-index":
            raise BadParameter("only the lowest-index tie rule is supported")
        for o in self.transform.overrides:
            if o.coordinate is not None and not 0 <= o.coordinate < self.model.n:
                raise BadDimension(f"override coordinate {o.coordinate} out of range")
            if o.stage is not None and o.stage > self.model.n:
                raise BadDimension(f"override stage {o.stage} exceeds {self.model.n}")


def make_config(sigma, transform=None, thresholds=(), scale: Scale | None = None) -> StepDownConfig:
    """Convenience constructor from plain arrays and descriptions."""
    model = sigma if isinstance(sigma, gs.CovarianceModel) else gs.build_model(sigma)
    spec = transform if isinstance(transform, ScoreTransformSpec) else make_transform(transform)
    if scale is None:
        scale = "raw" if spec.is_identity else "score"
    return StepDownConfig(model=model, transform=spec, thresholds=as_profile(thresholds, scale))


@dataclass(frozen=True)
class StageRecord:
    stage: int
    chosen: int
    residual: float
    score: float
    threshold: float
    action: Action


@dataclass(frozen=True)
class Trajectory:
    records: tuple[StageRecord, ...]
    n: int

    @property
    def rejected(self) -> tuple[int, ...]:
        return tuple(sorted(r.chosen for r in self.records if r.action == "reject"))

    @property
    def order(self) -> tuple[int, ...]:
        """Rejected coordinates in the order they were rejected."""
        return tuple(r.chosen for r in self.records if r.action == "reject")

    @property
    def decision(self) -> NDArray[np.bool_]:
        phi = np.zeros(self.n, dtype=bool)
        phi[list(self.rejected)] = True
        return phi

    @property
    def stop_stage(self) -> int | None:
        last = self.records[-1] if self.records else None
        return last.stage if last is not None and last.action == "stop" else None

    def reject_stage(self, k: int) -> int | None:
        for r in self.records:
            if r.action == "reject" and r.chosen == k:
                return r.stage
        return None

    def path(self) -> tuple[tuple[int, str], ...]:
        return tuple((r.chosen, r.action) for r in self.records)


def select_index(scores: Mapping[int, float], tie_rule: str = "lowest-index") -> int:
    if not scores:
        raise EmptyActiveSet("no active coordinates to choose from")
    best_j, best_s = None, -np.inf
    for j in sorted(scores):
        s = scores[j]
        if best_j is None or s > best_s:
            best_j, best_s = j, s
    return best_j


def _observation(model: gs.CovarianceModel, x: ArrayLike) -> NDArray:
    v = np.asarray(x, dtype=float)
    if v.shape != (model.n,):
        raise BadDimension(f"observation must have length {model.n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise BadParameter("observation has non-finite entries")
    return v


def run_stepdown(config: StepDownConfig, x: ArrayLike, validate: bool = False) -> Trajectory:
    """Run the generalized step-down procedure on one observation.

    With ``validate`` the downdated precision is checked against a fresh
    inversion at every stage.
    """
    model = config.model
    v = _observation(model, x)
    state = gs.initial_state(model)
    records: list[StageRecord] = []
    for t in range(1, model.n + 1):
        if validate:
            state.validate(model)
        resid = gs.residuals_via_precision(state, v)
        scores = {j: float(config.transform.instance(t, j, state.history)(abs(u))) for j, u in resid.items()}
        j = select_index(scores, config.tie_rule)
        c = config.thresholds[t - 1]
        if scores[j] > c:
            records.append(StageRecord(t, j, resid[j], scores[j], c, "reject"))
            if len(state.active) > 1:
                state = gs.downdate_precision(state, j)
        else:
            records.append(StageRecord(t, j, resid[j], scores[j], c, "stop"))
            break
    return Trajectory(tuple(records), model.n)


def run_mrd(model: gs.CovarianceModel, x: ArrayLike, C: ThresholdProfile | Sequence[float]) -> Trajectory:
    """Maximum-residual step-down, computed from the explicit regression formula."""
    C = as_profile(C, "raw")
    if C.scale != "raw":
        raise BadThresholds("run_mrd takes a raw-scale profile")
    if len(C) != model.n:
        raise BadDimension(f"{len(C)} thresholds for {model.n} hypotheses")
    v = _observation(model, x)
    history: list[int] = []
    records: list[StageRecord] = []
    for t in range(1, model.n + 1):
        best_j, best_u = -1, 0.0
        for j in range(model.n):
            if j in history:
                continue
            u = gs.conditional_residual(model, v, history, j)
            if best_j < 0 or abs(u) > abs(best_u):
                best_j, best_u = j, u
        if abs(best_u) > C[t - 1]:
            records.append(StageRecord(t, best_j, best_u, abs(best_u), C[t - 1], "reject"))
            history.append(best_j)
        else:
            records.append(StageRecord(t, best_j, best_u, abs(best_u), C[t - 1], "stop"))
            break
    return Trajectory(tuple(records), model.n)


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Outcome of many step-down runs.

    ``stop_stage`` is 0 for rows where every hypothesis was rejected;
    ``reject_stage[i, j]`` is 0 when coordinate j was accepted in row i;
    ``order[i, :]`` lists rejections in stage order, padded with -1.
    """

    decisions: NDArray[np.bool_]
    stop_stage: NDArray[np.int64]
    reject_stage: NDArray[np.int64]
    order: NDArray[np.int64]


def run_batch(config: StepDownConfig, X: ArrayLike) -> BatchResult:
    model = config.model
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n:
        raise BadDimension(f"expected an (m, {model.n}) array, got shape {X.shape}")
    m, n = X.shape
    decisions = np.zeros((m, n), dtype=bool)
    stop_stage = np.zeros(m, dtype=np.int64)
    reject_stage = np.zeros((m, n), dtype=np.int64)
    order = np.full((m, n), -1, dtype=np.int64)
    states = {(): gs.initial_state(model)}
    groups: dict[tuple[int, ...], NDArray] = {(): np.arange(m)} if m else {}
    spec = config.transform
    for t in range(1, n + 1):
        c = config.thresholds[t - 1]
        nxt: dict[tuple[int, ...], NDArray] = {}
        for hist, rows in groups.items():
            st = states[hist]
            U = gs.active_residuals(st.precision, X[np.ix_(rows, st.active)])
            A = np.abs(U)
            S = np.empty_like(A)
            for col, j in enumerate(st.active):
                S[:, col] = spec.instance(t, j, hist)(A[:, col])
            best = np.argmax(S, axis=1)
            top = S[np.arange(len(rows)), best]
            rej = top > c
            stop_stage[rows[~rej]] = t
            for col in np.unique(best[rej]):
                j = st.active[col]
                sub = rows[rej & (best == col)]
                decisions[sub, j] = True
                reject_stage[sub, j] = t
                order[sub, t - 1] = j
                if len(st.active) > 1:
                    h2 = hist + (j,)
                    if h2 not in states:
                        states[h2] = gs.downdate_precision(st, j)
                    nxt[h2] = sub
        groups = nxt
        if not groups:
            break
    return BatchResult(decisions, stop_stage, reject_stage, order)


# classical baselines on marginal two-sided p-values

BASELINES = ("bonferroni", "holm", "bh")


def _check_alpha(alpha: float) -> float:
    a = float(alpha)
    if not 0 < a < 1:
        raise BadAlpha(f"alpha must lie in (0, 1), got {alpha}")
    return a


def two_sided_pvalues(model: gs.CovarianceModel, X: ArrayLike) -> NDArray:
    z = np.abs(np.asarray(X, dtype=float)) / np.sqrt(model.scales)
    return 2.0 * stats.norm.sf(z)


def bonferroni(p: ArrayLike, alpha: float) -> NDArray[np.bool_]:
    p = np.asarray(p, dtype=float)
    return p <= _check_alpha(alpha) / p.shape[-1]


def holm(p: ArrayLike, alpha: float) -> NDArray[np.bool_]:
    alpha = _check_alpha(alpha)
    P = np.atleast_2d(np.asarray(p, dtype=float))
    n = P.shape[1]
    idx = np.argsort(P, axis=1, kind="stable")
    ps = np.take_along_axis(P, idx, axis=1)
    ok = np.cumprod(ps <= alpha / (n - np.arange(n)), axis=1).astype(bool)
    out = np.zeros_like(ok)
    np.put_along_axis(out, idx, ok, axis=1)
    return out if np.ndim(p) == 2 else out[0]


def benjamini_hochberg(p: ArrayLike, alpha: float) -> NDArray[np.bool_]:
    alpha = _check_alpha(alpha)
    P = np.atleast_2d(np.asarray(p, dtype=float))
    m, n = P.shape
    idx = np.argsort(P, axis=1, kind="stable")
    ps = np.take_along_axis(P, idx, axis=1)
    below = ps <= alpha * np.arange(1, n + 1) / n
    # number rejected = largest rank meeting its cutoff
    last = np.where(below.any(axis=1), n - np.argmax(below[:, ::-1], axis=1), 0)
    ok = np.arange(n) < last[:, None]
    out = np.zeros_like(ok)
    np.put_along_axis(out, idx, ok, axis=1)
    return out if np.ndim(p) == 2 else out[0]


_RULES: dict[str, Callable[[NDArray, float], NDArray]] = {
    "bonferroni": bonferroni,
    "holm": holm,
    "bh": benjamini_hochberg,
}


def run_baseline(kind: str, model: gs.CovarianceModel, x: ArrayLike, alpha: float) -> NDArray[np.bool_]:
    """Decision bits of a classical p-value rule; ``x`` may be one row or a batch."""
    if kind not in _RULES:
        raise BadParameter(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    _check_alpha(alpha)
    v = np.asarray(x, dtype=float)
    if v.shape[-1:] != (model.n,):
        raise BadDimension(f"observation must have length {model.n}")
    return _RULES[kind](two_sided_pvalues(model, v), alpha)


# batch procedure handles, X (m, n) -> decisions (m, n)

Procedure = Callable[[NDArray], NDArray]


def stepdown_procedure(config: StepDownConfig) -> Procedure:
    return lambda X: run_batch(config, X).decisions


def baseline_procedure(kind: str, model: gs.CovarianceModel, alpha: float) -> Procedure:
    if kind not in _RULES:
        raise BadParameter(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    _check_alpha(alpha)
    return lambda X: run_baseline(kind, model, X, alpha)


def constant_procedure(n: int, reject: bool) -> Procedure:
    return lambda X: np.full((len(X), n), reject, dtype=bool)
