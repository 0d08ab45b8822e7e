"""Line scans along admissibility directions and the structural checks on them.

For coordinate k, moving x along column k of sigma changes only the k-th
coordinate of ``sigma^{-1} x``. The checks here confirm numerically that
the induced test of coordinate k accepts on an interval along every such
line, and that the residual and stage structure behaves as the shift and
index-invariance arguments require.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import gaussian as gs
from .engine import (
    Procedure,
    StepDownConfig,
    ThresholdProfile,
    baseline_procedure,
    run_batch,
    run_stepdown,
)
from .errors import BadGrid, BadIndex, NotAnAcceptRejectPair
from .transforms import Override, ScoreTransformSpec, TransformInstance, make_instance

DEFAULT_GRID = (-20.0, 20.0, 2001)
REFINE_FACTOR = 10
SHIFT_TOL = 1e-8
Y_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LineScanProfile:
    """Decisions for coordinate k at ``base + r * g_k`` over ``grid``.

    ``stop_stages[i]`` is the stage that rejected k, or the stop stage when
    k was accepted (0 for procedures without stages). ``orders`` holds the
    rejection sequence of each point, padded with -1.
    """

    coordinate: int
    base: NDArray[np.float64]
    g: NDArray[np.float64]
    grid: NDArray[np.float64]
    decisions: NDArray[np.bool_]
    stop_stages: NDArray[np.int64]
    orders: NDArray[np.int64] | None = None
    channel: str = "primary"

    def point(self, i: int) -> NDArray:
        return self.base + self.grid[i] * self.g


@dataclass(frozen=True)
class IntervalReport:
    passed: bool
    violation_positions: tuple[int, ...]


def make_grid(lo: float, hi: float, points: int) -> NDArray:
    if points < 2 or not np.isfinite(lo) or not np.isfinite(hi) or not lo < hi:
        raise BadGrid(f"grid needs lo < hi and at least 2 points, got {lo}:{hi}:{points}")
    return np.linspace(lo, hi, int(points))


def _evaluate(target: StepDownConfig | Procedure, k: int, X: NDArray) -> tuple[NDArray, NDArray, NDArray | None]:
    if isinstance(target, StepDownConfig):
        res = run_batch(target, X)
        stages = np.where(res.decisions[:, k], res.reject_stage[:, k], res.stop_stage)
        return res.decisions[:, k], stages, res.order
    dec = np.asarray(target(X), dtype=bool)
    return dec[:, k], np.zeros(len(X), dtype=np.int64), None


def scan_line(
    target: StepDownConfig | Procedure,
    x: ArrayLike,
    k: int,
    grid: ArrayLike,
    model: gs.CovarianceModel | None = None,
    refine: int = 0,
    channel: str | None = None,
) -> LineScanProfile:
    """Evaluate coordinate k's decision along ``x + r g_k``.

    ``target`` is a step-down config or a batch procedure (then ``model``
    is required). With ``refine > 1`` every decision change between grid
    neighbours is resampled at ``refine`` times the local density.
    """
    if isinstance(target, StepDownConfig):
        model = target.model
    elif model is None:
        raise ValueError("a model is required when scanning a bare procedure")
    r = np.asarray(grid, dtype=float)
    if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) <= 0) or not np.all(np.isfinite(r)):
        raise BadGrid("grid must be a finite, strictly increasing list of at least 2 points")
    if not 0 <= k < model.n:
        raise BadIndex(f"coordinate {k} outside 0..{model.n - 1}")
    base = np.asarray(x, dtype=float)
    g = gs.shift_direction(model, k).g
    dec, stages, orders = _evaluate(target, k, base + r[:, None] * g)
    if refine > 1:
        edges = np.flatnonzero(dec[1:] != dec[:-1])
        if edges.size:
            extra = np.concatenate([np.linspace(r[i], r[i + 1], refine + 1)[1:-1] for i in edges])
            d2, s2, o2 = _evaluate(target, k, base + extra[:, None] * g)
            idx = np.argsort(np.concatenate([r, extra]), kind="stable")
            r = np.concatenate([r, extra])[idx]
            dec = np.concatenate([dec, d2])[idx]
            stages = np.concatenate([stages, s2])[idx]
            orders = None if orders is None else np.concatenate([orders, o2])[idx]
    if channel is None:
        channel = "primary" if isinstance(target, StepDownConfig) else "demo"
    return LineScanProfile(k, base, g, r, dec, stages, orders, channel)


def check_interval(profile: LineScanProfile) -> IntervalReport:
    """Pass iff the accepted grid points form one contiguous run.

    Violations are the rejecting points that sit between two accepting ones.
    """
    acc = np.flatnonzero(~profile.decisions)
    if acc.size == 0:
        return IntervalReport(True, ())
    inside = np.arange(acc[0], acc[-1] + 1)
    bad = inside[profile.decisions[inside]]
    return IntervalReport(bad.size == 0, tuple(int(i) for i in bad))


def _escalates(seq: NDArray) -> bool:
    acc = np.flatnonzero(~seq)
    if acc.size == 0:
        return True
    after = seq[acc[0]:]
    rej = np.flatnonzero(after)
    return rej.size == 0 or bool(after[rej[0]:].all())


def check_escalation(profile: LineScanProfile) -> bool:
    """Once k is rejected beyond an accepting point it stays rejected further out, on both sides."""
    d = profile.decisions
    return _escalates(d) and _escalates(d[::-1])


def boundary_pairs(profile: LineScanProfile) -> list[tuple[int, int]]:
    """(accept index, reject index) for each adjacent decision change."""
    d = profile.decisions
    out = []
    for i in np.flatnonzero(d[1:] != d[:-1]):
        out.append((int(i), int(i) + 1) if not d[i] else (int(i) + 1, int(i)))
    return out


def check_shift_invariance(
    model: gs.CovarianceModel,
    x: ArrayLike,
    history: Sequence[int],
    k: int,
    r_samples: Iterable[float],
) -> tuple[float, float]:
    """(max on-coordinate affine error, max off-coordinate drift) along ``x + r g_k``.

    Residuals come from the explicit regression formula, not the precision
    fast path.
    """
    x = np.asarray(x, dtype=float)
    hist = tuple(history)
    g = gs.shift_direction(model, k).g
    slope = np.sqrt(gs.conditional_variance(model, hist, k))
    others = [j for j in range(model.n) if j != k and j not in hist]
    u0 = gs.conditional_residual(model, x, hist, k)
    base_off = {j: gs.conditional_residual(model, x, hist, j) for j in others}
    on_err = off_err = 0.0
    for r in r_samples:
        xr = x + r * g
        on_err = max(on_err, abs(gs.conditional_residual(model, xr, hist, k) - u0 - r * slope))
        for j in others:
            off_err = max(off_err, abs(gs.conditional_residual(model, xr, hist, j) - base_off[j]))
    return on_err, off_err


@dataclass(frozen=True)
class PathReport:
    t: int
    t0: int
    prefix_match: bool
    stop_ok: bool

    @property
    def passed(self) -> bool:
        return self.prefix_match and self.stop_ok


def check_rejection_path(config: StepDownConfig, x_accept: ArrayLike, x_reject: ArrayLike, k: int) -> PathReport:
    """Compare the run that accepts k with the run that rejects it further along g_k.

    ``t`` is the stop stage at the accepting point, ``t0`` the stage at
    which k is rejected at the other point; rejection must come no later
    than ``t`` and the rejection sequence before ``t0`` must be shared.
    """
    model = config.model
    xa = np.asarray(x_accept, dtype=float)
    xr = np.asarray(x_reject, dtype=float)
    dy = gs.y_coordinates(model, xr) - gs.y_coordinates(model, xa)
    off = np.delete(dy, k)
    if off.size and np.max(np.abs(off)) > 1e-6 * (1.0 + abs(dy[k])):
        raise NotAnAcceptRejectPair("points do not lie on a common line along column k of sigma")
    ta = run_stepdown(config, xa)
    tr = run_stepdown(config, xr)
    if ta.decision[k] or not tr.decision[k]:
        raise NotAnAcceptRejectPair(f"coordinate {k} is not accepted at the first point and rejected at the second")
    t = ta.stop_stage
    t0 = tr.reject_stage(k)
    assert t is not None and t0 is not None
    chosen_a = [rec.chosen for rec in ta.records]
    chosen_r = [rec.chosen for rec in tr.records]
    prefix = len(chosen_a) >= t0 - 1 and chosen_a[: t0 - 1] == chosen_r[: t0 - 1]
    return PathReport(t=t, t0=t0, prefix_match=bool(prefix), stop_ok=t0 <= t)


# random instance generation for the verification suite

def _pick(rng: np.random.Generator) -> TransformInstance:
    kind = str(rng.choice(["identity", "power", "affine", "logshift", "bayes_factor", "table"]))
    if kind == "identity":
        return make_instance("identity")
    if kind == "power":
        return make_instance("power", p=float(rng.uniform(0.5, 2.5)))
    if kind == "affine":
        return make_instance("affine", a=float(rng.uniform(0.5, 2.0)), b=float(rng.uniform(-0.5, 0.5)))
    if kind == "logshift":
        return make_instance("logshift", c=float(rng.uniform(0.5, 3.0)))
    if kind == "bayes_factor":
        return make_instance("bayes_factor", tau=float(rng.uniform(0.5, 3.0)))
    xs = np.concatenate([[0.0], np.sort(rng.uniform(0.2, 8.0, 5)), [10.0]])
    ys = np.cumsum(rng.uniform(0.1, 1.5, xs.size))
    return make_instance("table", x=xs.tolist(), y=ys.tolist())


class _HashRule:
    """History-dependent selector: a fixed pseudo-random choice from a pool per (t, j, history)."""

    def __init__(self, pool: Sequence[TransformInstance], salt: int):
        self.pool = tuple(pool)
        self.salt = salt

    def __call__(self, t: int, j: int, history: tuple[int, ...]) -> TransformInstance:
        h = zlib.crc32(repr((self.salt, t, j, history)).encode())
        return self.pool[h % len(self.pool)]


def random_transform(rng: np.random.Generator, n: int) -> tuple[ScoreTransformSpec, str]:
    """One draw from the transform registry; returns a ScoreTransformSpec and its family label."""
    family = str(rng.choice(["identity", "global", "per_coordinate", "per_stage", "history"]))
    if family == "identity":
        return ScoreTransformSpec(), family
    default = _pick(rng)
    if family == "global":
        return ScoreTransformSpec(default=default), family
    if family == "per_coordinate":
        ov = tuple(Override(_pick(rng), coordinate=j) for j in range(n))
        return ScoreTransformSpec(default=default, overrides=ov), family
    if family == "per_stage":
        ov = tuple(Override(_pick(rng), stage=t) for t in range(1, n + 1))
        ov += tuple(Override(_pick(rng), stage=1, coordinate=j) for j in range(n) if rng.random() < 0.5)
        return ScoreTransformSpec(default=default, overrides=ov), family
    pool = [_pick(rng) for _ in range(4)]
    return ScoreTransformSpec(default=default, rule=_HashRule(pool, int(rng.integers(1 << 30)))), family


def random_instance(rng: np.random.Generator, n: int) -> tuple[StepDownConfig, NDArray, str]:
    model = gs.build_model(gs.random_correlation(rng, n))
    spec, family = random_transform(rng, n)
    raw = np.sort(rng.uniform(0.5, 3.5, n))[::-1]
    if spec.is_identity:
        thresholds = ThresholdProfile(tuple(raw), "raw")
    else:
        # map a raw profile through the default transform to land in a comparable score range
        thresholds = ThresholdProfile(tuple(np.asarray(spec.default(raw), dtype=float)), "score")
    theta = np.where(rng.random(n) < 0.5, 0.0, rng.normal(0.0, 3.0, n))
    x = theta + model.chol @ rng.standard_normal(n)
    return StepDownConfig(model=model, transform=spec, thresholds=thresholds), x, family


def _transcript(config: StepDownConfig, x: NDArray, **extra: Any) -> dict[str, Any]:
    rule = config.transform.rule
    return {
        "sigma": config.model.sigma.tolist(),
        "x": x.tolist(),
        "transform": config.transform.describe(one_based=True)
        | ({"rule_pool": [p.describe() for p in rule.pool], "rule_salt": rule.salt} if isinstance(rule, _HashRule) else {}),
        "thresholds": list(config.thresholds.values),
        **extra,
    }


@dataclass
class SuiteReport:
    instances: int = 0
    seed: int = 0
    shift_checks: int = 0
    shift_max_on_error: float = 0.0
    shift_max_off_drift: float = 0.0
    slope_violations: int = 0
    scans: int = 0
    scans_with_boundary: int = 0
    interval_violations: int = 0
    escalation_violations: int = 0
    y_max_error: float = 0.0
    path_pairs: int = 0
    stop_failures: int = 0
    prefix_failures: int = 0
    prefix_nontrivial: int = 0
    demo_scans: int = 0
    demo_interval_violations: int = 0
    families: dict[str, int] = field(default_factory=dict)
    failures: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            self.shift_max_on_error <= SHIFT_TOL
            and self.shift_max_off_drift <= SHIFT_TOL
            and self.slope_violations == 0
            and self.interval_violations == 0
            and self.escalation_violations == 0
            and self.y_max_error <= Y_TOL
            and self.stop_failures == 0
            and self.prefix_failures == 0
        )


def verify_shift(report: SuiteReport, rng: np.random.Generator, n_range: tuple[int, int] = (2, 10), r_count: int = 5) -> None:
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    model = gs.build_model(gs.random_correlation(rng, n))
    x = model.chol @ rng.standard_normal(n) + rng.normal(0, 2, n)
    k = int(rng.integers(n))
    rest = [j for j in range(n) if j != k]
    hist = tuple(int(j) for j in rng.permutation(rest)[: int(rng.integers(0, n))])
    rs = np.sort(rng.uniform(-10, 10, r_count))
    on, off = check_shift_invariance(model, x, hist, k, rs)
    g = model.sigma[:, k]
    u = [gs.conditional_residual(model, x + r * g, hist, k) for r in rs]
    slope_bad = gs.conditional_variance(model, hist, k) <= 0 or bool(np.any(np.diff(u) <= 0))
    report.shift_checks += 1
    report.shift_max_on_error = max(report.shift_max_on_error, on)
    report.shift_max_off_drift = max(report.shift_max_off_drift, off)
    if on > SHIFT_TOL or off > SHIFT_TOL or slope_bad:
        report.slope_violations += int(slope_bad)
        report.failures.append(
            {"suite": "shift", "sigma": model.sigma.tolist(), "x": x.tolist(), "history": [h + 1 for h in hist],
             "coordinate": k + 1, "r": rs.tolist(), "on_error": on, "off_drift": off, "slope_violation": slope_bad}
        )


def verify_scans(
    report: SuiteReport,
    config: StepDownConfig,
    x: NDArray,
    grid: NDArray,
    refine: int,
    do_interval: bool,
    do_path: bool,
    demo_baselines: Sequence[str] = (),
) -> list[LineScanProfile]:
    profiles = []
    model = config.model
    for k in range(model.n):
        prof = scan_line(config, x, k, grid, refine=refine)
        profiles.append(prof)
        report.scans += 1
        if prof.decisions.any() and not prof.decisions.all():
            report.scans_with_boundary += 1
        if do_interval:
            rep = check_interval(prof)
            esc = check_escalation(prof)
            Y = gs.y_coordinates(model, x + prof.grid[:, None] * prof.g) - gs.y_coordinates(model, x)
            expect = np.zeros_like(Y)
            expect[:, k] = prof.grid
            yerr = float(np.max(np.abs(Y - expect)))
            report.y_max_error = max(report.y_max_error, yerr)
            if not rep.passed:
                report.interval_violations += 1
            if not esc:
                report.escalation_violations += 1
            if not rep.passed or not esc or yerr > Y_TOL:
                report.failures.append(
                    _transcript(config, x, suite="interval", coordinate=k + 1,
                                r=[float(prof.grid[i]) for i in rep.violation_positions], y_error=yerr)
                )
        if do_path:
            for ia, ir in boundary_pairs(prof):
                pr = check_rejection_path(config, prof.point(ia), prof.point(ir), k)
                report.path_pairs += 1
                report.prefix_nontrivial += int(pr.t0 > 1)
                report.stop_failures += int(not pr.stop_ok)
                report.prefix_failures += int(not pr.prefix_match)
                if not pr.passed:
                    report.failures.append(
                        _transcript(config, x, suite="path", coordinate=k + 1, r_accept=float(prof.grid[ia]),
                                    r_reject=float(prof.grid[ir]), t=pr.t, t0=pr.t0)
                    )
        for kind in demo_baselines:
            demo = scan_line(baseline_procedure(kind, model, 0.05), x, k, grid, model=model, refine=refine)
            report.demo_scans += 1
            report.demo_interval_violations += int(not check_interval(demo).passed)
    return profiles


def verify_suite(
    instances: int,
    seed: int,
    suites: Sequence[str] = ("shift", "interval", "path"),
    n_range: tuple[int, int] = (2, 8),
    shift_n_range: tuple[int, int] = (2, 10),
    grid: ArrayLike | None = None,
    refine: int = REFINE_FACTOR,
    demo_baselines: Sequence[str] = (),
) -> SuiteReport:
    """Run the structural checks on ``instances`` random configurations.

    Failures are recorded as transcripts (1-based labels) rather than raised.
    """
    if instances < 1:
        raise ValueError("instances must be >= 1")
    grid = make_grid(*DEFAULT_GRID) if grid is None else np.asarray(grid, dtype=float)
    report = SuiteReport(instances=instances, seed=seed)
    for i in range(instances):
        if "shift" in suites:
            verify_shift(report, np.random.default_rng(np.random.SeedSequence([seed, 0, i])), shift_n_range)
        if "interval" in suites or "path" in suites:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 1, i]))
            n = int(rng.integers(n_range[0], n_range[1] + 1))
            config, x, family = random_instance(rng, n)
            report.families[family] = report.families.get(family, 0) + 1
            verify_scans(report, config, x, grid, refine, "interval" in suites, "path" in suites, demo_baselines)
    return report
