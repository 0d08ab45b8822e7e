"""Acceptance gate: one PASS/FAIL line per criterion, each at its stated tolerance."""

from pathlib import Path

import numpy as np
import pytest
from scipy import optimize, stats

from rsd import engine as en
from rsd import gaussian as gs
from rsd import geometry as geo
from rsd.calibration import calibrate_first_threshold
from rsd.cli import load_config
from rsd.risk import estimate_risk
from rsd.transforms import ScoreTransformSpec, make_instance

from conftest import random_covariance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def announce(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}")


def random_problem(rng, n_lo=1, n_hi=6):
    n = int(rng.integers(n_lo, n_hi + 1))
    m = gs.build_model(random_covariance(rng, n))
    C = np.sort(rng.uniform(0.3, 3.5, n))[::-1]
    # mixture of nulls and sizeable signals so runs reach varied depths
    theta = rng.normal(0, 3, n) * (rng.random(n) < 0.5)
    return m, C, theta + m.chol @ rng.standard_normal(n)


@pytest.fixture(scope="module")
def scan_report():
    return geo.verify_suite(200, 2024, suites=("interval", "path"), n_range=(2, 8),
                            grid=geo.make_grid(-20, 20, 2001), refine=10)


def test_c01_shift_property(capsys):
    rep = geo.verify_suite(1000, 7, suites=("shift",), shift_n_range=(2, 10))
    ok = (rep.shift_checks >= 1000 and rep.shift_max_on_error <= 1e-8 and rep.shift_max_off_drift <= 1e-8
          and rep.slope_violations == 0)
    announce(capsys, 1, "shift property", ok,
             f"{rep.shift_checks} draws, on-coordinate {rep.shift_max_on_error:.2e}, "
             f"off-coordinate {rep.shift_max_off_drift:.2e} (tol 1e-8)")
    assert ok, rep.failures[:3]


def test_c02_interval(capsys, scan_report):
    rep = scan_report
    ok = rep.instances >= 200 and rep.interval_violations == 0 and rep.escalation_violations == 0 \
        and rep.y_max_error <= 1e-8
    announce(capsys, 2, "interval acceptance", ok,
             f"{rep.instances} configs, {rep.scans} scans ({rep.scans_with_boundary} with a boundary), "
             f"{rep.interval_violations} violations, families {dict(sorted(rep.families.items()))}")
    assert ok, [f for f in rep.failures if f["suite"] == "interval"][:3]
    assert rep.families.get("per_coordinate", 0) > 0


def test_c03_rejection_path(capsys, scan_report):
    rep = scan_report
    ok = rep.path_pairs > 0 and rep.stop_failures == 0 and rep.prefix_failures == 0
    announce(capsys, 3, "rejection path", ok,
             f"{rep.path_pairs} pairs ({rep.prefix_nontrivial} with t0 > 1), "
             f"{rep.stop_failures} stop failures, {rep.prefix_failures} prefix failures")
    assert ok, [f for f in rep.failures if f["suite"] == "path"][:3]


def test_c04_mrd_recovery(capsys):
    rng = np.random.default_rng(404)
    bad = 0
    for _ in range(10_000):
        m, C, x = random_problem(rng)
        a = en.run_stepdown(en.make_config(m, None, C), x)
        b = en.run_mrd(m, x, C)
        bad += int(not np.array_equal(a.decision, b.decision) or a.order != b.order)
    announce(capsys, 4, "MRD recovery", bad == 0, f"10000 instances, {bad} mismatches")
    assert bad == 0


def test_c05_conjugacy(capsys):
    rng = np.random.default_rng(505)
    hs = [make_instance("power", p=2.0), make_instance("logshift", c=1.0), make_instance("affine", a=2.0, b=-0.3)]
    bad = {h.kind: 0 for h in hs}
    for h in hs:
        for _ in range(1_000):
            m, C, x = random_problem(rng)
            cfg = en.StepDownConfig(m, ScoreTransformSpec(default=h), en.ThresholdProfile(tuple(h(C)), "score"))
            bad[h.kind] += int(not np.array_equal(en.run_stepdown(cfg, x).decision, en.run_mrd(m, x, C).decision))
    ok = not any(bad.values())
    announce(capsys, 5, "global-transform conjugacy", ok, f"1000 instances per transform, mismatches {bad}")
    assert ok


def test_c06_downdate_vs_fresh(capsys):
    rng = np.random.default_rng(606)
    worst = 0.0
    chains = 0
    for n in (2, 3, 5, 8, 13, 20, 30, 40, 50):
        for _ in range(4 if n < 30 else 2):
            m = gs.build_model(random_covariance(rng, n))
            state = gs.initial_state(m)
            for k in rng.permutation(n)[: n - 1]:
                state = gs.downdate_precision(state, int(k))
                fresh = gs.fresh_state(m, state.history)
                worst = max(worst, float(np.max(np.abs(state.precision - fresh.precision))
                                     / np.max(np.abs(fresh.precision))))
            chains += 1
    ok = worst <= 1e-8
    announce(capsys, 6, "precision downdate", ok, f"{chains} full chains up to n=50, max relative error {worst:.2e}")
    assert ok


def test_c07_diagonal_rescaling(capsys):
    rng = np.random.default_rng(707)
    bad, worst = 0, 0.0
    for _ in range(1_000):
        m, C, x = random_problem(rng)
        a = en.run_stepdown(en.make_config(m, None, C), x)
        b = en.run_stepdown(en.make_config(m.standardized(), None, C), gs.standardize_observation(m, x))
        if a.path() != b.path():
            bad += 1
            continue
        worst = max([worst] + [abs(ra.residual - rb.residual) for ra, rb in zip(a.records, b.records)])
    ok = bad == 0 and worst <= 1e-8
    announce(capsys, 7, "diagonal rescaling", ok, f"1000 instances, {bad} trajectory mismatches, "
             f"max residual gap {worst:.2e}")
    assert ok


def test_c08_calibration(capsys):
    def oracle(n):
        return optimize.brentq(lambda c: (2 * stats.norm.cdf(c) - 1) ** n - 0.95, 0.5, 6)

    r1 = calibrate_first_threshold(gs.build_model([[1.0]]), ScoreTransformSpec(), 0.05, 100_000, 8)
    r2 = calibrate_first_threshold(gs.build_model(np.eye(2)), ScoreTransformSpec(), 0.05, 100_000, 8)
    c1, c2 = r1.thresholds[0], r2.thresholds[0]
    ok = abs(c1 - 1.960) <= 0.02 and abs(c2 - 2.236) <= 0.03
    announce(capsys, 8, "calibration", ok,
             f"n=1 C1={c1:.4f} (oracle {oracle(1):.4f}, target 1.960 +/- 0.02), "
             f"n=2 C1={c2:.4f} (oracle {oracle(2):.4f}, target 2.236 +/- 0.03)")
    assert ok


def test_c09_risk(capsys):
    cfg = en.make_config([[1.0]], None, [1.96])
    est = estimate_risk(en.stepdown_procedure(cfg), cfg.model, [0.0], 100_000, 9)
    m3 = gs.build_model([[1.0, 0.4, 0.1], [0.4, 1.0, -0.3], [0.1, -0.3, 1.0]])
    exact = True
    for theta in ([0, 0, 0], [2, 0, -1], [0.1, 0.2, 0.3]):
        acc = estimate_risk(en.constant_procedure(3, reject=False), m3, theta, 1_000, 9)
        exact &= bool(np.array_equal(acc.risk, (np.asarray(theta) != 0).astype(float)))
    ok = abs(est.risk[0] - 0.050) <= 0.005 and exact
    announce(capsys, 9, "risk", ok, f"n=1 null risk {est.risk[0]:.4f} (target 0.050 +/- 0.005), "
             f"always-accept exact: {exact}")
    assert ok


def test_c10_ordering_perturbation(capsys):
    cfg, _ = load_config(CONFIGS / "ordering_perturbation.json")
    x = [1.2, 1.0]
    mine = en.run_stepdown(cfg, x).records[0].chosen + 1
    mrd = en.run_mrd(cfg.model, x, [2.5, 2.0]).records[0].chosen + 1
    ok = mine == 2 and mrd == 1
    announce(capsys, 10, "ordering perturbation", ok, f"stage-1 index {mine} vs MRD {mrd} (1-based)")
    assert ok
