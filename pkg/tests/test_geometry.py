import numpy as np
import pytest

from rsd import engine as en
from rsd import geometry as geo
from rsd.errors import BadGrid, BadIndex, NotAnAcceptRejectPair
from rsd.gaussian import build_model


def worked_config():
    return en.make_config([[1.0, 0.5], [0.5, 1.0]], None, [1.5, 1.0])


def profile_from(bits):
    d = np.array(bits, dtype=bool)
    m = len(d)
    return geo.LineScanProfile(0, np.zeros(1), np.ones(1), np.arange(m, dtype=float), d, np.zeros(m, dtype=np.int64))


def test_worked_scan():
    prof = geo.scan_line(worked_config(), [2.0, 1.0], 0, geo.make_grid(-6, 2, 2001))
    acc = prof.grid[~prof.decisions]
    step = 8 / 2000
    # boundaries solve |sqrt(3) + (sqrt(3)/2) r| = 1.5
    lo, hi = -(1.5 + np.sqrt(3)) / (np.sqrt(3) / 2), (1.5 - np.sqrt(3)) / (np.sqrt(3) / 2)
    assert abs(acc.min() - lo) <= step and abs(acc.max() - hi) <= step
    assert lo == pytest.approx(-3.7321, abs=1e-4) and hi == pytest.approx(-0.2679, abs=1e-4)
    assert geo.check_interval(prof).passed and geo.check_escalation(prof)


def test_refinement_tightens_boundary():
    grid = geo.make_grid(-6, 2, 81)
    coarse = geo.scan_line(worked_config(), [2.0, 1.0], 0, grid)
    fine = geo.scan_line(worked_config(), [2.0, 1.0], 0, grid, refine=10)
    assert fine.grid.size == grid.size + 2 * 9
    hi = (1.5 - np.sqrt(3)) / (np.sqrt(3) / 2)
    assert abs(fine.grid[~fine.decisions].max() - hi) < abs(coarse.grid[~coarse.decisions].max() - hi)


def test_identity_scan():
    cfg = en.make_config(np.eye(3), None, [2.0, 2.0, 2.0])
    prof = geo.scan_line(cfg, np.zeros(3), 0, geo.make_grid(-5, 5, 1001))
    np.testing.assert_array_equal(~prof.decisions, np.abs(prof.grid) <= 2.0 + 1e-12)


def test_bad_grid_and_index():
    with pytest.raises(BadGrid):
        geo.scan_line(worked_config(), [2.0, 1.0], 0, [0.0, 1.0, 0.5])
    with pytest.raises(BadGrid):
        geo.make_grid(0, 1, 1)
    with pytest.raises(BadGrid):
        geo.make_grid(1, 0, 10)
    with pytest.raises(BadIndex):
        geo.scan_line(worked_config(), [2.0, 1.0], 2, [0.0, 1.0])


@pytest.mark.parametrize(
    "bits, ok, bad",
    [
        ([1, 1, 0, 0, 0, 1, 1], True, ()),
        ([1, 0, 1, 0], False, (2,)),
        ([0, 0, 0], True, ()),
        ([1, 1, 1], True, ()),
        ([0, 1, 1, 0, 1, 0], False, (1, 2, 4)),
    ],
)
def test_check_interval_patterns(bits, ok, bad):
    rep = geo.check_interval(profile_from(bits))
    assert rep.passed is ok and rep.violation_positions == bad


def test_escalation_and_boundaries():
    assert geo.check_escalation(profile_from([1, 1, 0, 0, 1]))
    assert not geo.check_escalation(profile_from([0, 1, 0, 0]))
    assert geo.boundary_pairs(profile_from([1, 0, 0, 1])) == [(1, 0), (2, 3)]


def test_shift_example():
    m = build_model([[1.0, 0.5], [0.5, 1.0]])
    on, off = geo.check_shift_invariance(m, [2.0, 1.0], (), 0, [2.0])
    assert on <= 1e-10 and off <= 1e-10
    from rsd.gaussian import conditional_residual
    assert conditional_residual(m, [4.0, 2.0], (), 0) == pytest.approx(3.464102, abs=1e-6)


def test_shift_identity_exact():
    m = build_model(np.eye(4))
    on, off = geo.check_shift_invariance(m, [0.3, -1, 2, 0.5], (2,), 1, [-3.0, 0.5, 7.0])
    assert on <= 1e-15 and off == 0.0


def test_shift_random_n8():
    rng = np.random.default_rng(8)
    from rsd.gaussian import random_correlation
    m = build_model(random_correlation(rng, 8))
    on, off = geo.check_shift_invariance(m, rng.normal(size=8), (3, 0), 5, rng.uniform(-10, 10, 6))
    assert on <= 1e-8 and off <= 1e-8


def test_rejection_path_example():
    rep = geo.check_rejection_path(worked_config(), [1.0, 0.5], [3.0, 1.5], 0)
    assert (rep.t, rep.t0, rep.prefix_match, rep.stop_ok) == (1, 1, True, True)


def test_rejection_path_errors():
    with pytest.raises(NotAnAcceptRejectPair):
        geo.check_rejection_path(worked_config(), [3.0, 1.5], [1.0, 0.5], 0)
    with pytest.raises(NotAnAcceptRejectPair):
        geo.check_rejection_path(worked_config(), [1.0, 0.5], [3.0, 0.0], 0)


def test_nontrivial_prefix_case():
    # coordinate 2 is rejected first in both runs, then coordinate 1 crosses its threshold at stage 2
    cfg = en.make_config(np.eye(2), None, [2.0, 1.0])
    rep = geo.check_rejection_path(cfg, [0.5, 5.0], [1.5, 5.0], 0)
    assert (rep.t, rep.t0) == (2, 2) and rep.passed


def test_random_instances_cover_families():
    seen = set()
    for i in range(60):
        cfg, x, fam = geo.random_instance(np.random.default_rng(i), 4)
        seen.add(fam)
        assert x.shape == (4,)
        v = np.array(cfg.thresholds.values)
        assert np.all(v[1:] <= v[:-1])
    assert {"identity", "per_coordinate", "history"} <= seen


def test_small_suite_passes():
    rep = geo.verify_suite(6, 11, grid=geo.make_grid(-10, 10, 401), demo_baselines=("holm",))
    assert rep.passed and rep.shift_checks == 6 and rep.path_pairs > 0
    assert rep.demo_scans == rep.scans and rep.failures == []


def test_identity_family_passes():
    rng = np.random.default_rng(0)
    for _ in range(5):
        n = int(rng.integers(2, 6))
        cfg = en.make_config(np.eye(n), None, np.sort(rng.uniform(0.5, 3, n))[::-1])
        rep = geo.SuiteReport()
        geo.verify_scans(rep, cfg, rng.normal(size=n), geo.make_grid(-8, 8, 401), 10, True, True)
        assert rep.passed


def test_suite_rejects_zero_instances():
    with pytest.raises(ValueError):
        geo.verify_suite(0, 1)


def test_demo_channel_label():
    m = build_model([[1.0, 0.5], [0.5, 1.0]])
    prof = geo.scan_line(en.baseline_procedure("holm", m, 0.05), [2.0, 1.0], 0, geo.make_grid(-6, 2, 101), model=m)
    assert prof.channel == "demo"
