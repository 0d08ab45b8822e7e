import numpy as np
import pytest
from scipy import optimize, stats

from rsd import engine as en
from rsd.calibration import (
    calibrate_first_threshold,
    estimate_fwer,
    quantile_index,
    rejection_indicators,
)
from rsd.errors import BadAlpha, TooFewReps
from rsd.gaussian import build_model
from rsd.transforms import ScoreTransformSpec, make_instance

from conftest import random_covariance


def two_sided_quantile(alpha, n):
    """c with P(max_j |Z_j| <= c) = 1 - alpha for n independent standard normals."""
    return optimize.brentq(lambda c: (2 * stats.norm.cdf(c) - 1) ** n - (1 - alpha), 0.1, 10)


def test_oracle_values():
    assert two_sided_quantile(0.05, 1) == pytest.approx(stats.norm.ppf(0.975))
    assert two_sided_quantile(0.05, 2) == pytest.approx(2.236, abs=1e-3)


def test_quantile_index_convention():
    assert quantile_index(0.05, 100_000) == 94_999
    assert quantile_index(0.05, 10) == 9
    assert quantile_index(0.5, 3) == 1


def test_calibrate_n1():
    res = calibrate_first_threshold(build_model([[1.0]]), ScoreTransformSpec(), 0.05, 100_000, 1)
    assert abs(res.thresholds[0] - two_sided_quantile(0.05, 1)) <= 0.02
    assert res.thresholds.scale == "raw"
    assert abs(res.achieved_fwer - 0.05) <= 3 * res.mc_stderr + 1e-3


def test_calibrate_n2_independent():
    res = calibrate_first_threshold(build_model(np.eye(2)), ScoreTransformSpec(), 0.05, 100_000, 2)
    assert abs(res.thresholds[0] - two_sided_quantile(0.05, 2)) <= 0.03
    assert res.thresholds.values == (res.thresholds[0],) * 2
    assert abs(res.achieved_fwer - 0.05) <= 3 * res.mc_stderr + 1e-3


def test_calibrate_score_scale_and_holm_like():
    m = build_model(random_covariance(np.random.default_rng(0), 3))
    spec = ScoreTransformSpec(default=make_instance("bayes_factor", tau=1.0))
    res = calibrate_first_threshold(m, spec, 0.1, 20_000, 3)
    assert res.thresholds.scale == "score"
    assert abs(res.achieved_fwer - 0.1) <= 4 * res.mc_stderr
    hl = calibrate_first_threshold(m, ScoreTransformSpec(), 0.1, 20_000, 3, profile="holm-like", shape=[3, 2, 1])
    c1 = hl.thresholds[0]
    np.testing.assert_allclose(hl.thresholds.values, [c1, c1 * 2 / 3, c1 / 3])


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5, -0.1])
def test_bad_alpha(alpha):
    with pytest.raises(BadAlpha):
        calibrate_first_threshold(build_model([[1.0]]), ScoreTransformSpec(), alpha, 10_000, 0)


def test_too_few_reps():
    with pytest.raises(TooFewReps):
        calibrate_first_threshold(build_model([[1.0]]), ScoreTransformSpec(), 0.05, 9_999, 0)
    with pytest.raises(TooFewReps):
        estimate_fwer(en.make_config([[1.0]], None, [1.96]), [0.0], 999, 0)


def test_estimate_fwer_n1():
    rate, se = estimate_fwer(en.make_config([[1.0]], None, [1.96]), [0.0], 100_000, 4)
    assert abs(rate - 2 * stats.norm.sf(1.96)) <= 0.005
    assert se == pytest.approx(np.sqrt(rate * (1 - rate) / 100_000))


def test_infinite_thresholds_give_zero():
    rate, se = estimate_fwer(en.make_config(np.eye(3), None, [np.inf] * 3), np.zeros(3), 2_000, 0)
    assert rate == 0.0 and se == 0.0


def test_later_thresholds_irrelevant_under_global_null():
    m = build_model(random_covariance(np.random.default_rng(1), 4))
    a = rejection_indicators(en.make_config(m, None, [2.5, 2.5, 2.5, 2.5]), np.zeros(4), 5_000, 9)
    b = rejection_indicators(en.make_config(m, None, [2.5, 0.3, 0.2, 0.1]), np.zeros(4), 5_000, 9)
    np.testing.assert_array_equal(a, b)


def test_raising_first_threshold_is_monotone():
    m = build_model(random_covariance(np.random.default_rng(2), 3))
    prev = None
    for c in (1.5, 2.0, 2.5, 3.0):
        ind = rejection_indicators(en.make_config(m, None, [c, 1.0, 1.0]), np.zeros(3), 5_000, 3)
        if prev is not None:
            assert np.all(ind <= prev)
        prev = ind


def test_reproducible_across_worker_counts():
    m = build_model(random_covariance(np.random.default_rng(3), 3))
    a = calibrate_first_threshold(m, ScoreTransformSpec(), 0.05, 20_000, 7, workers=1)
    b = calibrate_first_threshold(m, ScoreTransformSpec(), 0.05, 20_000, 7, workers=4)
    assert a == b
