import math

import numpy as np
import pytest

from byzsgd.aggregation import CoordinateWiseMedian, Krum, Mean
from byzsgd.attacks import NoAttack, ScaledNegativeMean
from byzsgd.exceptions import ConditionViolation, ConfigurationError
from byzsgd.tolerance import (build_krum_attack_instance, check_tolerance, order_statistic_mean,
                              order_statistic_means, median_attack_condition, krum_attack_condition,
                              krum_attack_report)
from oracles import brute_force_krum_index

MEDIAN_THRESHOLD = 1 / math.sqrt(12)  # sigma = 1, m - q - 1 = 12


def test_mean_without_attack_is_tolerant():
    g = np.array([0.3, -0.1])
    v = check_tolerance(Mean(), NoAttack(), g, 1.0, 25, 12, trials=2000, seed=1)
    assert v.tolerant
    se_bound = 4 * v.standard_error
    assert abs(v.inner_product_with_g - g @ g) < se_bound
    assert v.trials == 2000 and v.standard_error > 0


@pytest.mark.parametrize("rule,q", [(Mean(), 12), (CoordinateWiseMedian(), 12), (Krum(11), 11)])
def test_no_attack_is_tolerant_for_symmetric_noise(rule, q):
    g = np.array([0.05, -0.02, 0.1])
    v = check_tolerance(rule, None, g, 1.0, 25, q, trials=1000, seed=2)
    assert v.tolerant


@pytest.mark.parametrize("multiple,tolerant", [(0.5, False), (4.0, False), (7.0, True)])
def test_median_verdict_flips_above_threshold(multiple, tolerant):
    # the bound is only sufficient: for Gaussian draws E[min of 13] = g - 1.668 sigma,
    # so the verdict flips between 5.5x and 6x the threshold
    g = [multiple * MEDIAN_THRESHOLD]
    v = check_tolerance(CoordinateWiseMedian(), ScaledNegativeMean(10), g, 1.0, 25, 12,
                        trials=3000, seed=4)
    assert v.tolerant is tolerant


def test_verdict_independent_of_parallelism():
    args = (CoordinateWiseMedian(), ScaledNegativeMean(10), [0.2, 0.1], 1.0, 25, 12)
    a = check_tolerance(*args, trials=600, seed=5)
    b = check_tolerance(*args, trials=600, seed=5, n_jobs=3)
    np.testing.assert_allclose(a.estimated_expected_aggregate, b.estimated_expected_aggregate,
                               rtol=0, atol=1e-10)
    assert a.tolerant == b.tolerant


def test_check_tolerance_preconditions():
    with pytest.raises(ConfigurationError):
        check_tolerance(Mean(), None, [0.1], 1.0, 24, 12, trials=100)
    with pytest.raises(ConfigurationError):
        check_tolerance(Mean(), None, [0.1], 1.0, 25, 12, trials=99)
    with pytest.raises(ConfigurationError):
        check_tolerance(Krum(12), None, [0.1], 1.0, 25, 12, trials=100)


def test_median_attack_condition():
    assert median_attack_condition(np.zeros(4), 0.3, 25, 12).holds
    res = median_attack_condition([0.2], 1.0, 25, 12)
    assert res.holds and res.margin == pytest.approx(1 / math.sqrt(12) - 0.2)
    assert round(1 / math.sqrt(12), 4) == 0.2887
    res = median_attack_condition([0.5], 1.0, 25, 12)
    assert not res.holds and res.margin < 0
    with pytest.raises(ConfigurationError):
        median_attack_condition([0.1], 1.0, 3, 2)


def test_krum_attack_condition():
    c = krum_attack_condition(39, 18, 1.0)
    assert c.threshold == 20 and c.min_honest == 21 and c.holds
    c = krum_attack_condition(0, 0, 2.0)
    assert c.threshold == 10 and c.min_honest == 11
    big = krum_attack_condition(0, 0, 1e9)
    assert big.threshold == pytest.approx(4.0) and big.min_honest == 5
    assert not krum_attack_condition(9, 3, 1.0).holds
    with pytest.raises(ConfigurationError):
        krum_attack_condition(10, 1, 0)


def test_krum_attack_instance_m39():
    inst = build_krum_attack_instance(39, 18, 1.0, 5)
    r = inst.report
    assert r.radius_ok and r.distinct_ok and r.epsilon_ok and r.size_ok and r.all_ok
    assert r.krum_score_gap > 0
    assert r.selected_is_byzantine and r.selected_index >= 21
    vbar = r.honest_mean
    assert np.array_equal(r.aggregate, -vbar)
    assert r.inner_product_with_mean == -(vbar @ vbar) < 0
    idx, _ = brute_force_krum_index(inst.inputs.tolist(), 18)
    assert idx == r.selected_index
    assert inst.correct.shape == (21, 5) and inst.byzantine.shape == (18, 5)
    assert len({tuple(v) for v in inst.correct}) == 21


@pytest.mark.parametrize("eps,d", [(0.5, 3), (0.5, 4), (1.0, 5), (1.0, 6), (0.25, 3)])
def test_krum_attack_instances_pass_their_own_flags(eps, d):
    n_honest = krum_attack_condition(0, 0, eps).min_honest
    q = n_honest - 3
    for seed in range(3):
        inst = build_krum_attack_instance(n_honest + q, q, eps, d, seed=seed)
        assert inst.report.all_ok
        assert inst.report.krum_score_gap > 0
        assert inst.report.selected_is_byzantine


def test_krum_attack_guard_rails():
    with pytest.raises(ConditionViolation, match="size_ok"):
        build_krum_attack_instance(9, 3, 1.0, 5)
    with pytest.raises(ConditionViolation):
        build_krum_attack_instance(40, 18, 1.0, 5)
    with pytest.raises(ConditionViolation, match="epsilon_ok"):
        build_krum_attack_instance(19, 8, 2.0, 3)
    with pytest.raises(ConditionViolation):
        build_krum_attack_instance(39, 18, -1.0, 5)
    # geometric limits: 21 points at mutual distance >= R inside a 3-d ball of
    # radius R, or 165 points at distance >= R/4 inside a disc
    with pytest.raises(ConditionViolation, match="epsilon_ok"):
        build_krum_attack_instance(39, 18, 1.0, 3)
    with pytest.raises(ConditionViolation, match="epsilon_ok"):
        build_krum_attack_instance(327, 162, 0.25, 2)


def test_krum_attack_report_on_krum_toy():
    V = [[0], [0.02], [0.14], [0.26], [0.38], [0.5]]
    eps = 0.1 / (1.3 / 6)
    U = [[-0.1]] * 3
    r = krum_attack_report(V, U, eps)
    assert r.selected_is_byzantine and r.krum_score_gap > 0
    assert not r.size_ok


def test_order_statistic_examples():
    one = order_statistic_mean(1, mean=0.7, std=2.0, which=1, trials=20_000, seed=1)
    assert abs(one.estimate - 0.7) < 4 * one.standard_error
    two = order_statistic_mean(2, which=1, trials=200_000, seed=2)
    assert abs(two.estimate - (-1 / math.sqrt(math.pi))) < 4 * two.standard_error
    thirteen = order_statistic_mean(13, mean=0.2, std=1.0, which=1, trials=20_000, seed=3)
    assert thirteen.estimate + 4 * thirteen.standard_error < 0
    with pytest.raises(ValueError):
        order_statistic_mean(3, which=4)
    with pytest.raises(ValueError):
        order_statistic_mean(3, trials=999)


def test_order_statistics_monotone():
    ests = order_statistic_means(9, mean=0.0, std=1.0, trials=5000, seed=4)
    for a, b in zip(ests, ests[1:]):
        assert a.estimate <= b.estimate + 4 * math.hypot(a.standard_error, b.standard_error)
