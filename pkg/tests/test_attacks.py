import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzsgd.attacks import (NoAttack, OmniscientView, ScaledNegativeMean, craft, make_attack,
                            median_attack_recipe, realizes_recipe)
from byzsgd.exceptions import ConfigurationError, NonFiniteError

KRUM_TOY_CORRECT = [0, 0.02, 0.14, 0.26, 0.38, 0.5]


def test_scaled_negative_mean_examples():
    out = craft(ScaledNegativeMean(10), OmniscientView([[0.1], [0.3], [-0.1]]), 2)
    np.testing.assert_allclose(out, [[-1.0], [-1.0]], rtol=0, atol=1e-12)

    V = np.random.default_rng(0).standard_normal((5, 4))
    assert np.array_equal(craft(ScaledNegativeMean(0.0), OmniscientView(V), 3), np.zeros((3, 4)))


def test_reproduces_krum_toy_byzantine_values():
    # solve -eps * mean = -0.1 by hand: eps = 0.1 / (1.3 / 6)
    eps = 0.1 / (1.3 / 6)
    out = ScaledNegativeMean(eps).craft(OmniscientView(KRUM_TOY_CORRECT), 3)
    np.testing.assert_allclose(out.ravel(), [-0.1] * 3, rtol=0, atol=1e-12)


def test_gating_and_no_attack():
    att = ScaledNegativeMean(10, start_iteration=5)
    view_early = OmniscientView([[1.0]], iteration=4)
    view_late = OmniscientView([[1.0]], iteration=5)
    assert att.craft(view_early, 1) is None
    assert att.craft(view_late, 1).tolist() == [[-10.0]]
    assert NoAttack().craft(view_late, 1) is None
    never = ScaledNegativeMean(1.0, start_iteration=math.inf)
    assert never.craft(OmniscientView([[1.0]], iteration=10**9), 1) is None


def test_errors():
    with pytest.raises(ValueError):
        OmniscientView([])
    with pytest.raises(NonFiniteError):
        ScaledNegativeMean(np.inf).craft(OmniscientView([[1.0]]), 1)
    with pytest.raises(ConfigurationError):
        ScaledNegativeMean(1.0).craft(OmniscientView([[1.0]]), 0)
    with pytest.raises(ConfigurationError):
        make_attack("label_flip")


def test_make_attack():
    att = make_attack("scaled_negative_mean", epsilon=0.5, start_iteration=3)
    assert att.get_params() == {"epsilon": 0.5, "start_iteration": 3}
    assert isinstance(make_attack("none"), NoAttack)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 15), st.integers(1, 5), st.integers(1, 12),
       st.floats(-100, 100, allow_nan=False), st.integers(0, 2**32 - 1))
def test_identical_and_collinear(k, d, q, eps, seed):
    V = np.random.default_rng(seed).standard_normal((k, d))
    U = ScaledNegativeMean(eps).craft(OmniscientView(V), q)
    assert U.shape == (q, d)
    assert all(np.array_equal(U[0], row) for row in U)
    mean = V.mean(axis=0)
    np.testing.assert_allclose(U[0], -eps * mean, rtol=0, atol=1e-12 * max(1, abs(eps)))
    assert U[0] @ mean == pytest.approx(-eps * (mean @ mean), rel=1e-9, abs=1e-12)


def test_median_recipe_examples():
    rec = median_attack_recipe(OmniscientView([-0.1, 0.1, 0.3]))
    assert len(rec) == 1
    assert rec[0].mean_sign == 1 and rec[0].side == "below" and rec[0].threshold == -0.1
    assert realizes_recipe(rec, [[-4.0], [-2.0]]) == [True]

    rec = median_attack_recipe(OmniscientView([[0.0]]))
    assert rec[0].side == "neutral" and rec[0].threshold is None

    rec = median_attack_recipe(OmniscientView([[-1.0, 2.0], [-3.0, 1.0]]))
    assert [r.side for r in rec] == ["above", "below"]
    assert [r.threshold for r in rec] == [-1.0, 1.0]


def test_large_epsilon_realises_recipe_where_mean_dominates_spread():
    gen = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        d = 4
        V = gen.normal(loc=gen.normal(0, 3, size=d), scale=0.5, size=(13, d))
        view = OmniscientView(V)
        U = ScaledNegativeMean(10).craft(view, 12)
        rec = median_attack_recipe(view)
        ok = realizes_recipe(rec, U)
        for r, flag in zip(rec, ok):
            col = V[:, r.coordinate]
            if abs(col.mean()) > col.max() - col.min():
                assert flag
                checked += 1
    assert checked > 100
