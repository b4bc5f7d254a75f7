import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kzpp.iteration import (BlockCache, MomentumState, ResidualEstimator, SolverConfig, averaging_weight,
                            cdpp_fresh_budget, kzpp_fresh_budget, rho_from_ratio)
from kzpp.linalg import make_rng


def test_momentum_step_by_hand():
    st_ = MomentumState(np.array([1.0, 0.0]), rho=1 / 3, eta=0.5)
    x = np.array([2.0, 2.0])
    st_.step(np.array([0.0, 1.0]), x)
    # c = (2/3)/(4/3) = 1/2; m = (1, -1)/2; x = (2, 1) + 0.5 m
    np.testing.assert_allclose(st_.m, [0.5, -0.5])
    np.testing.assert_allclose(x, [2.25, 0.75])


def test_momentum_zero_rho_keeps_full_memory():
    st_ = MomentumState(np.array([1.0]), rho=0.0, eta=0.0)
    x = np.array([0.0])
    st_.step(np.array([1.0]), x)
    np.testing.assert_allclose(st_.m, [0.0])
    np.testing.assert_allclose(x, [-1.0])
    with pytest.raises(ValueError):
        MomentumState(np.zeros(1), rho=1.5)


def test_averaging_weight_values():
    assert averaging_weight(1) == pytest.approx(1.0 / 2.0 ** math.log(2.0))
    assert all(0 < averaging_weight(i) < 1 for i in range(1, 50))


@given(r=st.floats(0, 10), zeta=st.integers(1, 100))
def test_rho_from_ratio_clamped(r, zeta):
    rho = rho_from_ratio(r, zeta)
    assert 0.0 <= rho <= 0.99


def test_rho_from_ratio_values():
    assert rho_from_ratio(0.25, 2) == pytest.approx(0.5)
    assert rho_from_ratio(2.0, 3) == 0.0
    assert rho_from_ratio(0.0, 3) == 0.99


def test_estimator_window_schedule():
    est = ResidualEstimator(zeta=2, scale=3.0)
    for t, v in enumerate([1.0, 1.0, 0.25, 0.25]):
        est.add(t, v)
        assert est.is_checkpoint(t) == (t == 3)
    assert (est.E0, est.E1) == (2.0, 0.5)
    assert est.window_estimate() == pytest.approx(3.0 * 0.5 / 2)
    assert est.estimate() == pytest.approx(3.0 * 0.25)
    rho = est.update_rate()
    q = averaging_weight(1)
    assert rho == pytest.approx(rho_from_ratio(q + (1 - q) * 0.25, 2))
    est.reset()
    assert est.update_rate() is None


def test_block_cache_probability_and_reuse():
    cache = BlockCache(rows=16, s=4, B0=2.0)
    assert cache.probability(0) == 1.0
    assert cache.probability(1) == 1.0
    assert cache.probability(8) == 0.25
    rng = make_rng(0)
    fresh = [cache.sample(t, rng)[1] for t in range(200)]
    assert fresh[0] and fresh[1] and fresh[2]
    assert len(cache) == sum(fresh) < 40
    for blk in cache.blocks:
        assert len(set(blk.S.tolist())) == 4 and np.all(np.diff(blk.S) > 0)


def test_block_cache_without_memo_is_always_fresh():
    cache = BlockCache(rows=16, s=4, B0=1.0, memoization=False)
    rng = make_rng(0)
    assert all(cache.sample(t, rng)[1] for t in range(20))
    assert len(cache) == 0


def test_fresh_budgets():
    assert kzpp_fresh_budget(512, 128, 64) == pytest.approx(2 * math.log(512))
    assert cdpp_fresh_budget(512, 64) == pytest.approx(8 * math.log(512))


@pytest.mark.parametrize("kw", [dict(block_size=0), dict(block_size=1, eps=0), dict(block_size=1, lam=-1),
                                dict(block_size=1, t_max=0), dict(block_size=1, projection="qr"),
                                dict(block_size=1, eta=2.0), dict(block_size=1, rho0=1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
