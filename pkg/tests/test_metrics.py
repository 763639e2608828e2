import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

import oracles
from coxcv.metrics import (
    PredictionRecord,
    brier,
    c_index,
    concordance_counts,
    kl_score,
    log_mse_ratio,
    mse_summary,
    squared_error,
)


@st.composite
def survival_samples(draw, max_n=40, ties=True):
    n = draw(st.integers(2, max_n))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    if ties:
        times = rng.integers(1, draw(st.integers(2, 12)), size=n).astype(float)
        eta = rng.integers(-3, 4, size=n).astype(float)
    else:
        times = rng.exponential(size=n)
        eta = rng.normal(size=n)
    status = (rng.random(n) > draw(st.sampled_from([0.0, 0.3, 0.7]))).astype(float)
    return eta, times, status


class TestSquaredError:
    def test_cases(self):
        assert squared_error([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert squared_error([1.0, 0.0], [0.0, 0.0]) == 1.0
        rng = np.random.default_rng(10)
        a, b = rng.normal(size=10), rng.normal(size=10)
        assert_allclose(squared_error(a, b), sum((x - y) ** 2 for x, y in zip(a, b)), rtol=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            squared_error([1.0], [1.0, 2.0])


class TestLogMseRatio:
    def test_cases(self):
        losses = [0.5, 1.0, 2.0]
        assert log_mse_ratio(losses, losses) == 0.0
        assert_allclose(log_mse_ratio([2 * x for x in losses], losses), math.log(2), rtol=1e-14)

    def test_average_then_ratio(self):
        rng = np.random.default_rng(3)
        sel, orc = rng.exponential(size=20), rng.exponential(size=20)
        assert_allclose(log_mse_ratio(sel, orc), math.log(sum(sel) / 20 / (sum(orc) / 20)), rtol=1e-12)
        summary = mse_summary(sel, orc)
        assert summary.log_ratio == log_mse_ratio(sel, orc)

    def test_zero_oracle_fails(self):
        with pytest.raises(ValueError):
            log_mse_ratio([1.0], [0.0])
        with pytest.raises(ValueError):
            log_mse_ratio([], [])


class TestBrierKl:
    def test_brier_cases(self):
        assert brier([1], [1.0]) == 0.0
        assert_allclose(brier([1], [0.3]), 0.49)
        records = [PredictionRecord(1, 0.9), PredictionRecord(0, 0.2), PredictionRecord(1, 0.5),
                   PredictionRecord(0, 0.6), PredictionRecord(1, 1.0)]
        assert_allclose(brier(records), (0.01 + 0.04 + 0.25 + 0.36 + 0.0) / 5, rtol=1e-14)

    def test_kl_cases(self):
        assert_allclose(kl_score([1], [0.5]), math.log(2))
        assert_allclose(kl_score([0], [0.5]), math.log(2))
        assert kl_score([1], [1.0]) < 1e-11
        assert np.isfinite(kl_score([0], [1.0]))

    def test_validation(self):
        with pytest.raises(ValueError):
            brier([1], [1.2])
        with pytest.raises(ValueError):
            PredictionRecord(1, -0.1)
        with pytest.raises(ValueError):
            kl_score([], [])

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from([0, 1]), min_size=1, max_size=30))
    def test_constant_prediction_optimum(self, ys):
        y = np.array(ys, dtype=float)
        grid = np.linspace(0.0, 1.0, 1001)
        pbar = y.mean()
        best_brier = grid[np.argmin([brier(y, np.full(y.size, g)) for g in grid])]
        best_kl = grid[np.argmin([kl_score(y, np.full(y.size, g)) for g in grid])]
        assert abs(best_brier - pbar) <= 1e-3
        assert abs(best_kl - pbar) <= 1e-3


class TestCIndex:
    def test_perfect_and_coin_flip(self):
        times = np.array([1.0, 2.0, 3.0, 4.0])
        status = np.ones(4)
        assert c_index(-times, times, status) == 1.0
        assert c_index(times, times, status) == 0.0
        assert c_index(np.zeros(4), times, status) == 0.5

    def test_no_comparable_pairs(self):
        assert math.isnan(c_index([0.1, 0.2], [1.0, 2.0], [0, 0]))
        assert math.isnan(c_index([0.1, 0.2], [1.0, 1.0], [1, 1]))

    def test_seeded_n25(self):
        rng = np.random.default_rng(25)
        times = rng.exponential(size=25)
        status = (rng.random(25) > 0.3).astype(float)
        eta = rng.normal(size=25)
        assert c_index(eta, times, status) == oracles.c_index(eta, times, status)

    @settings(max_examples=100, deadline=None)
    @given(survival_samples())
    def test_matches_brute_force(self, sample):
        eta, times, status = sample
        assert concordance_counts(eta, times, status) == oracles.concordance(eta, times, status)

    @settings(max_examples=60, deadline=None)
    @given(survival_samples(ties=False))
    def test_reflection(self, sample):
        eta, times, status = sample
        c = c_index(eta, times, status)
        if not math.isnan(c):
            assert_allclose(c + c_index(-eta, times, status), 1.0, rtol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(survival_samples())
    def test_monotone_transform_invariance(self, sample):
        eta, times, status = sample
        c = c_index(eta, times, status)
        transformed = c_index(np.exp(eta) * 3 + 7, times, status)
        assert (math.isnan(c) and math.isnan(transformed)) or c == transformed
