import numpy as np
import pytest

from twistpf.resampling import multinomial_resample
from twistpf.rng import RESAMPLE, RngStream


def _gen(seed=0):
    return RngStream(seed).generator(1, RESAMPLE)


def test_deterministic_given_generator_state():
    lw = np.log([0.2, 0.5, 0.3])
    a = multinomial_resample(lw, 10, _gen(3))
    b = multinomial_resample(lw, 10, _gen(3))
    assert np.array_equal(a, b)
    assert a.dtype == np.int64


def test_additive_constant_invariance():
    lw = np.array([-1.0, 0.3, 2.2, -0.7])
    a = multinomial_resample(lw, 50, _gen(5))
    b = multinomial_resample(lw + 123.456, 50, _gen(5))
    assert np.array_equal(a, b)


def test_point_mass():
    lw = np.array([-np.inf, 0.0, -np.inf])
    idx = multinomial_resample(lw, 20, _gen(1))
    assert np.all(idx == 1)


def test_empirical_frequencies():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    lw = np.log(p)
    idx = multinomial_resample(lw, 200_000, _gen(7))
    freq = np.bincount(idx, minlength=4) / idx.size
    assert np.max(np.abs(freq - p)) < 0.005


def test_rejects_nan():
    with pytest.raises(ValueError):
        multinomial_resample(np.array([0.0, np.nan]), 3, _gen())


def test_rejects_all_minus_inf():
    with pytest.raises(ValueError):
        multinomial_resample(np.array([-np.inf, -np.inf]), 3, _gen())


def test_rejects_empty_and_2d():
    with pytest.raises(ValueError):
        multinomial_resample(np.array([]), 3, _gen())
    with pytest.raises(ValueError):
        multinomial_resample(np.zeros((2, 2)), 3, _gen())


def test_zero_count():
    out = multinomial_resample(np.zeros(4), 0, _gen())
    assert out.shape == (0,)


def test_huge_log_weights_no_overflow():
    lw = np.array([1000.0, 1000.0, 999.0])
    idx = multinomial_resample(lw, 1000, _gen(2))
    assert set(np.unique(idx)) <= {0, 1, 2}
    # index 2 carries weight e^-1 / (2 + e^-1): present but rare
    assert 0 < np.mean(idx == 2) < 0.5


def test_single_draw_uses_one_uniform():
    # one call with count=1 consumes exactly one uniform
    g1 = _gen(9)
    multinomial_resample(np.zeros(5), 1, g1)
    after = g1.random()
    g2 = _gen(9)
    g2.random()
    assert after == g2.random()
