import math
import warnings

import numpy as np
import pytest

from vsprefill.numerics import RopeConfig, Rng
from vsprefill.theory import (
    GaussianQKModel,
    expected_score,
    expected_score_phase,
    monte_carlo_score,
    plant_slash_means,
    rotated_mean_score,
    slash_spectrum,
)


def test_spectrum_examples():
    s = slash_spectrum(GaussianQKModel(np.zeros(4), np.ones(4)))
    assert not s.a.any() and not s.b.any() and not s.r.any()
    s = slash_spectrum(GaussianQKModel([1.0, 0.0], [1.0, 0.0]))
    assert (s.a[0], s.b[0], s.r[0], s.alpha[0]) == (1.0, 0.0, 1.0, 0.0)
    m = GaussianQKModel([0.0, 1.0], [1.0, 0.0])
    s = slash_spectrum(m)
    assert (s.a[0], s.b[0], s.r[0]) == (0.0, 1.0, 1.0)
    for delta in (0, 1, 2, 5):
        assert abs(expected_score(s, delta, m.rope) + math.sin(delta)) <= 1e-15


def test_spectrum_polar_consistency():
    rng = np.random.default_rng(0)
    m = GaussianQKModel(rng.standard_normal(16), rng.standard_normal(16))
    s = slash_spectrum(m)
    assert (s.r >= 0).all()
    assert np.max(np.abs(s.r * np.cos(s.alpha) - s.a)) <= 1e-12
    assert np.max(np.abs(s.r * np.sin(s.alpha) - s.b)) <= 1e-12


def test_expected_score_properties():
    rng = np.random.default_rng(1)
    m = GaussianQKModel(rng.standard_normal(8), rng.standard_normal(8))
    s = slash_spectrum(m)
    assert expected_score(s, 0, m.rope) == pytest.approx(m.mu_q @ m.mu_k, abs=1e-14)
    deltas = np.arange(-10_000, 10_001, 7)
    assert np.max(np.abs(expected_score(s, deltas, m.rope) - expected_score_phase(s, deltas, m.rope))) <= 1e-12
    aligned = GaussianQKModel([1.0, 0.0], [1.0, 0.0])
    for delta in (0, 1, 3):
        assert expected_score(slash_spectrum(aligned), delta, aligned.rope) == pytest.approx(math.cos(delta), abs=1e-15)
    even = GaussianQKModel([1.0, 0.0, 2.0, 0.0], [0.5, 0.0, 1.0, 0.0])
    se = slash_spectrum(even)
    assert expected_score(se, 13, even.rope) == pytest.approx(expected_score(se, -13, even.rope), abs=1e-14)


def test_closed_form_is_rotated_mean_logit():
    rng = np.random.default_rng(2)
    m = GaussianQKModel(rng.standard_normal(8), rng.standard_normal(8))
    s = slash_spectrum(m)
    for q_pos, k_pos in [(5, 0), (100, 37), (3, 9)]:
        assert rotated_mean_score(m, q_pos, k_pos) == pytest.approx(expected_score(s, q_pos - k_pos, m.rope), abs=1e-12)
        assert rotated_mean_score(m, q_pos + 50, k_pos + 50) == pytest.approx(rotated_mean_score(m, q_pos, k_pos), abs=1e-12)


def test_monte_carlo_degenerate_exact():
    rng = np.random.default_rng(3)
    m = GaussianQKModel(rng.standard_normal(8), rng.standard_normal(8))
    prof = monte_carlo_score(m, np.arange(10), 1000, Rng(0))
    assert np.max(np.abs(prof.mean - expected_score(slash_spectrum(m), np.arange(10), m.rope))) <= 1e-12


def test_monte_carlo_isotropic_within_band():
    rng = np.random.default_rng(4)
    m = GaussianQKModel(rng.standard_normal(8), rng.standard_normal(8), 1.0, 1.0)
    deltas = np.arange(64)
    prof = monte_carlo_score(m, deltas, 200_000, Rng(1))
    closed = expected_score(slash_spectrum(m), deltas, m.rope)
    assert (np.abs(prof.mean - closed) <= 4 * prof.stderr).all()


def test_monte_carlo_shift_and_options():
    rng = np.random.default_rng(5)
    m = GaussianQKModel(rng.standard_normal(4), rng.standard_normal(4), 1.0, np.diag([2.0, 1.0, 0.5, 1.0]))
    deltas = np.arange(8)
    a = monte_carlo_score(m, deltas, 2000, Rng(2), key_position=0)
    b = monte_carlo_score(m, deltas, 2000, Rng(2), key_position=500)
    assert np.allclose(a.mean, b.mean, atol=1e-9)
    ind = monte_carlo_score(m, deltas, 20_000, Rng(3), common_random_numbers=False)
    closed = expected_score(slash_spectrum(m), deltas, m.rope)
    assert (np.abs(ind.mean - closed) <= 5 * ind.stderr).all()
    with pytest.raises(ValueError):
        monte_carlo_score(m, deltas, 999, Rng(0))
    with pytest.raises(ValueError):
        monte_carlo_score(m, [-1], 1000, Rng(0))


def test_model_validation():
    with pytest.raises(ValueError):
        GaussianQKModel(np.zeros(4), np.zeros(6))
    with pytest.raises(ValueError):
        GaussianQKModel(np.zeros(4), np.zeros(4), rope=RopeConfig(8))


def test_plant_offset_zero():
    rope = RopeConfig(16)
    mq, mk = plant_slash_means([0], rope)
    prof = expected_score(slash_spectrum(GaussianQKModel(mq, mk)), np.arange(200), rope)
    assert int(np.argmax(prof)) == 0 and prof[0] == pytest.approx(1.0)


def test_plant_single_plane_period():
    T = 12
    custom = RopeConfig(4, base=(2 * math.pi / T) ** -2)
    th = custom.thetas()
    assert th[1] == pytest.approx(2 * math.pi / T)
    with pytest.warns(UserWarning, match="aliases"):
        mq, mk = plant_slash_means([T], custom, planes=[1])
    prof = expected_score(slash_spectrum(GaussianQKModel(mq, mk, rope=custom)), np.arange(1, 4 * T), custom)
    peaks = [d for d in range(1, 4 * T) if prof[d - 1] >= prof.max() - 1e-12]
    assert peaks == [T, 2 * T, 3 * T]


def test_plant_zero_strength_and_warning():
    rope = RopeConfig(8)
    mq, mk = plant_slash_means([5], rope, strength=0.0)
    assert not mq.any() and not mk.any()
    with pytest.warns(UserWarning, match="period"):
        plant_slash_means([100_000], RopeConfig(8), planes=[0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        plant_slash_means([3], RopeConfig(8))


def test_plant_targets_multiple_offsets():
    rope = RopeConfig(32)
    mq, mk = plant_slash_means([0, 24, 64], rope, [10.0, 8.0, 8.0], planes=range(15))
    prof = expected_score(slash_spectrum(GaussianQKModel(mq, mk, rope=rope)), np.arange(120), rope)
    for t in (24, 64):
        window = prof[t - 6 : t + 7]
        assert abs(int(np.argmax(window)) - 6) <= 1
