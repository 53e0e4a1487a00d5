import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lora_alloc.mobility import MobilityConfig, gauss_markov_step, gauss_markov_update
from lora_alloc.sim import EndDevice

from oracles import gauss_markov_oracle


def _arrays(n, x=0.0, y=0.0, v=5.0, h=0.3, mv=5.0, sv=2.0, mh=0.3, sh=0.4):
    return [np.full(n, float(val)) for val in (x, y, v, h, mv, sv, mh, sh)]


def test_alpha_one_keeps_velocity_and_heading():
    x, y, v, h, mv, sv, mh, sh = _arrays(3, v=7.0, h=1.0, mv=30.0, mh=-2.0)
    noise = np.random.default_rng(0).standard_normal((2, 3))
    gauss_markov_update(x, y, v, h, mv, sv, mh, sh, 1.0, 60.0, 4500.0, noise)
    assert np.all(v == 7.0) and np.all(h == 1.0)
    travel = 7.0 / 3.6 * 60.0
    np.testing.assert_allclose(x, travel * np.cos(1.0))
    np.testing.assert_allclose(y, travel * np.sin(1.0))


def test_alpha_zero_without_noise_jumps_to_mean():
    x, y, v, h, mv, sv, mh, sh = _arrays(2, v=1.0, h=0.0, mv=12.0, sv=0.0, mh=0.7, sh=0.0)
    gauss_markov_update(x, y, v, h, mv, sv, mh, sh, 0.0, 10.0, 4500.0, np.ones((2, 2)))
    np.testing.assert_allclose(v, 12.0)
    np.testing.assert_allclose(h, 0.7)


def test_trace_matches_oracle_inside_disc():
    rng = np.random.default_rng(3)
    noise = rng.standard_normal((20, 2))
    x, y, v, h, mv, sv, mh, sh = _arrays(1, v=5.0, h=0.2, mv=5.0, sv=3.0, mh=0.2, sh=0.4)
    expected = gauss_markov_oracle(0.0, 0.0, 5.0, 0.2, 5.0, 3.0, 0.2, 0.4, 0.75, 60.0, noise.tolist())
    for k in range(20):
        gauss_markov_update(x, y, v, h, mv, sv, mh, sh, 0.75, 60.0, 1e9, noise[k].reshape(2, 1))
        np.testing.assert_allclose([x[0], y[0], v[0], h[0]], expected[k], rtol=1e-12, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 200.0), st.floats(1.0, 600.0))
def test_positions_stay_in_cell(seed, alpha, speed, step):
    rng = np.random.default_rng(seed)
    n = 25
    r = 4500.0 * np.sqrt(rng.random(n))
    t = rng.uniform(0, 2 * np.pi, n)
    x, y = r * np.cos(t), r * np.sin(t)
    v = np.full(n, speed)
    h = rng.uniform(-np.pi, np.pi, n)
    mv, sv, mh, sh = np.full(n, speed), np.full(n, speed / 3), h.copy(), np.full(n, 0.4)
    for _ in range(30):
        gauss_markov_update(x, y, v, h, mv, sv, mh, sh, alpha, step, 4500.0, rng.standard_normal((2, n)))
        assert np.all(np.hypot(x, y) <= 4500.0 * (1 + 1e-9))


def test_single_device_step_stays_in_cell():
    ed = EndDevice(0, 4400.0, 0.0, velocity_kmh=100.0, mean_velocity_kmh=100.0, velocity_sigma=1.0,
                   heading_sigma=0.1)
    rng = np.random.default_rng(1)
    for _ in range(50):
        gauss_markov_step(ed, 0.75, 60.0, rng, 4500.0)
        assert ed.distance_m <= 4500.0 * (1 + 1e-9)


@pytest.mark.parametrize("kwargs", [{"model": "levy"}, {"alpha": 1.5}, {"step_s": 0.0}, {"sigma_kmh": -1.0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        MobilityConfig(**kwargs)
