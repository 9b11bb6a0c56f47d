import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmc_eig.random_fields import (Constant, FieldConfig, StreamField, check_sample,
                                    eval_kappa, eval_velocity, grid_centers)

# mpmath, 30 digits: exp(sum_i exp(-12.5 |x - c_i|)) at x = (0.5, 0.5), all-ones sample
KAPPA_ALL_ONES_CENTRE = 3.4542306231728475045


def test_grid_centers_5x5():
    c = grid_centers(5)
    assert c.shape == (25, 2)
    assert set(np.unique(c)) == {0.0, 0.25, 0.5, 0.75, 1.0}


def test_kappa_zero_sample_is_one():
    cfg = FieldConfig()
    pts = np.random.default_rng(0).random((10, 2))
    np.testing.assert_array_equal(eval_kappa(cfg, np.zeros(25), pts), 1.0)


def test_kappa_at_own_centre():
    cfg = FieldConfig()
    w = np.zeros(25)
    w[0] = 1.0
    assert eval_kappa(cfg, w, cfg.centers[0]) == pytest.approx(math.e, rel=1e-15)


def test_kappa_all_ones_centre_oracle():
    assert eval_kappa(FieldConfig(), np.ones(25), [0.5, 0.5]) == pytest.approx(
        KAPPA_ALL_ONES_CENTRE, rel=1e-14)


def test_kappa_bounds():
    cfg = FieldConfig()
    rng = np.random.default_rng(3)
    k = eval_kappa(cfg, rng.random(25), rng.random((200, 2)))
    assert np.all(k >= 1.0) and np.all(k <= math.exp(25))


def test_constant_velocity():
    cfg = FieldConfig(velocity=Constant(20.0, 0.0))
    np.testing.assert_array_equal(eval_velocity(cfg, np.random.default_rng(0).random(25),
                                                [0.3, 0.7]), [20.0, 0.0])


def test_stream_zero_block_gives_zero_velocity():
    cfg = FieldConfig(velocity=StreamField())
    w = np.concatenate([np.random.default_rng(0).random(25), np.zeros(25)])
    v = eval_velocity(cfg, w, np.random.default_rng(1).random((20, 2)))
    np.testing.assert_array_equal(v, 0.0)


def _stream_fd(cfg, w, x, h=1e-6):
    def S(p):
        vel = cfg.velocity
        r = np.linalg.norm(p - vel.centers, axis=1)
        return math.exp(float(np.exp(-vel.decay * r) @ w[cfg.s_kappa:]))
    x = np.asarray(x, dtype=float)
    dx = (S(x + [h, 0]) - S(x - [h, 0])) / (2 * h)
    dy = (S(x + [0, h]) - S(x - [0, h])) / (2 * h)
    return np.array([dy, -dx])


def test_stream_single_centre_horizontal_line():
    cfg = FieldConfig(centers=np.zeros((0, 2)),
                      velocity=StreamField(centers=np.array([[0.5, 0.5]])))
    x = [0.3, 0.5]
    v = eval_velocity(cfg, [1.0], x)
    assert v[0] == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(v, _stream_fd(cfg, np.array([1.0]), x), rtol=1e-6, atol=1e-9)


def test_stream_gradient_matches_finite_differences():
    cfg = FieldConfig(velocity=StreamField())
    rng = np.random.default_rng(5)
    w = rng.random(50)
    for x in rng.uniform(0.05, 0.95, (10, 2)):
        np.testing.assert_allclose(eval_velocity(cfg, w, x), _stream_fd(cfg, w, x),
                                   rtol=1e-6, atol=1e-6)


def test_stream_divergence_free():
    cfg = FieldConfig(velocity=StreamField())
    rng = np.random.default_rng(7)
    w = rng.random(50)
    h = 1e-5
    centers = cfg.velocity.centers
    for x in rng.uniform(0.02, 0.98, (100, 2)):
        if np.min(np.linalg.norm(centers - x, axis=1)) < 0.02:
            continue
        a = eval_velocity(cfg, w, x)
        div = ((eval_velocity(cfg, w, x + [h, 0])[0] - eval_velocity(cfg, w, x - [h, 0])[0])
               + (eval_velocity(cfg, w, x + [0, h])[1] - eval_velocity(cfg, w, x - [0, h])[1])
               ) / (2 * h)
        assert abs(div) <= 1e-4 * max(np.linalg.norm(a), 1.0)


def test_stream_rejects_kernel_centre():
    cfg = FieldConfig(velocity=StreamField())
    with pytest.raises(ValueError):
        eval_velocity(cfg, np.ones(50), [0.5, 0.5])


def test_config_validation():
    with pytest.raises(ValueError):
        FieldConfig(centers=[[1.5, 0.0]])
    with pytest.raises(ValueError):
        FieldConfig(decay=0.0)
    cfg = FieldConfig(velocity=StreamField(centers=grid_centers(3)))
    assert (cfg.s_kappa, cfg.s_a, cfg.s) == (25, 9, 34)
    with pytest.raises(ValueError):
        check_sample(cfg, np.zeros(5))
    with pytest.raises(ValueError):
        check_sample(cfg, np.full(34, 1.5))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=25, max_size=25),
       st.floats(0, 1), st.floats(0, 1))
def test_kappa_deterministic_and_positive(w, x, y):
    cfg = FieldConfig()
    a = eval_kappa(cfg, w, [x, y])
    b = eval_kappa(cfg, w, [x, y])
    assert a == b and a >= 1.0
