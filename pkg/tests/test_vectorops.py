import numpy as np
import pytest

from tailsim.vectorops import as_vector, axpy, is_finite, l2_norm, project_ball


def test_axpy_examples():
    assert np.array_equal(axpy(2.0, [1.0, 2.0], [0.0, 1.0]), [2.0, 5.0])
    assert np.array_equal(axpy(0.0, [9.0, 9.0], [3.0, 4.0]), [3.0, 4.0])
    assert np.array_equal(axpy(-1.0, [1.0, 1.0], [1.0, 1.0]), [0.0, 0.0])


def test_axpy_leaves_inputs_alone():
    x = as_vector([1.0, 2.0])
    y = as_vector([3.0, 4.0])
    axpy(2.0, x, y)
    assert np.array_equal(x, [1.0, 2.0])
    assert np.array_equal(y, [3.0, 4.0])


def test_axpy_dim_mismatch():
    with pytest.raises(ValueError):
        axpy(1.0, [1.0, 2.0], [1.0])


def test_l2_norm_examples():
    assert l2_norm([3.0, 4.0]) == 5.0
    assert l2_norm([0.0, 0.0, 0.0]) == 0.0
    assert l2_norm([1.0, 1.0, 1.0, 1.0]) == 2.0


def test_project_ball_examples():
    assert np.allclose(project_ball([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)
    assert np.array_equal(project_ball([0.1, 0.1], 1.0), [0.1, 0.1])
    assert np.array_equal(project_ball([0.0, 0.0], 5.0), [0.0, 0.0])


def test_project_ball_rejects_bad_radius():
    with pytest.raises(ValueError):
        project_ball([1.0], 0.0)
    with pytest.raises(ValueError):
        project_ball([1.0], -2.0)


def test_project_ball_idempotent_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(200):
        dim = int(rng.integers(1, 12))
        x = rng.standard_normal(dim) * 10.0 ** rng.integers(-3, 6)
        radius = float(10.0 ** rng.uniform(-3, 3))
        p = project_ball(x, radius)
        again = project_ball(p, radius)
        assert np.array_equal(p, again)
        assert l2_norm(p) <= radius + 1e-12 * radius


def test_l2_norm_triangle_inequality():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((10_000, 6)) * 10.0 ** rng.integers(-2, 4, (10_000, 1))
    y = rng.standard_normal((10_000, 6)) * 10.0 ** rng.integers(-2, 4, (10_000, 1))
    lhs = np.linalg.norm(x + y, axis=1)
    rhs = np.linalg.norm(x, axis=1) + np.linalg.norm(y, axis=1)
    assert np.all(lhs <= rhs * (1 + 1e-12))
    # spot-check a few rows through the scalar API too
    for i in range(0, 10_000, 1111):
        assert l2_norm(x[i] + y[i]) <= l2_norm(x[i]) + l2_norm(y[i]) + 1e-12


def test_is_finite():
    assert is_finite(np.array([1.0, -2.0]))
    assert not is_finite(np.array([1.0, np.nan]))
    assert not is_finite(np.array([np.inf, 0.0]))
