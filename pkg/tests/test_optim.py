import numpy as np
import pytest

from driftcal.optim import minimize


def quadratic(center, scales):
    center = np.asarray(center, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)

    def fun_grad(x):
        d = x - center
        return float(np.sum(scales * d * d)), 2.0 * scales * d

    return fun_grad


def test_quadratic_minimum_found():
    res = minimize(quadratic([3.0, -2.0, 0.5], [1.0, 10.0, 0.1]), np.zeros(3))
    assert res.converged
    np.testing.assert_allclose(res.x, [3.0, -2.0, 0.5], atol=1e-5)
    assert res.final_loss <= res.initial_loss


def test_monotone_decrease_contract():
    res = minimize(quadratic([1.0], [4.0]), np.array([10.0]))
    assert res.final_loss <= res.initial_loss + 1e-9


def test_projection_respected():
    # constrained minimum of (x-3)^2 with x <= 1 is at the boundary
    def project(x):
        return np.minimum(x, 1.0)

    res = minimize(quadratic([3.0], [1.0]), np.array([0.0]), project=project)
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)


def test_projection_applied_to_start():
    def project(x):
        return np.maximum(x, 2.0)

    res = minimize(quadratic([5.0], [1.0]), np.array([-10.0]), project=project)
    assert res.x[0] == pytest.approx(5.0, abs=1e-6)


def test_rosenbrock_like_nonconvex():
    def fun_grad(x):
        a, b = 1.0, 100.0
        f = (a - x[0]) ** 2 + b * (x[1] - x[0] ** 2) ** 2
        g = np.array(
            [
                -2 * (a - x[0]) - 4 * b * x[0] * (x[1] - x[0] ** 2),
                2 * b * (x[1] - x[0] ** 2),
            ]
        )
        return float(f), g

    res = minimize(fun_grad, np.array([-1.2, 1.0]), max_iter=2000)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-4)


def test_iteration_cap_reported_as_not_converged():
    res = minimize(quadratic([50.0, -30.0], [1.0, 1.0]), np.zeros(2), max_iter=2)
    assert not res.converged
    assert res.iterations == 2


def test_zero_gradient_at_start():
    res = minimize(quadratic([0.0], [1.0]), np.array([0.0]))
    assert res.converged
    assert res.iterations == 0
