import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csph.optimize import lbfgs, two_loop_direction


def rosenbrock(x):
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


def rosenbrock_grad(x):
    g = np.zeros_like(x)
    g[:-1] = -400 * x[:-1] * (x[1:] - x[:-1] ** 2) - 2 * (1 - x[:-1])
    g[1:] += 200 * (x[1:] - x[:-1] ** 2)
    return g


@pytest.mark.parametrize("n", [2, 5, 10])
def test_rosenbrock(n):
    x0 = np.full(n, -1.2)
    x0[1::2] = 1.0
    res = lbfgs(rosenbrock, rosenbrock_grad, x0, gtol=1e-8, ftol=0.0)
    assert res.converged, res.message
    np.testing.assert_allclose(res.x, 1.0, atol=1e-6)
    assert res.iterations < 200


def test_quadratic_exact_direction():
    # with one exact curvature pair on a 1-D quadratic the direction is Newton's
    g = np.array([4.0])
    s, y = np.array([1.0]), np.array([2.0])
    np.testing.assert_allclose(two_loop_direction(g, [s], [y]), [-2.0])


def test_empty_memory_is_steepest_descent():
    g = np.array([1.0, -2.0])
    np.testing.assert_array_equal(two_loop_direction(g, [], []), -g)


@settings(max_examples=30, deadline=None)
@given(arrays(float, 4, elements=st.floats(-5, 5)), st.integers(0, 2**31))
def test_convex_quadratic(x0, seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(4, 4))
    A = B @ B.T + np.eye(4)
    b = rng.normal(size=4)
    res = lbfgs(lambda x: 0.5 * x @ A @ x - b @ x, lambda x: A @ x - b, x0, gtol=1e-10, ftol=0.0)
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-8)


def test_objective_never_increases():
    x0 = np.array([-1.2, 1.0, -1.2, 1.0])
    res = lbfgs(rosenbrock, rosenbrock_grad, x0)
    vals = [f for _, f in res.trace]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_callback_and_counts():
    seen = []
    res = lbfgs(rosenbrock, rosenbrock_grad, np.array([0.0, 0.0]), callback=lambda i, x, f: seen.append(i))
    assert seen == list(range(1, res.iterations + 1))
    assert res.n_grad <= res.n_fun + 1


def test_non_finite_start():
    res = lbfgs(lambda x: np.inf, lambda x: np.zeros_like(x), np.zeros(2))
    assert not res.converged and "non-finite" in res.message


def test_iteration_limit():
    res = lbfgs(rosenbrock, rosenbrock_grad, np.array([-1.2, 1.0]), max_iter=3, ftol=0.0)
    assert res.iterations == 3 and not res.converged
