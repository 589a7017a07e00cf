import numpy as np
import pytest

from circreg.optim import nelder_mead


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


class TestNelderMead:
    def test_quadratic(self):
        res = nelder_mead(lambda x: np.sum((x - [1.0, -2.0, 0.5]) ** 2), np.zeros(3), 0.5, tol=1e-14)
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, -2.0, 0.5], atol=1e-5)

    def test_rosenbrock(self):
        res = nelder_mead(rosenbrock, [-1.2, 1.0], 0.2, tol=1e-14, max_iterations=2000)
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-4)

    def test_zero_iterations_returns_start(self):
        res = nelder_mead(rosenbrock, [-1.2, 1.0], 0.2, max_iterations=0)
        np.testing.assert_array_equal(res.x, [-1.2, 1.0])
        assert res.iterations == 0 and res.evaluations == 1

    def test_never_worse_than_start(self, rng):
        for _ in range(10):
            x0 = rng.normal(size=2)
            res = nelder_mead(rosenbrock, x0, 0.3, max_iterations=5)
            assert res.fun <= rosenbrock(x0)

    def test_deterministic(self):
        a = nelder_mead(rosenbrock, [0.0, 0.0], 0.1, max_iterations=50)
        b = nelder_mead(rosenbrock, [0.0, 0.0], 0.1, max_iterations=50)
        assert a.fun == b.fun and np.array_equal(a.x, b.x)

    def test_iteration_cap(self):
        res = nelder_mead(rosenbrock, [-1.2, 1.0], 0.2, tol=0.0 + 1e-300, max_iterations=7)
        assert res.iterations == 7 and not res.converged

    def test_flat_function_converges_immediately(self):
        res = nelder_mead(lambda x: 3.0, [1.0, 2.0], 1.0)
        assert res.converged and res.iterations == 0
        assert res.fun == pytest.approx(3.0)
