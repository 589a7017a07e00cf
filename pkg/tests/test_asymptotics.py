import numpy as np
import pytest

from circreg.asymptotics import (
    bandwidth_exponent,
    bias_order,
    interior_points,
    model_inputs,
    plugin_comparison,
    rate_probe,
)
from circreg.bandwidth import amse_local, h_opt_local
from circreg.errors import InvalidInputError, ProbeInvalidError
from circreg.simulate import MODELS, RegressionModel, StudyConfig, von_mises_moments
from oracles import von_mises_sine_moments

TEMPLATE = StudyConfig(model="M1", n=64, kappa=5.0, replicates=1, seed=1)


def definite_points(model, count, rng, low=0.1, high=0.9):
    """Random points where the Hessian of ``model`` is definite."""
    out = []
    while len(out) < count:
        x = rng.uniform(low, high, 2)
        ev = np.linalg.eigvalsh(model.derivatives(x)[1])
        if ev[0] * ev[1] > 0:
            out.append(x)
    return np.array(out)


class TestSchedule:
    def test_orders(self):
        assert [bias_order(p) for p in range(4)] == [2, 2, 4, 4]
        assert bandwidth_exponent(1, 2) == pytest.approx(-1 / 6)
        assert bandwidth_exponent(0, 1) == pytest.approx(-1 / 5)
        assert bandwidth_exponent(3, 1) == pytest.approx(-1 / 9)

    def test_multivariate_high_degree(self):
        with pytest.raises(InvalidInputError):
            bandwidth_exponent(2, 2)

    def test_interior_points(self):
        P = interior_points(0.2, 2, per_axis=4)
        assert P.shape == (16, 2) and P.min() == pytest.approx(0.2) and P.max() == pytest.approx(0.8)
        with pytest.raises(InvalidInputError):
            interior_points(0.6, 2)


class TestRateProbe:
    def test_needs_increasing_sizes(self):
        with pytest.raises(InvalidInputError):
            rate_probe(TEMPLATE, [64, 225], 1, 2)
        with pytest.raises(InvalidInputError):
            rate_probe(TEMPLATE, [225, 64, 400], 1, 2)

    def test_degenerate_truth(self):
        flat = RegressionModel("flat", 2, lambda X: np.full(X.shape[0], 0.7))
        template = StudyConfig(model=flat, n=64, kappa=np.inf, replicates=1)
        with pytest.raises(ProbeInvalidError):
            rate_probe(template, [64, 225, 400], 1, 2)

    def test_result_shape(self):
        r = rate_probe(TEMPLATE, [64, 100, 225], 1, 3, inputs=model_inputs(MODELS["M1"], 64, 5.0))
        assert r.sample_sizes == [64, 100, 225]
        assert r.bandwidths == pytest.approx([0.5 * n ** (-1 / 6) for n in (64, 100, 225)])
        assert all(e > 0 for e in r.empirical_mse)
        assert len(r.rows()) == 3 and all(p > 0 for p in r.predicted_amse)
        squared = rate_probe(TEMPLATE, [64, 100, 225], 1, 3, measure="squared")
        assert squared.empirical_mse == r.empirical_mse

    def test_slope_stable_under_more_replicates(self):
        a = rate_probe(TEMPLATE, [64, 225, 400], 1, 15).fitted_log_slope
        b = rate_probe(TEMPLATE, [64, 225, 400], 1, 30).fitted_log_slope
        assert a < 0 and b < 0
        assert abs(a - b) <= 0.15


class TestPluginInputs:
    def test_von_mises_moments_feed_inputs(self):
        inp = model_inputs(MODELS["M1"], 100, 5.0)
        ell, s1, _ = von_mises_sine_moments(5.0)
        x = np.array([0.2, 0.5])
        assert inp.ell(x) == pytest.approx(ell, rel=1e-12)
        assert inp.sigma1_sq(x) == pytest.approx(s1, rel=1e-12)
        np.testing.assert_array_equal(inp.hess_m(x), MODELS["M1"].derivatives(x)[1])

    def test_needs_derivatives(self):
        with pytest.raises(InvalidInputError):
            model_inputs(RegressionModel("x", 2, lambda X: X[:, 0]), 10, 1.0)

    def test_bracket_on_m1(self, rng):
        inp = model_inputs(MODELS["M1"], 225, von_mises_moments(5.0))
        for x in definite_points(MODELS["M1"], 10, rng):
            for est in ("nw", "ll"):
                H = h_opt_local(inp, x, est)
                best = amse_local(inp, x, H, est)
                assert best <= amse_local(inp, x, 0.5 * H.matrix, est) * (1 + 1e-9)
                assert best <= amse_local(inp, x, 2.0 * H.matrix, est) * (1 + 1e-9)

    def test_indefinite_points_skipped(self):
        inp = model_inputs(MODELS["M1"], 400, 5.0)
        with pytest.raises(InvalidInputError):
            plugin_comparison(TEMPLATE, inp, [[0.6, 0.5]], 2)


@pytest.mark.slow
def test_plugin_mse_within_factor_three(rng):
    model = MODELS["M1"]
    inp = model_inputs(model, 400, 5.0)
    pts = definite_points(model, 10, rng, low=0.15, high=0.85)
    cfg = StudyConfig(model="M1", n=400, kappa=5.0, replicates=1, seed=4)
    result = plugin_comparison(cfg, inp, pts, 100)
    assert 1 / 3 <= result.ratio <= 3
