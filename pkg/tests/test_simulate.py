import numpy as np
import pytest

from circreg.bandwidth import CvConfig
from circreg.core import angular_difference, circ_mean_and_resultant
from circreg.errors import DomainError, InvalidInputError, StudyFailedError
from circreg.localpoly import BandwidthMatrix
from circreg.simulate import (
    MODELS,
    RegressionModel,
    StudyConfig,
    design_grid,
    generate_sample,
    metric_case,
    metric_pointwise,
    pointwise_surface,
    regression_truth,
    replicate_rng,
    run_study,
    sample_von_mises,
    von_mises_moments,
)
from oracles import bessel_ratio, numeric_gradient, numeric_hessian, von_mises_sine_moments


class TestVonMises:
    def test_uniform_limit(self, rng):
        draws = sample_von_mises(0.0, 0.0, 100_000, rng)
        assert circ_mean_and_resultant(draws).resultant_length < 0.02

    def test_resultant_length(self, rng):
        draws = sample_von_mises(0.0, 5.0, 100_000, rng)
        assert circ_mean_and_resultant(draws).resultant_length == pytest.approx(bessel_ratio(1, 5.0), abs=0.01)

    def test_location(self, rng):
        draws = sample_von_mises(2.0, 8.0, 20_000, rng)
        assert abs(angular_difference(circ_mean_and_resultant(draws).mean_direction, 2.0)) < 0.02
        assert np.all((draws >= 0) & (draws < 2 * np.pi))

    def test_empty(self, rng):
        assert sample_von_mises(0.0, 3.0, 0, rng).shape == (0,)

    def test_negative_kappa(self, rng):
        with pytest.raises(InvalidInputError):
            sample_von_mises(0.0, -1.0, 5, rng)

    def test_deterministic(self):
        a = sample_von_mises(0.0, 2.0, 50, np.random.default_rng(3))
        b = sample_von_mises(0.0, 2.0, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_second_moment(self, rng):
        draws = sample_von_mises(0.0, 2.0, 200_000, rng)
        assert np.mean(np.cos(2 * draws)) == pytest.approx(bessel_ratio(2, 2.0), abs=0.01)

    @pytest.mark.parametrize("kappa", [0.5, 1.0, 5.0, 15.0, 40.0])
    def test_moments_match_series(self, kappa):
        m = von_mises_moments(kappa)
        ell, s1, s2 = von_mises_sine_moments(kappa)
        assert (m.ell, m.sigma1_sq, m.sigma2_sq) == pytest.approx((ell, s1, s2), rel=1e-10)
        assert m.sigma12 == 0.0

    def test_moments_uniform(self):
        m = von_mises_moments(0.0)
        assert (m.ell, m.sigma1_sq, m.sigma2_sq) == (0.0, 0.5, 0.5)


class TestModels:
    def test_m1_origin(self):
        assert regression_truth("M1", [0.0, 0.0]) == pytest.approx(5 * np.pi / 4)

    def test_m2_corners(self):
        assert regression_truth("M2", [1.0, 0.0]) == pytest.approx(5 * np.pi / 4)
        assert regression_truth("M2", [0.0, 1.0]) == pytest.approx(7 * np.pi / 4)

    def test_m2_domain(self):
        with pytest.raises(DomainError):
            regression_truth("M2", [1.5, 0.0])

    def test_unknown(self):
        with pytest.raises(InvalidInputError):
            regression_truth("M7", [0.0, 0.0])

    @pytest.mark.parametrize("name", ["M1", "M2"])
    def test_derivatives(self, name, rng):
        model = MODELS[name]
        for x0 in rng.uniform(0.1, 0.9, (10, 2)):
            base = regression_truth(model, x0)
            # unwrapped local version of m around x0
            local = lambda x: angular_difference(regression_truth(model, x), base)
            grad, hess = model.derivatives(x0)
            np.testing.assert_allclose(grad, numeric_gradient(local, x0), rtol=1e-6, atol=1e-7)
            np.testing.assert_allclose(hess, numeric_hessian(local, x0), rtol=1e-4, atol=1e-5)


class TestDesign:
    def test_smallest_grid(self):
        X = design_grid(4, 2)
        assert {tuple(r) for r in X} == {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}

    def test_spacing(self):
        X = design_grid(225, 2)
        np.testing.assert_allclose(np.unique(X[:, 0]), np.linspace(0, 1, 15))

    def test_non_square(self):
        with pytest.raises(InvalidInputError):
            StudyConfig(n=50)

    def test_near_noiseless(self):
        cfg = StudyConfig(model="M1", n=64, kappa=1e6, replicates=1)
        data = generate_sample(cfg, replicate_rng(1, 0))
        diff = angular_difference(data.responses, MODELS["M1"](data.covariates))
        assert np.max(np.abs(diff)) < 0.01

    def test_infinite_kappa_is_exact(self):
        cfg = StudyConfig(model="M2", n=16, kappa=np.inf, replicates=1)
        data = generate_sample(cfg, replicate_rng(1, 0))
        np.testing.assert_array_equal(data.responses, MODELS["M2"](data.covariates))

    def test_fixed_seed(self):
        cfg = StudyConfig(n=25, kappa=3.0)
        a = generate_sample(cfg, replicate_rng(9, 4))
        b = generate_sample(cfg, replicate_rng(9, 4))
        np.testing.assert_array_equal(a.responses, b.responses)
        c = generate_sample(cfg, replicate_rng(9, 5))
        assert not np.array_equal(a.responses, c.responses)


class TestMetrics:
    def test_case_examples(self):
        t = np.array([0.1, 2.0, 5.0])
        assert metric_case(t, t) == 0.0
        assert metric_case(t, t + np.pi / 2) == pytest.approx(1.0)
        assert metric_case([0.0, np.pi], [np.pi / 2, np.pi]) == pytest.approx(0.5)

    def test_case_undefined_counts_as_two(self):
        assert metric_case([0.0, 0.0], [0.0, np.nan]) == pytest.approx(1.0)

    def test_case_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            metric_case([0.0, 1.0], [0.0])

    def test_pointwise_exact(self):
        m = metric_pointwise([1.0, 1.0, 1.0], 1.0)
        assert (m.cb, m.cvar, m.cmse) == pytest.approx((0.0, 0.0, 0.0), abs=1e-15)

    def test_pointwise_pure_bias(self):
        m = metric_pointwise([1.3, 1.3], 1.0)
        assert (m.cb, m.cvar, m.cmse) == pytest.approx((np.sin(0.3), 0.0, 1 - np.cos(0.3)), abs=1e-12)

    def test_pointwise_symmetric(self):
        m = metric_pointwise([1.0 + 0.4, 1.0 - 0.4], 1.0)
        assert m.cb == pytest.approx(0.0, abs=1e-12)
        assert m.cvar == pytest.approx(1 - np.cos(0.4), abs=1e-12)
        assert m.cmse == pytest.approx(m.cvar, abs=1e-10)

    def test_pointwise_excludes_undefined(self):
        m = metric_pointwise([1.0, np.nan], 1.0)
        assert m.used == 1 and m.undefined == 1
        assert not metric_pointwise([np.nan], 1.0).defined

    def test_pointwise_bounds(self, rng):
        est = rng.uniform(0, 2 * np.pi, (30, 8))
        cb, cvar, cmse, used = pointwise_surface(est, rng.uniform(0, 2 * np.pi, 8))
        assert np.all(np.abs(cb) <= 1) and np.all(cvar <= 2) and np.all(cmse <= 2)


def fixed_config(**kw):
    base = dict(model="M1", n=64, kappa=1e6, replicates=2, degree=1, bandwidth=BandwidthMatrix.scalar(0.3, 2), seed=5)
    base.update(kw)
    return StudyConfig(**base)


class TestRunStudy:
    def test_near_noiseless_recovery(self):
        report = run_study(fixed_config(replicates=1, bandwidth=BandwidthMatrix.scalar(0.2, 2)))
        assert report.mean_case < 1e-3

    def test_report_consistency(self):
        report = run_study(fixed_config(kappa=4.0, replicates=3, eval_grid=4))
        assert report.mean_case == pytest.approx(np.mean(report.per_replicate_case), abs=1e-12)
        assert all(0 <= c <= 2 for c in report.per_replicate_case)
        assert report.pointwise.cb.shape == (16,)

    def test_deterministic_across_workers(self):
        cfg = StudyConfig(model="M2", n=36, kappa=5.0, replicates=4, degree=0,
                          bandwidth=CvConfig(grid_per_axis=4), seed=11, eval_grid=3)
        a = run_study(cfg, workers=1)
        b = run_study(cfg, workers=3)
        assert a.per_replicate_case == b.per_replicate_case
        np.testing.assert_array_equal(a.pointwise.cmse, b.pointwise.cmse)

    def test_all_replicates_fail(self):
        tiny = fixed_config(bandwidth=CvConfig(matrix_kind="scalar", grid_per_axis=3, grid_span=(1e-9, 1e-8)))
        with pytest.raises(StudyFailedError):
            run_study(tiny)

    def test_custom_model(self):
        model = RegressionModel("tilt", 1, lambda X: 1.0 + X[:, 0])
        cfg = StudyConfig(model=model, n=50, kappa=np.inf, replicates=1, degree=1,
                          bandwidth=BandwidthMatrix.scalar(0.2, 1))
        # sin and cos of a linear angle are not linear, so a small smoothing bias remains
        assert run_study(cfg).mean_case < 1e-8


@pytest.mark.slow
def test_case_decreases_with_sample_size():
    means = []
    for n in (64, 400):
        cfg = StudyConfig(model="M2", n=n, kappa=5.0, replicates=20, degree=0,
                          bandwidth=CvConfig(grid_per_axis=8), seed=3)
        means.append(run_study(cfg).mean_case)
    assert means[1] < means[0]
