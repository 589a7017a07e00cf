"""Empirical checks of the asymptotic theory: convergence-rate probes and
plug-in bandwidth comparisons against the AMSE formula."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from circreg.bandwidth import AsymptoticInputs, amse_local, h_opt_local
from circreg.circfit import CircularFit
from circreg.core import angular_difference
from circreg.errors import IndefiniteCurvatureError, InvalidInputError, ProbeInvalidError
from circreg.kernels import KernelSpec
from circreg.localpoly import BandwidthMatrix, LocalFitSpec
from circreg.simulate import (
    RegressionModel,
    StudyConfig,
    VonMisesMoments,
    generate_sample,
    regular_grid,
    replicate_rng,
    run_study,
    von_mises_moments,
)

# interior evaluation points keep this many kernel radii away from the boundary
BOUNDARY_MARGIN = 1.5


def bias_order(degree: int) -> int:
    """Power of h in the leading interior bias (2 for p = 0, 1; 4 for p = 2, 3)."""
    return 2 * (degree // 2 + 1)


def bandwidth_exponent(degree: int, d: int) -> float:
    """Exponent ``e`` of the MSE-balancing schedule ``h = c * n^e``."""
    if d > 1 and degree > 1:
        raise InvalidInputError("multivariate fits support degree 0 or 1 only")
    return -1.0 / (2 * bias_order(degree) + d)


def interior_points(margin: float, d: int, per_axis: int = 10) -> np.ndarray:
    if not 0 <= margin < 0.5:
        raise InvalidInputError(f"boundary margin {margin:.3f} leaves no interior region")
    return regular_grid(per_axis, d, margin, 1.0 - margin)


@dataclass
class RateProbeResult:
    sample_sizes: list[int]
    bandwidths: list[float]
    empirical_mse: list[float]  # mean squared angular error over interior points
    empirical_cmse: list[float]  # mean 1 - cos error over interior points
    fitted_log_slope: float
    predicted_amse: list[float] | None = None

    def rows(self):
        pred = self.predicted_amse or [float("nan")] * len(self.sample_sizes)
        return list(zip(self.sample_sizes, self.empirical_mse, pred))


def rate_probe(
    template: StudyConfig,
    sample_sizes,
    degree: int,
    replicates: int,
    constant: float = 0.5,
    eval_points=None,
    inputs: AsymptoticInputs | None = None,
    workers: int = 1,
    measure: str = "case",
) -> RateProbeResult:
    """Fit the log-log slope of interior error against n under ``h = c * n^e``.

    ``e`` is ``-1/(d+4)`` for p <= 1 and ``-1/9`` for univariate p in {2, 3}.
    Errors are averaged over a fixed set of interior points shared by every n.
    ``measure`` selects the error fitted: ``"case"`` (mean ``1 - cos``) or
    ``"squared"`` (mean squared wrapped angular difference).
    """
    if measure not in ("case", "squared"):
        raise InvalidInputError("measure must be 'case' or 'squared'")
    sizes = [int(n) for n in sample_sizes]
    if len(sizes) < 3 or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidInputError("need at least 3 strictly increasing sample sizes")
    d = template.model.dimension
    e = bandwidth_exponent(degree, d)
    hs = [constant * n**e for n in sizes]
    if eval_points is None:
        eval_points = interior_points(BOUNDARY_MARGIN * max(hs), d)
    eval_points = np.asarray(eval_points, dtype=float).reshape(-1, d)

    mse, cmse, predicted = [], [], []
    for n, h in zip(sizes, hs):
        H = BandwidthMatrix.scalar(h, d)
        cfg = dataclasses.replace(
            template, n=n, degree=degree, bandwidth=H, replicates=replicates,
            eval_points=eval_points, eval_grid=0,
        )
        report = run_study(cfg, workers=workers)
        pw = report.pointwise
        mse.append(float(np.nanmean(pw.sq_error)))
        cmse.append(float(np.nanmean(pw.cmse)))
        if inputs is not None:
            est = "nw" if degree == 0 else "ll"
            at_n = dataclasses.replace(inputs, n=n)
            predicted.append(float(np.mean([amse_local(at_n, x, H, est) for x in eval_points])))
    err = np.array(cmse if measure == "case" else mse)
    if not np.all(err > 1e-14):
        raise ProbeInvalidError("empirical error vanished at some sample size")
    slope = float(np.polyfit(np.log(sizes), np.log(err), 1)[0])
    return RateProbeResult(sizes, hs, mse, cmse, slope, predicted or None)


def model_inputs(
    model: RegressionModel,
    n: int,
    moments: VonMisesMoments | float,
    kernel: KernelSpec | None = None,
) -> AsymptoticInputs:
    """Asymptotic inputs for a uniform design on the unit cube with i.i.d. von Mises errors.

    ``moments`` may be a concentration, in which case the moments come from
    :func:`von_mises_moments`.
    """
    if model.derivatives is None:
        raise InvalidInputError(f"model {model.name} has no analytic derivatives")
    if not isinstance(moments, VonMisesMoments):
        moments = von_mises_moments(float(moments))
    d = model.dimension
    kernel = kernel or KernelSpec("epanechnikov", d)
    zero = np.zeros(d)
    return AsymptoticInputs(
        grad_m=lambda x: model.derivatives(x)[0],
        hess_m=lambda x: model.derivatives(x)[1],
        f=lambda x: 1.0,
        grad_f=lambda x: zero,
        ell=lambda x: moments.ell,
        grad_ell=lambda x: zero,
        sigma1_sq=lambda x: moments.sigma1_sq,
        n=n,
        kernel=kernel,
    )


@dataclass
class PluginComparison:
    points: np.ndarray
    bandwidths: list[np.ndarray]
    empirical_mse: np.ndarray
    predicted_amse: np.ndarray

    @property
    def ratio(self) -> float:
        """Mean empirical MSE over mean predicted AMSE."""
        return float(np.mean(self.empirical_mse) / np.mean(self.predicted_amse))


def plugin_comparison(
    template: StudyConfig,
    inputs: AsymptoticInputs,
    points,
    replicates: int,
    estimator: str = "ll",
) -> PluginComparison:
    """Empirical MSE with the optimal local bandwidth at each point versus the AMSE formula.

    Points where the bias matrix is indefinite are skipped.
    """
    degree = 0 if estimator == "nw" else 1
    d = template.model.dimension
    kept, Hs, pred = [], [], []
    for x in np.asarray(points, dtype=float).reshape(-1, d):
        try:
            H = h_opt_local(inputs, x, estimator)
        except IndefiniteCurvatureError:
            continue
        kept.append(x)
        Hs.append(H)
        pred.append(amse_local(inputs, x, H, estimator))
    if not kept:
        raise InvalidInputError("no evaluation point has a definite bias matrix")
    kept = np.array(kept)
    truth = template.model(kept)
    sq = np.zeros(len(kept))
    cfg = dataclasses.replace(template, n=inputs.n)
    kernel = cfg.kernel_spec
    for r in range(replicates):
        data = generate_sample(cfg, replicate_rng(cfg.seed, r))
        for i, (x, H) in enumerate(zip(kept, Hs)):
            pred_i = CircularFit(data, LocalFitSpec(degree, kernel, H)).predict(x[None, :])
            diff = angular_difference(pred_i.direction[0], truth[i])
            sq[i] += diff * diff if np.isfinite(diff) else np.pi**2
    return PluginComparison(kept, [H.matrix for H in Hs], sq / replicates, np.array(pred))
