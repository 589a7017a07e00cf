"""Monte-Carlo study engine: von Mises errors, test models M1/M2, CASE and
pointwise CB/CVAR/CMSE metrics."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import special

from circreg.bandwidth import CvConfig, select_bandwidth_cv
from circreg.circfit import CircularFit, ObservationSet
from circreg.core import TWO_PI, angular_difference, angular_loss, wrap_angle
from circreg.errors import CircRegError, DomainError, InvalidInputError, StudyFailedError
from circreg.kernels import KernelSpec
from circreg.localpoly import BandwidthMatrix, LocalFitSpec, as_bandwidth

log = logging.getLogger(__name__)


def sample_von_mises(mu: float, kappa: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` angles from vM(mu, kappa) by Best and Fisher's rejection scheme.

    ``kappa = 0`` gives the circular uniform distribution.
    """
    if kappa < 0 or not np.isfinite(kappa):
        raise InvalidInputError("kappa must be finite and nonnegative")
    if count < 0:
        raise InvalidInputError("count must be nonnegative")
    if count == 0:
        return np.empty(0)
    if kappa == 0:
        return rng.uniform(0.0, TWO_PI, count)
    tau = 1.0 + np.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - np.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(count)
    filled = 0
    while filled < count:
        k = count - filled
        u1, u2, u3 = rng.random((3, k))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3 - 0.5) * np.arccos(np.clip(f, -1.0, 1.0))
        got = theta[accept]
        out[filled : filled + got.size] = got
        filled += got.size
    return wrap_angle(out + mu)


@dataclass(frozen=True)
class VonMisesMoments:
    ell: float  # E cos(eps), the mean resultant length
    sigma1_sq: float  # Var sin(eps)
    sigma2_sq: float  # Var cos(eps)
    sigma12: float  # E sin(eps) cos(eps)


def von_mises_moments(kappa: float) -> VonMisesMoments:
    """Sine/cosine moments of vM(0, kappa) from ratios I_k(kappa) / I_0(kappa)."""
    if kappa == 0:
        return VonMisesMoments(0.0, 0.5, 0.5, 0.0)
    i0 = special.ive(0, kappa)
    a1 = special.ive(1, kappa) / i0
    a2 = special.ive(2, kappa) / i0
    return VonMisesMoments(a1, 0.5 * (1.0 - a2), 0.5 * (1.0 + a2) - a1 * a1, 0.0)


# --- regression models -----------------------------------------------------


def _m1(X):
    x1, x2 = X[:, 0], X[:, 1]
    return np.arctan2(6 * x1**5 - 2 * x1**3 - 1, -2 * x2**5 - 3 * x2 - 1)


def _m2(X):
    x1, x2 = X[:, 0], X[:, 1]
    u = x1**5 - 1
    v = x2**3 - x2 + 1
    if np.any(np.abs(u) > 1) or np.any(np.abs(v) > 1):
        raise DomainError("M2 arguments must lie in [-1, 1]; use covariates in the unit square")
    return np.arccos(u) + 1.5 * np.arcsin(v)


def _m1_derivatives(x):
    x1, x2 = x
    a = 6 * x1**5 - 2 * x1**3 - 1
    da = 30 * x1**4 - 6 * x1**2
    dda = 120 * x1**3 - 12 * x1
    b = -2 * x2**5 - 3 * x2 - 1
    db = -10 * x2**4 - 3
    ddb = -40 * x2**3
    r = a * a + b * b
    grad = np.array([da * b / r, -a * db / r])
    h11 = b * (dda * r - 2 * a * da * da) / r**2
    h22 = a * (2 * b * db * db - ddb * r) / r**2
    h12 = da * db * (a * a - b * b) / r**2
    return grad, np.array([[h11, h12], [h12, h22]])


def _m2_derivatives(x):
    x1, x2 = x
    u, du, ddu = x1**5 - 1, 5 * x1**4, 20 * x1**3
    v, dv, ddv = x2**3 - x2 + 1, 3 * x2**2 - 1, 6 * x2
    su, sv = 1 - u * u, 1 - v * v
    g1 = -du / np.sqrt(su)
    g2 = 1.5 * dv / np.sqrt(sv)
    h11 = -ddu / np.sqrt(su) - du * du * u / su**1.5
    h22 = 1.5 * (ddv / np.sqrt(sv) + dv * dv * v / sv**1.5)
    return np.array([g1, g2]), np.array([[h11, 0.0], [0.0, h22]])


@dataclass(frozen=True)
class RegressionModel:
    """A circular regression function ``m(X)`` on ``[0, 1]^d``."""

    name: str
    dimension: int
    func: Callable[[np.ndarray], np.ndarray]
    derivatives: Callable | None = None

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.dimension > 1 else X[:, None]
        if X.shape[1] != self.dimension:
            raise InvalidInputError(f"{self.name} expects {self.dimension} covariates")
        return wrap_angle(np.asarray(self.func(X), dtype=float))


MODELS = {
    "M1": RegressionModel("M1", 2, _m1, _m1_derivatives),
    "M2": RegressionModel("M2", 2, _m2, _m2_derivatives),
}


def get_model(model) -> RegressionModel:
    if isinstance(model, RegressionModel):
        return model
    try:
        return MODELS[str(model).upper()]
    except KeyError:
        raise InvalidInputError(f"unknown model {model!r}; choose from {sorted(MODELS)}") from None


def regression_truth(model, x) -> float:
    """Wrapped value of model M1 or M2 at a single 2-vector ``x``."""
    return float(get_model(model)(np.asarray(x, dtype=float).reshape(1, -1))[0])


def regular_grid(points_per_axis: int, d: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Endpoint-inclusive regular grid with ``points_per_axis ** d`` rows."""
    axis = np.linspace(low, high, points_per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def design_grid(n: int, d: int) -> np.ndarray:
    side = round(n ** (1.0 / d))
    if side**d != n or side < 2:
        raise InvalidInputError(f"n={n} does not form a regular {d}-dimensional grid")
    return regular_grid(side, d)


# --- study configuration -------------------------------------------------------

Bandwidth = Union[CvConfig, BandwidthMatrix]


@dataclass(frozen=True)
class StudyConfig:
    model: object = "M1"
    n: int = 225
    kappa: float = 5.0
    replicates: int = 100
    degree: int = 1
    bandwidth: object = field(default_factory=CvConfig)
    seed: int = 0
    eval_grid: int = 0  # points per axis of the pointwise-metric grid; 0 disables
    eval_points: np.ndarray | None = field(default=None, repr=False, compare=False)
    kernel: str = "epanechnikov"

    def __post_init__(self):
        model = get_model(self.model)
        object.__setattr__(self, "model", model)
        if self.replicates < 1:
            raise InvalidInputError("replicates must be at least 1")
        if self.kappa < 0:
            raise InvalidInputError("kappa must be nonnegative")
        design_grid(self.n, model.dimension)
        if not isinstance(self.bandwidth, CvConfig):
            object.__setattr__(self, "bandwidth", as_bandwidth(self.bandwidth, model.dimension))
        LocalFitSpec(self.degree, self.kernel_spec, BandwidthMatrix.scalar(1.0, model.dimension))

    @property
    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.model.dimension)

    def evaluation_points(self) -> np.ndarray | None:
        if self.eval_points is not None:
            return np.asarray(self.eval_points, dtype=float).reshape(-1, self.model.dimension)
        if self.eval_grid:
            return regular_grid(self.eval_grid, self.model.dimension)
        return None


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent generator for one replicate, keyed by (seed, replicate index)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replicate),)))


def generate_sample(config: StudyConfig, rng: np.random.Generator) -> ObservationSet:
    """Regular-grid design with responses ``m(X) + eps``, eps ~ vM(0, kappa).

    ``kappa = inf`` gives noiseless responses.
    """
    X = design_grid(config.n, config.model.dimension)
    if np.isinf(config.kappa):
        eps = np.zeros(config.n)
    else:
        eps = sample_von_mises(0.0, config.kappa, config.n, rng)
    return ObservationSet(X, wrap_angle(config.model(X) + eps))


# --- metrics ----------------------------------------------------------------


def metric_case(truth, estimates) -> float:
    """Circular average squared error; undefined (NaN) estimates count as loss 2."""
    truth = np.asarray(truth, dtype=float).ravel()
    est = np.asarray(estimates, dtype=float).ravel()
    if truth.shape != est.shape or truth.size == 0:
        raise InvalidInputError("truth and estimates must be nonempty and of equal length")
    loss = np.full(truth.size, 2.0)
    ok = np.isfinite(est)
    loss[ok] = angular_loss(truth[ok], est[ok])
    return float(loss.mean())


@dataclass(frozen=True)
class PointwiseMetrics:
    cb: float
    cvar: float
    cmse: float
    used: int
    undefined: int

    @property
    def defined(self) -> bool:
        return self.used > 0


def pointwise_surface(replicate_estimates, truth):
    """CB, CVAR and CMSE at each column of a (replicates, m) estimate array.

    NaN estimates are excluded. Returns arrays ``cb, cvar, cmse, used``;
    metrics are NaN where no replicate is defined.
    """
    est = np.atleast_2d(np.asarray(replicate_estimates, dtype=float))
    truth = np.broadcast_to(np.asarray(truth, dtype=float), est.shape[1:])
    ok = np.isfinite(est)
    used = ok.sum(axis=0)
    safe = np.where(ok, est, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cb = np.where(ok, np.sin(safe - truth), 0.0).sum(axis=0) / used
        cmse = np.where(ok, 1.0 - np.cos(truth - safe), 0.0).sum(axis=0) / used
        s = np.where(ok, np.sin(safe), 0.0).sum(axis=0) / used
        c = np.where(ok, np.cos(safe), 0.0).sum(axis=0) / used
        mu = np.arctan2(s, c)
        cvar = np.where(ok, 1.0 - np.cos(safe - mu), 0.0).sum(axis=0) / used
    # zero resultant: the mean direction is undefined and the spread is maximal
    cvar = np.where(np.hypot(s, c) < 1e-14, 1.0, cvar)
    none = used == 0
    for arr in (cb, cvar, cmse):
        arr[none] = np.nan
    return cb, cvar, cmse, used


def metric_pointwise(replicate_estimates, truth) -> PointwiseMetrics:
    """Circular bias, variance and MSE at one point across replicates."""
    est = np.asarray(replicate_estimates, dtype=float).ravel()
    if est.size == 0:
        raise InvalidInputError("need at least one replicate estimate")
    cb, cvar, cmse, used = pointwise_surface(est[:, None], float(truth))
    return PointwiseMetrics(float(cb[0]), float(cvar[0]), float(cmse[0]), int(used[0]), est.size - int(used[0]))


# --- study runner -------------------------------------------------------------


@dataclass
class ReplicateOutcome:
    index: int
    case: float
    undefined: int
    bandwidth: np.ndarray | None
    eval_estimates: np.ndarray | None
    error: str | None = None


@dataclass
class PointwiseReport:
    points: np.ndarray
    truth: np.ndarray
    cb: np.ndarray
    cvar: np.ndarray
    cmse: np.ndarray
    used: np.ndarray
    mean_direction: np.ndarray
    sq_error: np.ndarray  # mean squared wrapped angular error


@dataclass
class StudyReport:
    config: StudyConfig
    mean_case: float
    per_replicate_case: list[float]
    replicates: list[ReplicateOutcome] = field(repr=False)
    pointwise: PointwiseReport | None = field(default=None, repr=False)

    @property
    def failures(self) -> int:
        return sum(r.error is not None for r in self.replicates)


def run_replicate(config: StudyConfig, index: int, eval_points=None) -> ReplicateOutcome:
    rng = replicate_rng(config.seed, index)
    data = generate_sample(config, rng)
    kernel = config.kernel_spec
    try:
        if isinstance(config.bandwidth, CvConfig):
            H = select_bandwidth_cv(data, config.degree, kernel, config.bandwidth)
        else:
            H = config.bandwidth
        fit = CircularFit(data, LocalFitSpec(config.degree, kernel, H))
        pred = fit.predict(data.covariates)
    except CircRegError as exc:
        log.warning("replicate %d failed: %s", index, exc)
        return ReplicateOutcome(index, float("nan"), config.n, None, None, str(exc))
    truth = config.model(data.covariates)
    case = metric_case(truth, pred.direction)
    eval_est = fit.predict(eval_points).direction if eval_points is not None else None
    return ReplicateOutcome(index, case, int((~pred.stable).sum()), H.matrix.copy(), eval_est)


def run_study(config: StudyConfig, workers: int = 1) -> StudyReport:
    """Run every replicate and aggregate CASE and optional pointwise metrics.

    Replicate ``r`` draws from its own seeded stream, so results do not
    depend on ``workers`` or on execution order.
    """
    eval_points = config.evaluation_points()
    indices = range(config.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda i: run_replicate(config, i, eval_points), indices))
    else:
        outcomes = [run_replicate(config, i, eval_points) for i in indices]
    good = [o for o in outcomes if o.error is None]
    if not good:
        raise StudyFailedError(f"all {config.replicates} replicates failed: {outcomes[0].error}")
    cases = [o.case for o in outcomes]
    mean_case = float(np.mean([o.case for o in good]))
    pointwise = None
    if eval_points is not None:
        est = np.vstack([o.eval_estimates for o in good])
        truth = config.model(eval_points)
        cb, cvar, cmse, used = pointwise_surface(est, truth)
        ok = np.isfinite(est)
        safe = np.where(ok, est, 0.0)
        diff = np.where(ok, angular_difference(safe, truth), 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(ok, np.sin(safe), 0.0).sum(axis=0) / used
            c = np.where(ok, np.cos(safe), 0.0).sum(axis=0) / used
            mean_dir = np.mod(np.arctan2(s, c), TWO_PI)
            sq_error = (diff * diff).sum(axis=0) / used
        pointwise = PointwiseReport(eval_points, truth, cb, cvar, cmse, used, mean_dir, sq_error)
    return StudyReport(config, mean_case, cases, outcomes, pointwise)
