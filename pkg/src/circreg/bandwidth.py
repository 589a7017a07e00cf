"""Bandwidth selection: circular leave-one-out cross-validation and the
asymptotic AMSE / optimal local bandwidth calculators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from circreg.circfit import CircularFit, ObservationSet, predict_batch
from circreg.core import angular_loss
from circreg.errors import (
    IndefiniteCurvatureError,
    InvalidInputError,
    NoValidBandwidthError,
    SingularPointError,
)
from circreg.kernels import KernelSpec, kernel_constants
from circreg.localpoly import BandwidthMatrix, LocalFitSpec, check_spd, pairwise_offsets
from circreg.optim import nelder_mead

MAX_LOSS = 2.0


@dataclass(frozen=True)
class CvConfig:
    """Search settings for cross-validated bandwidth selection."""

    matrix_kind: str = "diagonal"
    grid_per_axis: int = 16
    grid_span: tuple[float, float] = (0.25, 16.0)
    simplex_tolerance: float = 1e-6
    max_iterations: int = 400
    undefined_penalty: float = MAX_LOSS
    init_scale: float = 1.5

    def __post_init__(self):
        if self.matrix_kind not in ("scalar", "diagonal", "full"):
            raise InvalidInputError(f"unknown matrix kind {self.matrix_kind!r}")
        if self.grid_per_axis < 3:
            raise InvalidInputError("grid_per_axis must be at least 3")
        if not self.simplex_tolerance > 0:
            raise InvalidInputError("simplex_tolerance must be positive")
        if self.max_iterations < 0:
            raise InvalidInputError("max_iterations must be nonnegative")
        if not 0.0 <= self.undefined_penalty <= MAX_LOSS:
            raise InvalidInputError("undefined_penalty must lie in [0, 2]")
        lo, hi = self.grid_span
        if not 0 < lo < hi:
            raise InvalidInputError("grid_span must satisfy 0 < low < high")


class LooScorer:
    """Leave-one-out CV score for one dataset across many bandwidths.

    Pairwise covariate offsets are computed once and reused.
    """

    def __init__(self, data: ObservationSet, degree: int, kernel: KernelSpec, penalty: float = MAX_LOSS):
        if data.n < 2:
            raise InvalidInputError("cross-validation needs at least 2 observations")
        self.data = data
        self.degree = degree
        self.kernel = kernel
        self.penalty = penalty
        X = data.covariates
        self._offsets = pairwise_offsets(X, X)
        self._exclude = np.arange(data.n)
        self.evaluations = 0

    def loo_predictions(self, H: BandwidthMatrix):
        fit = CircularFit(self.data, LocalFitSpec(self.degree, self.kernel, H))
        return predict_batch(fit, self.data.covariates, exclude=self._exclude, offsets=self._offsets)

    def score(self, H: BandwidthMatrix) -> tuple[float, int]:
        """CV score and the number of leave-one-out fits that were defined."""
        self.evaluations += 1
        pred = self.loo_predictions(H)
        loss = np.full(self.data.n, self.penalty)
        ok = pred.stable
        loss[ok] = angular_loss(self.data.responses[ok], pred.direction[ok])
        return float(loss.sum()), int(ok.sum())


def cv_score(data: ObservationSet, spec: LocalFitSpec, undefined_penalty: float = MAX_LOSS) -> float:
    """Sum over i of ``1 - cos(theta_i - m_hat^{(-i)}(X_i))``.

    Undefined leave-one-out estimates contribute ``undefined_penalty``.
    """
    return LooScorer(data, spec.degree, spec.kernel, undefined_penalty).score(spec.bandwidth)[0]


@dataclass
class CvResult:
    bandwidth: BandwidthMatrix
    score: float
    kind: str
    candidates: list[BandwidthMatrix] = field(default_factory=list, repr=False)
    scores: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0
    converged: bool = True


def covariate_scales(X) -> np.ndarray:
    sd = np.std(np.asarray(X, dtype=float), axis=0, ddof=1)
    if np.any(~(sd > 0)):
        raise InvalidInputError("every covariate needs positive sample variance")
    return sd


def candidate_axes(data: ObservationSet, config: CvConfig) -> list[np.ndarray]:
    """Per-axis geometric bandwidth grids around ``sd * n^(-1/(d+4))``."""
    d, n = data.dimension, data.n
    sd = covariate_scales(data.covariates)
    base = sd * n ** (-1.0 / (d + 4))
    factors = np.geomspace(config.grid_span[0], config.grid_span[1], config.grid_per_axis)
    if config.matrix_kind == "scalar":
        return [factors * float(np.exp(np.mean(np.log(base))))]
    return [factors * b for b in base]


def _grid_search(scorer: LooScorer, data: ObservationSet, config: CvConfig) -> CvResult:
    d = data.dimension
    axes = candidate_axes(data, config)
    best = None
    candidates, scores = [], []
    any_defined = False
    # lexicographic order with strict improvement: ties keep the smaller bandwidth
    for combo in itertools.product(*axes):
        if config.matrix_kind == "scalar":
            H = BandwidthMatrix.scalar(combo[0], d)
        else:
            H = BandwidthMatrix.diagonal(combo)
        s, defined = scorer.score(H)
        candidates.append(H)
        scores.append(s)
        any_defined |= defined > 0
        if defined and (best is None or s < best[1]):
            best = (H, s)
    if not any_defined:
        raise NoValidBandwidthError("no candidate bandwidth produced a defined leave-one-out fit")
    return CvResult(best[0], best[1], config.matrix_kind, candidates, scores)


def _from_log_cholesky(theta, d) -> np.ndarray:
    L = np.zeros((d, d))
    L[np.tril_indices(d)] = theta
    L[np.diag_indices(d)] = np.exp(np.diag(L))
    return L @ L.T


def _to_log_cholesky(H) -> np.ndarray:
    L = np.linalg.cholesky(H)
    L[np.diag_indices(L.shape[0])] = np.log(np.diag(L))
    return L[np.tril_indices(L.shape[0])]


def initial_bandwidth(data: ObservationSet, scale: float = 1.5) -> BandwidthMatrix:
    """``scale * diag(sd_1, ..., sd_d)`` of the covariates."""
    return BandwidthMatrix.full(np.diag(scale * covariate_scales(data.covariates)))


def _simplex_search(scorer: LooScorer, data: ObservationSet, config: CvConfig) -> CvResult:
    d = data.dimension
    H0 = initial_bandwidth(data, config.init_scale)
    theta0 = _to_log_cholesky(H0.matrix)
    diag_pos = set(np.nonzero(np.tril_indices(d)[0] == np.tril_indices(d)[1])[0])
    chol_scale = float(np.mean(np.sqrt(np.diag(H0.matrix))))
    step = np.array([0.2 if i in diag_pos else 0.2 * chol_scale for i in range(theta0.size)])
    candidates, scores, defined_counts = [], [], []

    def objective(theta):
        H = BandwidthMatrix.full(_from_log_cholesky(theta, d))
        s, defined = scorer.score(H)
        candidates.append(H)
        scores.append(s)
        defined_counts.append(defined)
        return s

    res = nelder_mead(
        objective, theta0, step, tol=config.simplex_tolerance, max_iterations=config.max_iterations
    )
    if not any(defined_counts):
        raise NoValidBandwidthError("every simplex vertex was fully penalized")
    if config.max_iterations == 0:
        H = H0
    else:
        H = BandwidthMatrix.full(_from_log_cholesky(res.x, d))
    return CvResult(H, res.fun, "full", candidates, scores, res.iterations, res.converged)


def cv_search(data: ObservationSet, degree: int, kernel: KernelSpec, config: CvConfig = CvConfig()) -> CvResult:
    """Cross-validated bandwidth search returning the full record."""
    if kernel.dimension != data.dimension:
        raise InvalidInputError("kernel and data dimensions differ")
    scorer = LooScorer(data, degree, kernel, config.undefined_penalty)
    if config.matrix_kind == "full":
        return _simplex_search(scorer, data, config)
    return _grid_search(scorer, data, config)


def select_bandwidth_cv(
    data: ObservationSet, degree: int, kernel: KernelSpec, config: CvConfig = CvConfig()
) -> BandwidthMatrix:
    """Bandwidth minimizing the circular leave-one-out CV criterion."""
    return cv_search(data, degree, kernel, config).bandwidth


# --- asymptotics ----------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticInputs:
    """Model quantities at a point, as callables of ``x`` (a d-vector).

    ``grad_m``/``hess_m`` are derivatives of the circular regression function,
    ``f`` the design density, ``ell`` the conditional mean resultant length and
    ``sigma1_sq`` the conditional variance of ``sin(eps)``.
    """

    grad_m: Callable
    hess_m: Callable
    f: Callable
    grad_f: Callable
    ell: Callable
    grad_ell: Callable
    sigma1_sq: Callable
    n: int
    kernel: KernelSpec

    def at(self, x):
        x = np.asarray(x, dtype=float)
        d = self.kernel.dimension
        values = dict(
            grad_m=np.asarray(self.grad_m(x), dtype=float).reshape(d),
            hess_m=np.asarray(self.hess_m(x), dtype=float).reshape(d, d),
            f=float(self.f(x)),
            grad_f=np.asarray(self.grad_f(x), dtype=float).reshape(d),
            ell=float(self.ell(x)),
            grad_ell=np.asarray(self.grad_ell(x), dtype=float).reshape(d),
            sigma1_sq=float(self.sigma1_sq(x)),
        )
        if not values["f"] > 0 or not values["ell"] > 0:
            raise SingularPointError("design density and mean resultant length must be positive")
        return values


def bias_matrix(inputs: AsymptoticInputs, x, estimator: str = "nw") -> np.ndarray:
    """Symmetric matrix B(x) with leading bias ``mu2/2 * tr(H^2 B)``."""
    v = inputs.at(x)
    gm = v["grad_m"]
    if estimator == "nw":
        g = v["f"] * v["grad_ell"] + v["ell"] * v["grad_f"]
        scale = 1.0 / (v["ell"] * v["f"])
    elif estimator == "ll":
        g = v["grad_ell"]
        scale = 1.0 / v["ell"]
    else:
        raise InvalidInputError("estimator must be 'nw' or 'll'")
    return scale * (np.outer(g, gm) + np.outer(gm, g)) + v["hess_m"]


def amse_local(inputs: AsymptoticInputs, x, H, estimator: str = "nw") -> float:
    """Leading squared bias plus leading variance of the NW or LL circular estimator."""
    d = inputs.kernel.dimension
    H = check_spd(H.matrix if isinstance(H, BandwidthMatrix) else H, d)
    kc = kernel_constants(inputs.kernel)
    v = inputs.at(x)
    B = bias_matrix(inputs, x, estimator)
    bias = 0.5 * kc.mu2 * np.trace(H @ H @ B)
    var = kc.roughness * v["sigma1_sq"] / (inputs.n * np.linalg.det(H) * v["ell"] ** 2 * v["f"])
    return float(bias * bias + var)


def h_opt_local(inputs: AsymptoticInputs, x, estimator: str = "nw") -> BandwidthMatrix:
    """AMSE-optimal local bandwidth ``h* B~^{-1/2}``.

    ``B~`` is ``B(x)`` or ``-B(x)``, whichever is positive definite.
    """
    d = inputs.kernel.dimension
    kc = kernel_constants(inputs.kernel)
    v = inputs.at(x)
    B = bias_matrix(inputs, x, estimator)
    evals, evecs = np.linalg.eigh(B)
    if np.all(evals > 0):
        pass
    elif np.all(evals < 0):
        evals = -evals
    else:
        raise IndefiniteCurvatureError(f"B(x) has eigenvalues {evals.tolist()}")
    det_b = float(np.prod(evals))
    # ell^2 belongs with f: it sits in the variance term being balanced
    h_star = (
        kc.roughness * v["sigma1_sq"] * np.sqrt(det_b)
        / (inputs.n * d * kc.mu2**2 * v["f"] * v["ell"] ** 2)
    ) ** (1.0 / (d + 4))
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    return BandwidthMatrix.full(h_star * 0.5 * (inv_sqrt + inv_sqrt.T))
