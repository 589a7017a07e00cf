"""Circular regression estimator: sine and cosine smoothers joined by atan2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from circreg.core import as_angle_series, wrap_angle
from circreg.errors import InvalidInputError
from circreg.localpoly import LocalFitSpec, fit_batch

# estimated resultant lengths below this leave the direction undefined
ELL_THRESHOLD = 1e-10


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Covariates (n x d) paired with circular responses in radians."""

    covariates: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidInputError("covariates must be an n x d array with n >= 1")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("covariates must be finite")
        theta = as_angle_series(self.responses)
        if theta.shape[0] != X.shape[0]:
            raise InvalidInputError("covariates and responses differ in length")
        X = X.copy()
        X.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "responses", theta)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def dimension(self) -> int:
        return self.covariates.shape[1]

    def components(self) -> np.ndarray:
        """(n, 2) array of (sin, cos) of the responses."""
        return np.column_stack([np.sin(self.responses), np.cos(self.responses)])


@dataclass(frozen=True)
class CircularPrediction:
    direction: float  # NaN when undefined
    ell_hat: float
    stable: bool
    m1_hat: float
    m2_hat: float


@dataclass(frozen=True)
class CircularFit:
    """A dataset together with the local fit specification used to smooth it."""

    data: ObservationSet
    spec: LocalFitSpec

    def __post_init__(self):
        if self.data.dimension != self.spec.dimension:
            raise InvalidInputError("data and fit spec dimensions differ")

    def predict(self, points) -> "SurfacePrediction":
        return predict_batch(self, points)


@dataclass
class SurfacePrediction:
    """Array form of many :class:`CircularPrediction` values."""

    direction: np.ndarray
    ell_hat: np.ndarray
    stable: np.ndarray
    m1_hat: np.ndarray
    m2_hat: np.ndarray
    condition: np.ndarray

    def __len__(self):
        return self.direction.shape[0]

    def __getitem__(self, i) -> CircularPrediction:
        return CircularPrediction(
            float(self.direction[i]),
            float(self.ell_hat[i]),
            bool(self.stable[i]),
            float(self.m1_hat[i]),
            float(self.m2_hat[i]),
        )

    def to_list(self) -> list[CircularPrediction]:
        return [self[i] for i in range(len(self))]


def combine_components(m1, m2, component_stable):
    """atan2 of smoothed sine/cosine components with degeneracy flagging."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    ell = np.hypot(m1, m2)
    stable = np.asarray(component_stable, dtype=bool) & np.isfinite(ell)
    stable &= np.where(np.isfinite(ell), ell, 0.0) >= ELL_THRESHOLD
    direction = np.full(m1.shape, np.nan)
    direction[stable] = wrap_angle(np.arctan2(m1[stable], m2[stable]))
    return direction, ell, stable


def predict_batch(fit: CircularFit, points, exclude=None, offsets=None) -> SurfacePrediction:
    """Vectorized circular predictions; see :func:`circreg.localpoly.fit_batch`."""
    data = fit.data
    res = fit_batch(
        data.covariates, data.components(), points, fit.spec, exclude=exclude, offsets=offsets
    )
    m1, m2 = res.estimates[:, 0], res.estimates[:, 1]
    direction, ell, stable = combine_components(m1, m2, res.stable)
    return SurfacePrediction(direction, ell, stable, m1, m2, res.condition)


def fit_circular_at(fit: CircularFit, x) -> CircularPrediction:
    """Circular regression estimate ``atan2(m1_hat, m2_hat)`` at one point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != fit.data.dimension:
        raise InvalidInputError(f"x must have {fit.data.dimension} coordinates")
    return predict_batch(fit, x)[0]


def predict_surface(fit: CircularFit, grid) -> list[CircularPrediction]:
    """Pointwise predictions at each grid row; unstable points stay in place, flagged."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None] if fit.data.dimension == 1 else grid[None, :]
    return predict_batch(fit, grid).to_list()


@dataclass(frozen=True)
class ErrorMoments:
    sigma1_sq: float
    sigma2_sq: float
    sigma12: float
    s1_sq: float
    s2_sq: float
    c: float


def error_moments_from_truth(f1, f2, ell, sigma1_sq, sigma2_sq, sigma12) -> ErrorMoments:
    """Sine/cosine component error moments from the circular error moments.

    ``f1 = sin m(x)``, ``f2 = cos m(x)``; ``sigma1_sq``, ``sigma2_sq`` and
    ``sigma12`` are Var sin(eps), Var cos(eps) and E[sin(eps) cos(eps)].
    """
    if abs(f1 * f1 + f2 * f2 - 1.0) > 1e-10:
        raise InvalidInputError("f1^2 + f2^2 must equal 1")
    if not 0.0 <= ell <= 1.0:
        raise InvalidInputError("ell must lie in [0, 1]")
    if sigma1_sq < 0 or sigma2_sq < 0:
        raise InvalidInputError("variances must be nonnegative")
    s1_sq = f1 * f1 * sigma2_sq + 2 * f1 * f2 * sigma12 + f2 * f2 * sigma1_sq
    s2_sq = f2 * f2 * sigma2_sq - 2 * f2 * f1 * sigma12 + f1 * f1 * sigma1_sq
    c = f1 * f2 * sigma2_sq - f1 * f1 * sigma12 + f2 * f2 * sigma12 - f1 * f2 * sigma1_sq
    return ErrorMoments(sigma1_sq, sigma2_sq, sigma12, s1_sq, s2_sq, c)
