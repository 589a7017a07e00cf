"""Spherically symmetric multivariate kernels and their moment constants."""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from circreg.errors import InvalidBandwidthError, InvalidInputError

FAMILIES = ("epanechnikov", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """A d-variate kernel.

    ``family="epanechnikov"`` is the spherical Epanechnikov kernel
    ``c_d (1 - |u|^2)`` on the unit ball. The Gaussian kernel lacks compact
    support and must be requested explicitly.
    """

    family: str = "epanechnikov"
    dimension: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown kernel family {self.family!r}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidInputError("kernel dimension must be a positive integer")

    @property
    def compact(self) -> bool:
        return self.family == "epanechnikov"

    @property
    def normalizer(self) -> float:
        d = self.dimension
        if self.family == "epanechnikov":
            return gamma(d / 2 + 2) / pi ** (d / 2)
        return (2 * pi) ** (-d / 2)

    def profile(self, sq_norm):
        """Kernel value as a function of the squared norm ``|u|^2``."""
        sq_norm = np.asarray(sq_norm, dtype=float)
        if self.family == "epanechnikov":
            return self.normalizer * np.maximum(1.0 - sq_norm, 0.0)
        return self.normalizer * np.exp(-0.5 * sq_norm)


@dataclass(frozen=True)
class KernelConstants:
    mu2: float
    roughness: float


def check_spd(H, d: int | None = None, tol: float = 1e-12) -> np.ndarray:
    """Validate a bandwidth matrix and return it as a float array."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InvalidBandwidthError("bandwidth matrix must be square")
    if d is not None and H.shape[0] != d:
        raise InvalidBandwidthError(f"bandwidth matrix must be {d}x{d}")
    if not np.all(np.isfinite(H)):
        raise InvalidBandwidthError("bandwidth matrix has non-finite entries")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.T).max() > tol * scale:
        raise InvalidBandwidthError("bandwidth matrix is not symmetric")
    if np.linalg.eigvalsh(H).min() <= 0:
        raise InvalidBandwidthError("bandwidth matrix is not positive definite")
    return H


def kernel_eval(spec: KernelSpec, u, H=None) -> float:
    """Evaluate ``K(u)`` or the rescaled ``K_H(u) = |H|^{-1} K(H^{-1} u)``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (spec.dimension,):
        raise InvalidInputError(f"u must have length {spec.dimension}")
    if H is None:
        return float(spec.profile(u @ u))
    H = check_spd(H, spec.dimension)
    z = np.linalg.solve(H, u)
    return float(spec.profile(z @ z) / np.linalg.det(H))


def kernel_constants(spec: KernelSpec) -> KernelConstants:
    """Second moment mu2(K) and roughness R(K) = int K^2, in closed form."""
    d = spec.dimension
    if spec.family == "gaussian":
        return KernelConstants(1.0, (4 * pi) ** (-d / 2))
    # radial integrals of c_d (1 - r^2) over the unit ball
    return KernelConstants(1.0 / (d + 4), spec.normalizer * 4.0 / (d + 4))
