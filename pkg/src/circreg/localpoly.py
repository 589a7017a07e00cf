"""Local polynomial (weighted least squares) smoothing of real responses.

Everything funnels through :func:`fit_batch`, which evaluates the local fit at
many points at once. Local coordinates are the bandwidth-scaled offsets
``H^{-1}(X_i - x)``; the intercept is unchanged by this reparameterization
but the normal equations become unit-free, so the condition number is a
meaningful stability diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from circreg.errors import InvalidBandwidthError, InvalidInputError
from circreg.kernels import KernelSpec, check_spd

# condition number of the local normal equations above which a fit is unstable
STABILITY_THRESHOLD = 1e8
# evaluation points processed per chunk, bounds the m x n x d work arrays
CHUNK_ELEMENTS = 2_000_000

KINDS = ("scalar", "diagonal", "full")


@dataclass(frozen=True, eq=False)
class BandwidthMatrix:
    """Symmetric positive definite d x d smoothing matrix."""

    matrix: np.ndarray
    kind: str = "full"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidBandwidthError(f"unknown bandwidth kind {self.kind!r}")
        m = check_spd(self.matrix)
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def scalar(cls, h: float, d: int = 1) -> "BandwidthMatrix":
        return cls(float(h) * np.eye(d), "scalar")

    @classmethod
    def diagonal(cls, hs) -> "BandwidthMatrix":
        return cls(np.diag(np.asarray(hs, dtype=float)), "diagonal")

    @classmethod
    def full(cls, matrix) -> "BandwidthMatrix":
        return cls(np.asarray(matrix, dtype=float), "full")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))

    def scaled(self, factor: float) -> "BandwidthMatrix":
        return BandwidthMatrix(self.matrix * factor, self.kind)

    def __eq__(self, other):
        if not isinstance(other, BandwidthMatrix):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.matrix, other.matrix)

    def __repr__(self):
        return f"BandwidthMatrix(kind={self.kind!r}, matrix={self.matrix.tolist()})"


def as_bandwidth(H, d: int) -> BandwidthMatrix:
    """Coerce a scalar, vector of diagonal entries, matrix or BandwidthMatrix."""
    if isinstance(H, BandwidthMatrix):
        if H.dimension != d:
            raise InvalidBandwidthError(f"bandwidth is {H.dimension}-dimensional, data is {d}")
        return H
    arr = np.asarray(H, dtype=float)
    if arr.ndim == 0:
        return BandwidthMatrix.scalar(float(arr), d)
    if arr.ndim == 1:
        if arr.size != d:
            raise InvalidBandwidthError(f"need {d} diagonal bandwidths")
        return BandwidthMatrix.diagonal(arr)
    if arr.shape != (d, d):
        raise InvalidBandwidthError(f"bandwidth matrix must be {d}x{d}")
    return BandwidthMatrix.full(arr)


@dataclass(frozen=True)
class LocalFitSpec:
    """Polynomial degree, kernel and bandwidth of a local fit."""

    degree: int
    kernel: KernelSpec
    bandwidth: BandwidthMatrix

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise InvalidInputError("degree must be a nonnegative integer")
        d = self.kernel.dimension
        if self.bandwidth.dimension != d:
            raise InvalidInputError("kernel and bandwidth dimensions differ")
        if d > 1 and self.degree > 1:
            raise InvalidInputError("multivariate fits support degree 0 or 1 only")

    @property
    def dimension(self) -> int:
        return self.kernel.dimension

    @property
    def n_coefficients(self) -> int:
        if self.dimension == 1:
            return self.degree + 1
        return 1 + self.degree * self.dimension


@dataclass(frozen=True)
class LocalFitResult:
    estimate: float
    stable: bool
    condition_estimate: float
    effective_points: int


@dataclass
class BatchFit:
    """Vectorized local fits at m points for k response columns."""

    estimates: np.ndarray  # (m, k); NaN where unstable
    stable: np.ndarray  # (m,)
    condition: np.ndarray  # (m,)
    effective_points: np.ndarray  # (m,)
    weights: np.ndarray | None = field(default=None, repr=False)  # (m, n)


def _check_data(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("covariates must be an n x d array with n >= 1")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("covariates must be finite")
    if y is None:
        return X
    y = np.asarray(y, dtype=float)
    if y.shape[0] != X.shape[0]:
        raise InvalidInputError("covariates and responses differ in length")
    return X, y


def _check_points(points, d):
    P = np.asarray(points, dtype=float)
    if P.ndim == 0:
        P = P.reshape(1, 1)
    elif P.ndim == 1:
        P = P[:, None] if d == 1 else P[None, :]
    if P.ndim != 2 or P.shape[1] != d:
        raise InvalidInputError(f"evaluation points must have {d} coordinates")
    if not np.all(np.isfinite(P)):
        raise InvalidInputError("evaluation points must be finite")
    return P


def _design(U, spec: LocalFitSpec):
    """Columns (each m x n) of the local design built from per-axis scaled offsets."""
    ones = np.ones_like(U[0])
    if spec.degree == 0:
        return [ones]
    if len(U) == 1:
        cols = [ones, U[0]]
        for _ in range(spec.degree - 1):
            cols.append(cols[-1] * U[0])
        return cols
    return [ones] + list(U)


def _moments(K, cols, Y2):
    """Normal-equation matrices M (m, q, q) and right-hand sides B (m, q, k)."""
    q = len(cols)
    m = K.shape[0]
    KA = [K * a for a in cols]
    M = np.empty((m, q, q))
    for a in range(q):
        for b in range(a, q):
            M[:, a, b] = M[:, b, a] = np.sum(KA[a] * cols[b], axis=1) if a else np.sum(KA[b], axis=1)
    B = np.stack([np.einsum("mn,nk->mk", ka, Y2) for ka in KA], axis=1)
    return M, B


def pairwise_offsets(X, P) -> list[np.ndarray]:
    """Per-axis offsets ``X[j, l] - P[i, l]`` as a list of d arrays of shape (m, n)."""
    return [-np.subtract.outer(P[:, l], X[:, l]) for l in range(X.shape[1])]


def _kernel_and_offsets(offsets, spec: LocalFitSpec):
    Hinv = spec.bandwidth.inverse
    d = len(offsets)
    U = []
    for k in range(d):
        acc = None
        for l in range(d):
            if Hinv[k, l] == 0.0:
                continue
            term = offsets[l] * Hinv[k, l]
            acc = term if acc is None else acc + term
        U.append(acc)
    sq = U[0] * U[0]
    for u in U[1:]:
        sq += u * u
    return U, spec.kernel.profile(sq)


def fit_batch(
    X, Y, points, spec: LocalFitSpec, exclude=None, return_weights=False, offsets=None
) -> BatchFit:
    """Local polynomial intercepts at every row of ``points``.

    Parameters
    ----------
    X : (n, d) array
    Y : (n,) or (n, k) array
        Responses; all columns share one weight computation.
    points : (m, d) array
    spec : LocalFitSpec
    exclude : (m,) int array, optional
        Observation index to drop from the fit at each point (-1 keeps all);
        used for leave-one-out.
    return_weights : bool
        Also return the equivalent linear-smoother weights.
    offsets : list of (m, n) arrays, optional
        Precomputed :func:`pairwise_offsets` for ``X`` and ``points``; lets
        repeated fits at the same points (cross-validation) skip that work.
    """
    X, Y = _check_data(X, Y)
    d = X.shape[1]
    if d != spec.dimension:
        raise InvalidInputError(f"data are {d}-dimensional, spec is {spec.dimension}")
    P = _check_points(points, d)
    squeeze = Y.ndim == 1
    Y2 = Y[:, None] if squeeze else Y
    n, k = Y2.shape
    m = P.shape[0]
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=int)
        if exclude.shape != (m,):
            raise InvalidInputError("exclude must give one index per point")

    est = np.full((m, k), np.nan)
    stable = np.zeros(m, dtype=bool)
    cond = np.full(m, np.inf)
    eff = np.zeros(m, dtype=int)
    weights = np.zeros((m, n)) if return_weights else None
    q = spec.n_coefficients

    step = m if offsets is not None else max(1, CHUNK_ELEMENTS // max(1, n * max(d, q)))
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        chunk = offsets if offsets is not None else pairwise_offsets(X, P[lo:hi])
        U, K = _kernel_and_offsets(chunk, spec)
        if exclude is not None:
            rows = np.nonzero(exclude[lo:hi] >= 0)[0]
            K[rows, exclude[lo:hi][rows]] = 0.0
        eff[lo:hi] = np.count_nonzero(K > 0, axis=1)
        cols = _design(U, spec)
        M, B = _moments(K, cols, Y2)
        total = M[:, 0, 0]
        ok = total > 0
        c = np.full(hi - lo, np.inf)
        if q == 1:
            c[ok] = 1.0
        elif ok.any():
            with np.errstate(all="ignore"):
                c[ok] = np.linalg.cond(M[ok])
        c[~np.isfinite(c)] = np.inf
        good = ok & (c <= STABILITY_THRESHOLD)
        cond[lo:hi] = c
        stable[lo:hi] = good
        if not good.any():
            continue
        idx = np.nonzero(good)[0]
        if q == 1:
            est[lo + idx] = B[idx, 0, :] / total[idx, None]
            if return_weights:
                weights[lo + idx] = K[idx] / total[idx, None]
            continue
        Mg = M[idx]
        beta = np.linalg.solve(Mg, B[idx])
        est[lo + idx] = beta[:, 0, :]
        if return_weights:
            e1 = np.zeros((idx.size, q, 1))
            e1[:, 0, 0] = 1.0
            g = np.linalg.solve(Mg, e1)[:, :, 0]
            weights[lo + idx] = K[idx] * sum(cols[a][idx] * g[:, a, None] for a in range(q))

    if squeeze:
        est = est[:, 0]
    return BatchFit(est, stable, cond, eff, weights)


def nw_direct(X, y, x, kernel: KernelSpec, H) -> LocalFitResult:
    """Nadaraya-Watson estimate: kernel-weighted average of ``y`` at ``x``.

    Computed directly from ``K_H(X_i - x)``, independently of :func:`fit_batch`.
    """
    X, y = _check_data(X, y)
    d = X.shape[1]
    H = as_bandwidth(H, d).matrix
    x = np.asarray(x, dtype=float).reshape(d)
    Hinv = np.linalg.inv(H)
    detH = np.linalg.det(H)
    w = np.array([kernel.profile((z := Hinv @ (xi - x)) @ z) / detH for xi in X])
    den = w.sum()
    eff = int(np.count_nonzero(w > 0))
    if den <= 0:
        return LocalFitResult(float("nan"), False, float("inf"), eff)
    return LocalFitResult(float(w @ y / den), True, 1.0, eff)


def _single(result: BatchFit) -> LocalFitResult:
    return LocalFitResult(
        float(result.estimates[0]),
        bool(result.stable[0]),
        float(result.condition[0]),
        int(result.effective_points[0]),
    )


def local_fit_real(X, y, x, spec: LocalFitSpec) -> LocalFitResult:
    """Intercept of the kernel-weighted polynomial least-squares fit at ``x``."""
    X, y = _check_data(X, y)
    if y.ndim != 1:
        raise InvalidInputError("y must be one-dimensional")
    if X.shape[0] < spec.n_coefficients:
        raise InvalidInputError(
            f"need at least {spec.n_coefficients} observations for degree {spec.degree}"
        )
    return _single(fit_batch(X, y, np.reshape(x, (1, -1)), spec))


def smoothing_weights(X, x, spec: LocalFitSpec) -> tuple[np.ndarray, bool]:
    """Equivalent-kernel weights ``w`` with ``estimate = w @ y`` for every ``y``.

    Returns the weight vector and the stability flag; weights are all NaN
    when the local system is unstable.
    """
    X = _check_data(X)
    res = fit_batch(X, np.zeros(X.shape[0]), np.reshape(x, (1, -1)), spec, return_weights=True)
    if not res.stable[0]:
        return np.full(X.shape[0], np.nan), False
    return res.weights[0], True
