"""Circular arithmetic primitives: wrapping, mean direction and the cosine loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from circreg.errors import InvalidInputError

TWO_PI = 2.0 * np.pi
# below this resultant norm the mean direction is treated as undefined
RESULTANT_EPS = 1e-14


def wrap_angle(raw):
    """Reduce angles (radians) modulo 2*pi into ``[0, 2*pi)``.

    Accepts scalars or arrays; returns the same kind. Non-finite input raises
    :class:`InvalidInputError`.
    """
    arr = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("angles must be finite")
    out = np.mod(arr, TWO_PI)
    # np.mod can round a tiny negative value up to exactly 2*pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def as_angle_series(values) -> np.ndarray:
    """Return ``values`` as a wrapped 1-D float array (an angle series)."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise InvalidInputError("angle series must be one-dimensional")
    return wrap_angle(arr) if arr.size else arr.copy()


@dataclass(frozen=True)
class DirectionStats:
    """Mean direction and mean resultant length of a (weighted) angle sample.

    ``mean_direction`` is NaN when ``undefined`` is set.
    """

    mean_direction: float
    resultant_length: float
    undefined: bool = False


def circ_mean_and_resultant(angles, weights=None) -> DirectionStats:
    """Weighted circular mean and mean resultant length.

    Parameters
    ----------
    angles : array_like
        Angles in radians.
    weights : array_like, optional
        Nonnegative weights summing to one. Equal weights if omitted.

    Returns
    -------
    DirectionStats
        With ``undefined=True`` when the resultant vector vanishes.
    """
    theta = np.asarray(angles, dtype=float).ravel()
    if theta.size == 0:
        raise InvalidInputError("need at least one angle")
    if weights is None:
        w = np.full(theta.size, 1.0 / theta.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != theta.shape:
            raise InvalidInputError("weights and angles differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError("weights must be nonnegative and sum to 1")
    s = float(np.sum(w * np.sin(theta)))
    c = float(np.sum(w * np.cos(theta)))
    r = float(np.hypot(s, c))
    if r < RESULTANT_EPS:
        return DirectionStats(float("nan"), r, undefined=True)
    return DirectionStats(wrap_angle(np.arctan2(s, c)), min(r, 1.0))


def angular_loss(a, b):
    """Cosine loss ``1 - cos(a - b)``; works elementwise on arrays."""
    out = 1.0 - np.cos(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if np.ndim(out) == 0:
        return float(out)
    return out


def angular_difference(a, b):
    """Signed difference ``a - b`` wrapped into ``[-pi, pi)``."""
    return np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + np.pi, TWO_PI) - np.pi
