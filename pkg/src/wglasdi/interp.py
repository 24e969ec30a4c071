"""k-nearest-neighbour partition-of-unity interpolation of DI coefficients."""

from __future__ import annotations

import numpy as np

SNAP_TOL = 1e-12


def scaled_distances(mu, points, scales) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    scales = np.asarray(scales, dtype=float)
    if np.any(scales <= 0):
        raise ValueError("metric scales must be positive")
    return np.sqrt((((points - mu) / scales) ** 2).sum(axis=1))


def knn(mu, points, k: int, scales=None) -> np.ndarray:
    """Indices of the k nearest training points, nearest first, ties to lower index."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("knn needs at least one training point")
    if not 1 <= k <= points.shape[0]:
        raise ValueError(f"k={k} but only {points.shape[0]} training points")
    if scales is None:
        scales = np.ones(points.shape[1])
    d = scaled_distances(mu, points, scales)
    # distances equal up to rounding count as ties, so the lower index wins
    return np.argsort(np.round(d, 12), kind="stable")[:k]


def pou_weights(distances) -> np.ndarray:
    """Inverse-distance-squared weights normalised to sum to one.

    A distance below ``SNAP_TOL`` snaps to a one-hot weight on the closest such point.
    """
    d = np.asarray(distances, dtype=float)
    if d.size == 0:
        raise ValueError("need at least one neighbour")
    if np.any(d < SNAP_TOL):
        w = np.zeros_like(d)
        w[np.argmin(d)] = 1.0
        return w
    inv = d ** -2
    return inv / inv.sum()


def interp_coeffs(mu, points, coeffs, k: int = 4, scales=None) -> np.ndarray:
    """Convex combination of the k nearest coefficient matrices."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if scales is None:
        scales = np.ones(points.shape[1])
    k = min(k, points.shape[0])
    idx = knn(mu, points, k, scales)
    w = pou_weights(scaled_distances(mu, points[idx], scales))
    return np.tensordot(w, np.stack([coeffs[i] for i in idx]), axes=1)
