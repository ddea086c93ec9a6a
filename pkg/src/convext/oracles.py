"""Brute-force reference computations, independent of the LP machinery.

These are exponential-time and meant for small instances: they exist so
that the fast routines can be cross-checked (``convext oracle-check`` and
the test suite).
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .domains import as_point, as_points
from .errors import NotInHull


def caratheodory_roof(points, values, query, tol: float = 1e-12) -> tuple[float, tuple]:
    """Convex roof at ``query`` by enumerating affinely independent subsets.

    Every subset of at most ``n + 1`` points whose affine hull contains the
    query with non-negative barycentric weights is a candidate; the roof is
    the smallest weighted value. Returns ``(value, support_indices)``.
    """
    P = as_points(points)
    v = np.asarray(values, dtype=float)
    q = as_point(query, P.shape[1])
    n = P.shape[1]
    best, arg = np.inf, ()
    for k in range(1, min(n + 1, len(P)) + 1):
        for S in combinations(range(len(P)), k):
            A = np.vstack([P[list(S)].T, np.ones(k)])
            rhs = np.append(q, 1.0)
            if np.linalg.matrix_rank(A, tol=1e-10) < k:
                continue
            lam, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.linalg.norm(A @ lam - rhs) > 1e-9 * (1 + np.linalg.norm(rhs)):
                continue
            if lam.min() < -tol:
                continue
            val = float(lam @ v[list(S)])
            if val < best:
                best, arg = val, S
    if not np.isfinite(best):
        raise NotInHull(f"{q.tolist()} is not a convex combination of the points")
    return best, arg


def random_roof_instance(rng: np.random.Generator, dim: int, max_points: int = 12):
    """Points in the unit cube, values in [-1, 1] and a random hull point."""
    k = int(rng.integers(dim + 1, max_points + 1))
    P = rng.uniform(-1, 1, (k, dim))
    v = rng.uniform(-1, 1, k)
    w = rng.dirichlet(np.ones(k))
    return P, v, w @ P


def brute_lipschitz(points, values) -> float:
    """Largest difference quotient over all pairs."""
    P = as_points(points)
    v = np.asarray(values, dtype=float)
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    np.fill_diagonal(D, np.inf)
    return float(np.max(np.abs(v[:, None] - v[None, :]) / D))


def brute_outer_extension_1d(x, values, query) -> float:
    """Largest secant extrapolation to ``query`` over all ordered pairs (1-D data)."""
    x = np.asarray(x, dtype=float).ravel()
    v = np.asarray(values, dtype=float)
    best = -np.inf
    for i in range(len(x)):
        for j in range(len(x)):
            if x[i] == x[j]:
                continue
            slope = (v[j] - v[i]) / (x[j] - x[i])
            # extrapolate only outward, beyond the far point of the pair
            if (query - x[j]) * (x[j] - x[i]) >= 0:
                best = max(best, v[j] + slope * (query - x[j]))
    return float(best)


__all__ = ["brute_lipschitz", "brute_outer_extension_1d", "caratheodory_roof",
           "random_roof_instance"]
