"""Independent reference computations used only by the tests.

Everything here avoids the package's simplex and envelope code: LPs go
through scipy's HiGHS, roofs through subset enumeration, and Hessians
through closed forms worked out by hand.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from convext.oracles import brute_lipschitz, brute_outer_extension_1d, caratheodory_roof

__all__ = [
    "brute_convex", "brute_lipschitz", "brute_outer_extension_1d", "caratheodory_roof",
    "exp_y2_hessian", "gamma_closed_form", "highs_lp", "highs_membership", "highs_roof",
    "radial_barrier_hessian", "minimal_extension_x2",
]


def highs_lp(c, A, b):
    """``min c.x`` subject to ``A x = b, x >= 0``; returns ``(status, value, x)``."""
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "other")
    return status, (res.fun if res.status == 0 else None), (res.x if res.status == 0 else None)


def highs_roof(points, values, query) -> float:
    P = np.atleast_2d(np.asarray(points, float))
    A = np.vstack([P.T, np.ones(len(P))])
    b = np.append(np.asarray(query, float), 1.0)
    status, value, _ = highs_lp(np.asarray(values, float), A, b)
    return value if status == "optimal" else np.nan


def highs_membership(points, query) -> bool:
    P = np.atleast_2d(np.asarray(points, float))
    A = np.vstack([P.T, np.ones(len(P))])
    b = np.append(np.asarray(query, float), 1.0)
    return highs_lp(np.zeros(len(P)), A, b)[0] == "optimal"


def brute_convex(points, values, tol: float = 1e-9) -> bool:
    """Every value is at most the roof of the remaining points (by enumeration)."""
    P = np.atleast_2d(np.asarray(points, float))
    v = np.asarray(values, float)
    for i in range(len(P)):
        rest = np.delete(np.arange(len(P)), i)
        try:
            roof, _ = caratheodory_roof(P[rest], v[rest], P[i])
        except Exception:
            continue  # a hull vertex is never a combination of the others
        if v[i] > roof + tol:
            return False
    return True


def exp_y2_hessian(x, y):
    """Hessian of ``exp(x) y^2``."""
    e = np.exp(x)
    return e * np.array([[y * y, 2 * y], [2 * y, 2.0]])


def gamma_closed_form(t):
    """Antiderivative of ``s (s - 1)^2`` from 1, zero below 1."""
    t = np.asarray(t, float)
    return np.where(t > 1, t ** 4 / 4 - 2 * t ** 3 / 3 + t ** 2 / 2 - 1 / 12, 0.0)


def radial_barrier_hessian(x, center, radius):
    """Hessian of ``gamma(|x - center| / radius)`` for the profile above."""
    d = np.asarray(x, float) - np.asarray(center, float)
    r = np.linalg.norm(d)
    t = r / radius
    n = d.size
    if t <= 1:
        return np.zeros((n, n))
    u = d / r
    # gamma'(t)/t = (t-1)^2 and its derivative 2(t-1), chained through t = r/R
    return ((t - 1) ** 2 * np.eye(n) + 2 * t * (t - 1) * np.outer(u, u)) / radius ** 2


def minimal_extension_x2(x):
    """Smallest convex extension of ``x^2`` from ``[-1, 1]`` to the line."""
    x = np.asarray(x, float)
    return np.where(np.abs(x) <= 1, x * x, 2 * np.abs(x) - 1)
