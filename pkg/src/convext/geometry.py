"""Convex-geometry predicates built on the LP core.

Hull membership (with a separating direction when the query is outside),
affine-hull dimension, a relative-interior test and grid neighborhoods.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .domains import GridDomain, as_point, as_points
from .errors import BadParams, DimensionMismatch, NotInHull, NumericBreakdown
from .lp import MAX_VARS, LpProblem, LpStatus, solve_lp
from .tolerances import DEFAULT_TOLERANCES, ToleranceConfig


@dataclass(frozen=True)
class MembershipCertificate:
    """Outcome of a hull-membership test.

    ``weights`` (one per generator, summing to 1) are set when the query is
    inside; ``separating_direction`` is a unit vector ``u`` with
    ``u.query - max_i u.x_i = margin > 0`` when it is outside.
    """

    inside: bool
    weights: np.ndarray | None = None
    separating_direction: np.ndarray | None = None
    margin: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "inside": self.inside,
            "weights": None if self.weights is None else self.weights.tolist(),
            "separating_direction": (None if self.separating_direction is None
                                     else self.separating_direction.tolist()),
            "margin": self.margin,
        }


def _prepare(generators, query):
    X = as_points(generators)
    q = as_point(query)
    if X.shape[1] != q.size:
        raise DimensionMismatch(f"generators live in R^{X.shape[1]}, query in R^{q.size}")
    return X, q


def affine_basis(points, tol: ToleranceConfig = DEFAULT_TOLERANCES):
    """Base point and orthonormal basis (n, d) of the affine hull."""
    P = as_points(points)
    p0 = P[0]
    D = (P[1:] - p0).T
    if D.shape[1] == 0:
        return p0, np.zeros((P.shape[1], 0))
    Q, R, _ = qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = np.max(np.linalg.norm(D, axis=0))
    rank = int(np.sum(diag > tol.rank * scale)) if scale > 0 else 0
    return p0, Q[:, :rank]


def affine_hull_dim(points, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> int:
    """Dimension of the affine span (rank of differences, pivoted QR)."""
    return affine_basis(points, tol)[1].shape[1]


def hull_vertex_indices(points, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Indices of a subset with the same convex hull (qhull in the affine span)."""
    P = as_points(points)
    if P.shape[0] <= 2:
        return np.arange(P.shape[0])
    p0, B = affine_basis(P, tol)
    d = B.shape[1]
    if d == 0:
        return np.array([0])
    Y = (P - p0) @ B
    if d == 1:
        return np.unique([int(np.argmin(Y[:, 0])), int(np.argmax(Y[:, 0]))])
    try:
        return np.sort(ConvexHull(Y).vertices)
    except QhullError:
        return np.arange(P.shape[0])


def _reduced(X):
    """Generator subset small enough for the dense LP (same hull)."""
    if X.shape[0] <= MAX_VARS:
        return np.arange(X.shape[0])
    idx = hull_vertex_indices(X)
    if idx.size > MAX_VARS:
        raise DimensionMismatch(f"{idx.size} hull vertices exceed the LP limit {MAX_VARS}")
    return idx


def hull_distance(generators, query):
    """Euclidean distance from ``query`` to the hull and the nearest hull point.

    Solved as a non-negative least-squares problem with a heavily weighted
    row enforcing that the weights sum to one.
    """
    X, q = _prepare(generators, query)
    scale = max(1.0, float(np.max(np.abs(X))), float(np.max(np.abs(q))))
    w = 1e4 * scale
    A = np.vstack([X.T, np.full((1, X.shape[0]), w)])
    b = np.concatenate([q, [w]])
    lam, _ = nnls(A, b, maxiter=50 * X.shape[0] + 100)
    s = lam.sum()
    if s > 0:
        lam = lam / s
    p = lam @ X
    return float(np.linalg.norm(p - q)), p


def hull_membership(generators, query,
                    tol: ToleranceConfig = DEFAULT_TOLERANCES) -> MembershipCertificate:
    """Decide whether ``query`` lies in the convex hull of ``generators``.

    Parameters
    ----------
    generators : array_like, (k, n)
    query : array_like, (n,)

    Returns
    -------
    MembershipCertificate
        Inside: reconstructing weights. Outside: a unit separating direction
        read off the phase-one dual, with its margin.
    """
    X, q = _prepare(generators, query)
    idx = _reduced(X)
    Xr = X[idx]
    k = Xr.shape[0]
    A = np.vstack([Xr.T, np.ones((1, k))])
    b = np.concatenate([q, [1.0]])
    sol = solve_lp(LpProblem(np.zeros(k), A, b), tol)
    if sol.status is LpStatus.OPTIMAL:
        lam = np.zeros(X.shape[0])
        lam[idx] = sol.primal
        err = np.linalg.norm(lam @ X - q)
        if err > tol.membership * (1 + np.linalg.norm(q)):
            raise NumericBreakdown(f"membership weights reconstruct the query only to {err:.2e}")
        return MembershipCertificate(True, weights=lam)

    u, margin = _direction_from_farkas(sol.farkas, Xr, q)
    if margin <= 0:
        # numerically weak dual; fall back to the nearest-point direction
        dist, p = hull_distance(Xr, q)
        if dist > 0:
            u = (q - p) / dist
            margin = float(u @ q - np.max(Xr @ u))
    if margin <= 0:
        raise NumericBreakdown("could not certify separation of an infeasible membership LP")
    return MembershipCertificate(False, separating_direction=u, margin=margin)


def _direction_from_farkas(y, X, q):
    if y is None:
        return None, -np.inf
    u = np.asarray(y[:-1], dtype=float)
    norm = np.linalg.norm(u)
    if not np.isfinite(norm) or norm == 0:
        return None, -np.inf
    u = u / norm
    return u, float(u @ q - np.max(X @ u))


def relative_interior_weights(generators, query, tol: ToleranceConfig = DEFAULT_TOLERANCES):
    """Maximize the smallest weight of a representation of ``query``.

    Returns ``(t, weights)`` where ``t`` is the optimal minimum weight over
    all generators (after hull-vertex reduction for large sets).
    """
    X, q = _prepare(generators, query)
    if not hull_membership(X, q, tol).inside:
        raise NotInHull(f"query {q.tolist()} is not in the hull of the generators")
    idx = _reduced(X)
    Xr = X[idx]
    k = Xr.shape[0]
    # weights = mu + t, mu >= 0, t >= 0
    A = np.zeros((q.size + 1, k + 1))
    A[:-1, :k] = Xr.T
    A[:-1, k] = Xr.sum(axis=0)
    A[-1, :k] = 1.0
    A[-1, k] = k
    b = np.concatenate([q, [1.0]])
    c = np.zeros(k + 1)
    c[k] = -1.0
    sol = solve_lp(LpProblem(c, A, b), tol)
    if not sol.optimal:
        raise NumericBreakdown(f"relative-interior LP ended {sol.status.value}")
    t = float(sol.primal[k])
    lam = np.zeros(X.shape[0])
    lam[idx] = sol.primal[:k] + t
    return t, lam


def relative_interior_test(generators, query, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> bool:
    """True iff ``query`` is a combination of all generators with positive weights.

    For a finite generator set that is exactly the relative interior of its
    hull, so no spanning-subset search is needed.
    """
    t, _ = relative_interior_weights(generators, query, tol)
    return t > tol.interior


def epsilon_neighborhood(domain: GridDomain, eps: float) -> GridDomain:
    """Cells whose centers lie within ``eps`` of a marked center.

    Morphological dilation by the Euclidean ball, computed with an exact
    distance transform. The lattice is not enlarged; pad first if needed.
    """
    if eps < 0:
        raise BadParams("eps must be non-negative")
    if eps == 0:
        return domain.with_indicator(domain.indicator.copy())
    if eps < domain.spacing:
        warnings.warn(f"eps={eps:g} is below the grid spacing {domain.spacing:g}; "
                      "the neighborhood equals the domain", stacklevel=2)
    d = domain.distance_field()
    return domain.with_indicator(d <= eps * (1 + 1e-12))


class LowerEnvelope:
    """Largest convex function below sampled data, via the lifted lower hull.

    The points ``(x_i, f_i)`` are lifted to R^{n+1}; every lower facet of
    their convex hull is a supporting affine function, and the envelope on
    the hull of the ``x_i`` is the maximum of those functions. Off the hull
    the maximum is meaningless, so callers must restrict queries to it.

    Parameters
    ----------
    points : (k, n) array
        Must span R^n (full affine dimension).
    values : (k,) array
    """

    def __init__(self, points, values):
        X = as_points(points)
        v = np.asarray(values, dtype=float).ravel()
        if v.size != X.shape[0]:
            raise DimensionMismatch("points and values differ in length")
        n = X.shape[1]
        if affine_hull_dim(X) < n:
            raise DimensionMismatch("lower envelope needs a full-dimensional point set")
        self.points, self.values, self.dim = X, v, n
        if n == 1:
            self._init_1d()
            return
        Z = np.hstack([X, v[:, None]])
        if affine_hull_dim(Z) < n + 1:
            # data are affine: a single plane
            A = np.hstack([X, np.ones((X.shape[0], 1))])
            coef = np.linalg.lstsq(A, v, rcond=None)[0]
            self.slopes, self.intercepts = coef[None, :n], coef[n:]
            self.simplices = None
            return
        scale = np.ptp(Z, axis=0)
        scale[scale == 0] = 1.0
        hull = ConvexHull(Z / scale)
        eq = hull.equations
        a, af, off = eq[:, :n] / scale[:n], eq[:, n] / scale[n], eq[:, n + 1]
        lower = af < -1e-12
        # plane: a.x + af z + off = 0  ->  z = -(a.x + off) / af
        self.slopes = -a[lower] / af[lower, None]
        self.intercepts = -off[lower] / af[lower]
        self.simplices = hull.simplices[lower]

    def _init_1d(self):
        order = np.argsort(self.points[:, 0], kind="stable")
        x, y = self.points[order, 0], self.values[order]
        chain = []
        for i in range(x.size):
            while len(chain) >= 2:
                j, k = chain[-2], chain[-1]
                # drop k if it lies on or above segment j -> i
                if (y[k] - y[j]) * (x[i] - x[j]) >= (y[i] - y[j]) * (x[k] - x[j]):
                    chain.pop()
                else:
                    break
            chain.append(i)
        self._x = x[chain]
        self._y = y[chain]
        self._idx = order[chain]

    def __call__(self, X, chunk: int = 2048) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        X = X.reshape(-1, self.dim)
        if self.dim == 1:
            return np.interp(X[:, 0], self._x, self._y)
        if self.simplices is None or X.shape[0] * len(self.slopes) <= 4_000_000:
            return self._brute(X, chunk)
        return self._located(X, chunk)

    def _brute(self, X, chunk):
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk] = np.max(X[s:s + chunk] @ self.slopes.T + self.intercepts, axis=1)
        return out

    def _located(self, X, chunk, k: int = 12):
        """Evaluate through the facet whose projection contains each query.

        The projected lower facets tile the hull, so the containing facet is
        found among those with nearby centroids; the value is the maximum
        over the candidates (every plane is a minorant). Unresolved queries
        fall back to the full maximum.
        """
        if not hasattr(self, "_tree"):
            V = self.points[self.simplices]                       # (F, n+1, n)
            M = np.concatenate([np.swapaxes(V, 1, 2), np.ones((len(V), 1, V.shape[1]))], axis=1)
            det = np.linalg.det(M)
            good = np.abs(det) > 1e-14 * np.max(np.abs(det))
            inv = np.zeros_like(M)
            inv[good] = np.linalg.inv(M[good])
            self._bary = inv
            self._tree = cKDTree(V.mean(axis=1))
        k = min(k, len(self.slopes))
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            Xc = X[s:s + chunk]
            _, cand = self._tree.query(Xc, k=k)
            cand = cand.reshape(Xc.shape[0], k)
            vals = np.einsum("mkn,mn->mk", self.slopes[cand], Xc) + self.intercepts[cand]
            Xh = np.hstack([Xc, np.ones((Xc.shape[0], 1))])
            bary = np.einsum("mkij,mj->mki", self._bary[cand], Xh)
            hit = (bary.min(axis=2) >= -1e-9).any(axis=1)
            res = vals.max(axis=1)
            if not hit.all():
                res[~hit] = self._brute(Xc[~hit], chunk)
            out[s:s + chunk] = res
        return out

    def support(self, x):
        """Indices and barycentric weights of a lower facet containing ``x``."""
        x = as_point(x, self.dim)
        if self.dim == 1:
            j = int(np.clip(np.searchsorted(self._x, x[0]), 1, self._x.size - 1))
            if self._x.size == 1:
                return self._idx[:1], np.ones(1)
            x0, x1 = self._x[j - 1], self._x[j]
            w1 = (x[0] - x0) / (x1 - x0)
            return self._idx[[j - 1, j]], np.array([1 - w1, w1])
        if self.simplices is None:
            # affine data: any representation works; use the hull LP
            cert = hull_membership(self.points, x)
            lam = cert.weights if cert.inside else np.zeros(len(self.points))
            nz = np.flatnonzero(lam > 0)
            return nz, lam[nz]
        vals = self.slopes @ x + self.intercepts
        order = np.argsort(-vals, kind="stable")
        best = None
        for f in order[:64]:
            S = self.simplices[f]
            A = np.vstack([self.points[S].T, np.ones(S.size)])
            w = np.linalg.lstsq(A, np.concatenate([x, [1.0]]), rcond=None)[0]
            if w.min() >= -1e-9:
                return S, np.clip(w, 0, None) / np.clip(w, 0, None).sum()
            if best is None or w.min() > best[1].min():
                best = (S, w)
        S, w = best
        w = np.clip(w, 0, None)
        return S, w / w.sum()
