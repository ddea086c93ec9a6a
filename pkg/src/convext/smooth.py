"""C^2 extensions with positive definite Hessian, certified on grids.

Building blocks
    :func:`fd_hessian` / :func:`pd_certify` (finite-difference Hessians and
    their smallest eigenvalues), :class:`Mollifier` (normalized bump-kernel
    smoothing of grid data), :class:`SmoothCutoff` (a C-infinity blend that is
    exactly 1 near a set and exactly 0 far from it), the ball barrier
    (:func:`ball_cover`, :func:`barrier_eval`).

Extensions
    :func:`hull_smooth_extension` fills the convex hull of a domain,
    :func:`outside_smooth_extension` continues a function beyond a
    neighbourhood of the hull with a barrier, and
    :func:`full_smooth_extension` chains the two for a convex domain with a
    hole.

Every extension is checked by :func:`pd_certify` on a stated grid; nothing
here is a proof. Kernel sums live on a lattice, which makes them periodic in
the lattice at tiny amplitude; finite differences taken with a step equal to
the lattice spacing cancel that periodic part exactly, so certification
defaults to that step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, cKDTree

from .domains import GridDomain, GridFunction, as_point, as_points, evaluate
from .errors import (BadParams, CoverageCheckFailed, DimensionMismatch,
                     EvaluationOutsideDomain, PreconditionFailed,
                     SupportEscapesData, TuningFailed)
from .geometry import LowerEnvelope, epsilon_neighborhood, hull_distance, hull_vertex_indices

# ----------------------------------------------------------------------------
# eigenvalues


def jacobi_eigenvalues(A, tol: float = 1e-14, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a batch of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    A : (..., n, n) array
        Symmetric matrices (only the symmetric part is used).

    Returns
    -------
    (..., n) array of eigenvalues in ascending order.
    """
    A = np.asarray(A, dtype=float)
    shape = A.shape
    n = shape[-1]
    M = 0.5 * (A + np.swapaxes(A, -1, -2)).reshape(-1, n, n).copy()
    scale = np.maximum(np.sqrt(np.sum(M ** 2, axis=(1, 2))), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.clip(np.sum(M ** 2, axis=(1, 2))
                              - np.sum(np.diagonal(M, axis1=1, axis2=2) ** 2, axis=1), 0, None))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = M[:, p, q]
                active = np.abs(apq) > 1e-300
                if not active.any():
                    continue
                app, aqq = M[:, p, p], M[:, q, q]
                theta = np.where(active, (aqq - app) / np.where(active, 2 * apq, 1.0), 0.0)
                sign = np.where(theta >= 0, 1.0, -1.0)
                t = np.where(active, sign / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
                c = 1 / np.sqrt(t ** 2 + 1)
                s = t * c
                P, Q = M[:, :, p].copy(), M[:, :, q].copy()
                M[:, :, p] = c[:, None] * P - s[:, None] * Q
                M[:, :, q] = s[:, None] * P + c[:, None] * Q
                P, Q = M[:, p, :].copy(), M[:, q, :].copy()
                M[:, p, :] = c[:, None] * P - s[:, None] * Q
                M[:, q, :] = s[:, None] * P + c[:, None] * Q
    ev = np.sort(np.diagonal(M, axis1=1, axis2=2), axis=1)
    return ev.reshape(shape[:-1])


# ----------------------------------------------------------------------------
# finite-difference Hessians


@dataclass(frozen=True)
class HessianReport:
    point: np.ndarray
    matrix: np.ndarray
    min_eigenvalue: float
    step: float

    def to_json_dict(self) -> dict:
        return {"point": self.point.tolist(), "matrix": self.matrix.tolist(),
                "min_eigenvalue": self.min_eigenvalue, "step": self.step}


def _stencil(n: int):
    """Offsets (in units of the step) used by the Hessian stencil."""
    offs = [np.zeros(n)]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1
        offs += [e, -e]
    for i in range(n):
        for j in range(i + 1, n):
            for si in (1, -1):
                for sj in (1, -1):
                    o = np.zeros(n)
                    o[i], o[j] = si, sj
                    offs.append(o)
    return np.array(offs)


def fd_hessians(f: Callable, X, h: float, chunk: int = 4096) -> np.ndarray:
    """Symmetrized central-difference Hessians at many points, (m, n, n).

    Diagonal entries use the three-point second difference, off-diagonal
    entries the four-point cross stencil ``(f++ - f+- - f-+ + f--) / 4h^2``.

    Raises
    ------
    EvaluationOutsideDomain
        ``f`` is not finite at some stencil point.
    """
    if not h > 0:
        raise BadParams("finite-difference step must be positive")
    X = as_points(X)
    m, n = X.shape
    S = _stencil(n)
    k = S.shape[0]
    H = np.empty((m, n, n))
    for s0 in range(0, m, chunk):
        Xc = X[s0:s0 + chunk]
        pts = (Xc[:, None, :] + h * S[None, :, :]).reshape(-1, n)
        F = evaluate(f, pts).reshape(Xc.shape[0], k)
        bad = ~np.isfinite(F)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise EvaluationOutsideDomain(
                f"f is not finite at {(Xc[r] + h * S[c]).tolist()} (stencil of {Xc[r].tolist()})")
        f0 = F[:, 0]
        Hc = np.empty((Xc.shape[0], n, n))
        for i in range(n):
            Hc[:, i, i] = (F[:, 1 + 2 * i] - 2 * f0 + F[:, 2 + 2 * i]) / h ** 2
        col = 1 + 2 * n
        for i in range(n):
            for j in range(i + 1, n):
                pp, pm, mp, mm = F[:, col], F[:, col + 1], F[:, col + 2], F[:, col + 3]
                Hc[:, i, j] = Hc[:, j, i] = (pp - pm - mp + mm) / (4 * h ** 2)
                col += 4
        H[s0:s0 + chunk] = Hc
    return H


def fd_hessian(f: Callable, x, h: float = 1e-3) -> HessianReport:
    """Finite-difference Hessian at one point with its smallest eigenvalue."""
    x = as_point(x)
    H = fd_hessians(f, x[None, :], h)[0]
    return HessianReport(x, H, float(jacobi_eigenvalues(H)[0]), float(h))


@dataclass(frozen=True)
class PdCertificate:
    holds: bool
    worst_point: np.ndarray
    worst_eigenvalue: float
    step: float
    margin: float
    cells: int
    min_eigenvalues: np.ndarray = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {"holds": self.holds, "worst_point": self.worst_point.tolist(),
                "worst_eigenvalue": self.worst_eigenvalue, "step": self.step,
                "margin": self.margin, "cells": self.cells}


def hessians_of(f: Callable, X, h: float) -> np.ndarray:
    """Hessians of ``f`` at ``X``: its own ``hessians(X, h)`` if it has one, else FD.

    The barrier extensions provide one (finite differences for the blended
    part plus the closed-form barrier Hessian, whose third derivative jumps
    on the ball boundaries).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    hess = getattr(f, "hessians", None)
    return hess(X, h) if callable(hess) else fd_hessians(f, X, h)


def pd_certify(f: Callable, region, h: float | None = None, margin: float = 0.0) -> PdCertificate:
    """Smallest Hessian eigenvalue of ``f`` over the marked cells of ``region``.

    Parameters
    ----------
    region : GridDomain or (m, n) array of points
    h : float, optional
        Finite-difference step; defaults to the region's grid spacing.
    margin : float
        ``holds`` iff every smallest eigenvalue exceeds this.

    Notes
    -----
    Hessians come from :func:`hessians_of`, so the barrier extensions are
    certified with their closed-form barrier part.
    """
    if isinstance(region, GridDomain):
        X = region.centers()
        h = region.spacing if h is None else h
    else:
        X = as_points(region)
        if h is None:
            raise BadParams("a step is required when certifying on a point list")
    H = hessians_of(f, X, h)
    ev = jacobi_eigenvalues(H)[:, 0]
    j = int(np.argmin(ev))
    return PdCertificate(bool(ev[j] > margin), X[j].copy(), float(ev[j]), float(h),
                         float(margin), int(X.shape[0]), ev)


# ----------------------------------------------------------------------------
# kernel sums on a lattice


def bump(d2):
    """Unnormalized bump ``exp(-1 / (1 - r^2))`` as a function of ``r^2``."""
    d2 = np.asarray(d2, dtype=float)
    out = np.zeros_like(d2)
    inside = d2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - d2[inside]))
    return out


class _LatticeKernel:
    """Normalized bump-kernel average of lattice data at arbitrary points.

    Queries that sit exactly on lattice points (the usual case for
    finite-difference stencils with step equal to the spacing) are served
    from one precomputed correlation of the whole array.
    """

    def __init__(self, origin, spacing, data, radius, missing: str, fill: float = 0.0):
        self.fill = float(fill)
        self.c0 = np.asarray(origin, dtype=float) + 0.5 * spacing
        self.s = float(spacing)
        self.data = data
        self.radius = float(radius)
        self.missing = missing
        n = data.ndim
        K = int(np.ceil(self.radius / self.s)) + 1
        self.K = K
        grid = np.stack(np.meshgrid(*[np.arange(-K, K + 1)] * n, indexing="ij"), -1).reshape(-1, n)
        keep = np.linalg.norm(grid, axis=1) * self.s < self.radius + 1.5 * self.s * np.sqrt(n)
        self.offsets = grid[keep]
        self._cache = None

    def _lattice_tables(self):
        if self._cache is None:
            n, K = self.data.ndim, self.K
            pad = K + 1
            fill = np.nan if self.missing == "raise" else self.fill
            D = np.pad(self.data, pad, constant_values=fill)
            grid = np.stack(np.meshgrid(*[np.arange(-K, K + 1)] * n, indexing="ij"), -1)
            W = bump(np.sum((grid * self.s) ** 2, axis=-1) / self.radius ** 2)
            miss = np.isnan(D)
            num = ndimage.correlate(np.where(miss, 0.0, D), W, mode="constant",
                                    cval=0.0 if self.missing == "raise" else self.fill)
            hit = ndimage.correlate(miss.astype(float), (W > 0).astype(float), mode="constant",
                                    cval=1.0) > 0
            self._cache = (num / W.sum(), hit, pad)
        return self._cache

    def __call__(self, X, chunk: int = 2048):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        u = (X - self.c0) / self.s
        iu = np.rint(u)
        shape = np.array(self.data.shape)
        fast = np.all((np.abs(u - iu) < 1e-7) & (iu >= -1) & (iu <= shape), axis=1)
        if fast.any():
            vals, hit, pad = self._lattice_tables()
            idx = tuple((iu[fast].astype(np.int64) + pad).T)
            if self.missing == "raise" and hit[idx].any():
                r = int(np.flatnonzero(hit[idx])[0])
                raise SupportEscapesData(
                    f"kernel around {X[fast][r].tolist()} reaches cells without data")
            out[fast] = vals[idx]
        slow = np.flatnonzero(~fast)
        for s0 in range(0, slow.size, chunk):
            rows = slow[s0:s0 + chunk]
            out[rows] = self._direct(X[rows])
        return out

    def _direct(self, Xc):
        shape = np.array(self.data.shape)
        base = np.rint((Xc - self.c0) / self.s).astype(np.int64)
        idx = base[:, None, :] + self.offsets[None, :, :]
        Y = self.c0 + idx * self.s
        w = bump(np.sum((Xc[:, None, :] - Y) ** 2, axis=2) / self.radius ** 2)
        inb = np.all((idx >= 0) & (idx < shape), axis=2)
        vals = np.zeros(w.shape)
        vals[inb] = self.data[tuple(idx[inb].T)]
        missing = ~inb | np.isnan(vals)
        if self.missing == "raise":
            hit = missing & (w > 0)
            if hit.any():
                r = int(np.argwhere(hit)[0][0])
                raise SupportEscapesData(
                    f"kernel around {Xc[r].tolist()} reaches cells without data")
        vals[missing] = 0.0 if self.missing == "raise" else self.fill
        return np.sum(w * vals, axis=1) / np.sum(w, axis=1)


class Mollifier:
    """Bump-kernel smoothing of a grid function.

    ``g(x) = sum_j F(y_j) phi(x - y_j) / sum_j phi(x - y_j)`` over cell
    centers ``y_j`` with ``phi(z) ∝ exp(-1 / (1 - |z/delta|^2))`` on
    ``|z| < delta``. The weights sum to one exactly, so constants are
    reproduced exactly; the symmetric kernel reproduces affine data up to
    lattice effects.

    Raises :class:`SupportEscapesData` when a query's kernel touches a cell
    without data.
    """

    def __init__(self, g: GridFunction, delta: float):
        if delta < 2 * g.domain.spacing * (1 - 1e-9):
            raise BadParams(f"delta={delta:g} is below two grid spacings")
        self.delta = float(delta)
        self.grid = g
        self._k = _LatticeKernel(g.domain.origin, g.domain.spacing, g.as_array(), delta, "raise")

    def __call__(self, X):
        return self._k(X)


def mollify(g: GridFunction, delta: float) -> Mollifier:
    return Mollifier(g, delta)


class SmoothCutoff:
    """C-infinity blend: 1 within ``inner_radius`` of a set, 0 beyond ``outer_radius``.

    The indicator of the set dilated by the mid radius is smoothed with a
    bump of radius just under half the gap, so the plateaus hold exactly.
    Distances are to the marked cell centers of ``inner``.
    """

    def __init__(self, inner: GridDomain, inner_radius: float, outer_radius: float):
        a, b = float(inner_radius), float(outer_radius)
        if not 0 <= a < b:
            raise BadParams("need 0 <= inner_radius < outer_radius")
        s = inner.spacing
        self.rho = 0.49 * (b - a)
        if self.rho < 2 * s * (1 - 1e-9):
            raise BadParams(f"cutoff gap {b - a:g} is too narrow for grid spacing {s:g}")
        self.inner_radius, self.outer_radius = a, b
        self.inner = inner
        lattice = inner.padded(int(np.ceil((b + self.rho) / s)) + 3)
        dil = lattice.distance_field() <= 0.5 * (a + b)
        self.lattice = lattice
        # averaging the set and its complement separately makes both plateaus exact
        self._k = _LatticeKernel(lattice.origin, s, dil.astype(float), self.rho, "zero")
        self._kc = _LatticeKernel(lattice.origin, s, (~dil).astype(float), self.rho, "zero",
                                  fill=1.0)
        self._lo = lattice.origin + self.rho
        self._hi = lattice.upper - self.rho

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        near = np.all((X > self._lo) & (X < self._hi), axis=1)
        if near.any():
            a = self._k(X[near])
            high = a > 0.5
            if high.any():
                a[high] = 1.0 - self._kc(X[near][high])
            out[near] = a
        return out

    def plateaus(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Points around which the cutoff is identically 1, resp. identically 0.

        Every kernel cell seen from a point closer than ``mid - rho`` to the
        set is dilated, and none is beyond ``mid + rho``; the inequalities are
        strict, so the plateau holds on a small ball around the point.
        """
        if not hasattr(self, "_tree"):
            self._tree = cKDTree(self.inner.centers())
        d = self._tree.query(np.atleast_2d(X))[0]
        mid = 0.5 * (self.inner_radius + self.outer_radius)
        return d < mid - self.rho, d > mid + self.rho

    def spec(self) -> dict:
        return {"profile": "mollified indicator (bump kernel)", "inner_radius": self.inner_radius,
                "outer_radius": self.outer_radius, "kernel_radius": self.rho,
                "spacing": self.lattice.spacing}


# ----------------------------------------------------------------------------
# barrier


GAMMA_SPEC = {"derivative": "t*(t-1)**2 for t > 1, 0 otherwise",
              "value": "t**4/4 - 2*t**3/3 + t**2/2 - 1/12 for t > 1, 0 otherwise"}


def gamma(t):
    """Barrier profile: zero on [0, 1], ``gamma'(t) = t (t - 1)^2`` beyond."""
    t = np.asarray(t, dtype=float)
    return np.where(t > 1, t ** 4 / 4 - 2 * t ** 3 / 3 + t ** 2 / 2 - 1 / 12, 0.0)


@dataclass(frozen=True)
class BarrierConfig:
    centers: np.ndarray
    radii: np.ndarray
    slack: float = 0.0
    gamma_spec: dict = field(default_factory=lambda: dict(GAMMA_SPEC))

    def __post_init__(self):
        C = as_points(self.centers)
        r = np.asarray(self.radii, dtype=float).ravel()
        if r.size != C.shape[0] or np.any(r <= 0):
            raise BadParams("one positive radius per ball is required")
        object.__setattr__(self, "centers", C)
        object.__setattr__(self, "radii", r)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def in_all_balls(self, X, closed: bool = False) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = np.linalg.norm(X[:, None, :] - self.centers[None], axis=2)
        return np.all(d <= self.radii if closed else d < self.radii, axis=1)

    def to_json_dict(self) -> dict:
        return {"balls": [{"center": c.tolist(), "radius": float(r)}
                          for c, r in zip(self.centers, self.radii)],
                "slack": self.slack, "gamma": self.gamma_spec}


def barrier_eval(config: BarrierConfig, X):
    """Value, gradient and Hessian of ``sum_i gamma(|x - x_i| / r_i)``.

    Accepts one point or an (m, n) array; returns arrays with a leading
    batch axis in the second case. With ``u = (x - x_i)/|x - x_i|`` and
    ``t = |x - x_i|/r_i`` a ball contributes gradient ``(t-1)^2 (x - x_i) / r_i^2``
    and Hessian ``[(t-1)^2 I + 2 t (t-1) u u^T] / r_i^2`` for ``t > 1``.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    m, n = X.shape
    value = np.zeros(m)
    grad = np.zeros((m, n))
    hess = np.zeros((m, n, n))
    eye = np.eye(n)
    for c, r in zip(config.centers, config.radii):
        D = X - c
        dist = np.linalg.norm(D, axis=1)
        t = dist / r
        out = t > 1
        if not out.any():
            continue
        Do, to, do = D[out], t[out], dist[out]
        value[out] += gamma(to)
        a = (to - 1) ** 2
        grad[out] += (a / r ** 2)[:, None] * Do
        u = Do / do[:, None]
        b = 2 * (to - 1)
        hess[out] += (a[:, None, None] * eye + (b * to)[:, None, None]
                      * u[:, :, None] * u[:, None, :]) / r ** 2
    if single:
        return float(value[0]), grad[0], hess[0]
    return value, grad, hess


def barrier_function(config: BarrierConfig) -> Callable:
    return lambda X: barrier_eval(config, np.atleast_2d(X))[0]


def _directions(n: int) -> np.ndarray:
    dirs = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1
        dirs += [e, -e]
    for i in range(n):
        for j in range(i + 1, n):
            for sj in (1, -1):
                d = np.zeros(n)
                d[i], d[j] = 1, sj
                dirs.append(d / np.sqrt(2))
    return np.array(dirs)


def _boundary_sample(config: BarrierConfig, center, count: int, seed: int = 0):
    """Points on the boundary of the ball intersection, by ray casting from ``center``."""
    n = config.dim
    if n == 1:
        U = np.array([[1.0], [-1.0]])
    elif n == 2:
        th = 2 * np.pi * np.arange(count) / count
        U = np.stack([np.cos(th), np.sin(th)], 1)
    else:
        U = np.random.default_rng(seed).normal(size=(count, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    tmax = np.full(U.shape[0], np.inf)
    for c, r in zip(config.centers, config.radii):
        w = center - c
        b = U @ w
        disc = b ** 2 - (w @ w - r ** 2)
        tmax = np.minimum(tmax, -b + np.sqrt(np.maximum(disc, 0)))
    return center + tmax[:, None] * U


def ball_cover(hull_points, omega_prime_margin: float, eps: float, radius=None,
               radius_factor: float = 1.5, omega_prime: GridDomain | None = None,
               boundary_samples: int = 720, max_rounds: int = 16) -> BarrierConfig:
    """Balls whose intersection squeezes the hull of ``hull_points``.

    One ball per direction ``d``: center ``p_d - R d`` for a supporting point
    ``p_d`` (the centroid of the generators maximizing ``d . x``), radius
    ``R + s``. Every generator is then inside every ball and each ball stays
    within ``s`` of its supporting hyperplane. The directions start as
    ``±e_i`` and ``(e_i ± e_j)/sqrt 2`` (``i < j``).

    The closed intersection is checked on a ray-cast boundary sample to lie
    within ``min(omega_prime_margin, eps)`` of the hull (and inside
    ``omega_prime`` when given). Violating samples contribute their outward
    normals as new directions; when that stops helping, ``s`` is halved.
    ``s`` starts at half the limit.

    Parameters
    ----------
    radius : float or "50diam", optional
        Distance ``R`` from supporting point to ball center. Default: the
        smallest ``R`` that keeps every generator inside, times
        ``radius_factor``.
    """
    P = as_points(hull_points)
    if P.shape[0] > P.shape[1] + 1:
        try:
            P = P[hull_vertex_indices(P)]
        except Exception:       # degenerate (lower-dimensional) hulls keep every point
            pass
    if not (omega_prime_margin > 0 and eps > 0):
        raise BadParams("margins must be positive")
    limit = min(omega_prime_margin, eps)
    diam = float(np.max(np.linalg.norm(P[:, None] - P[None], axis=2))) if len(P) > 1 else 0.0
    dirs = _directions(P.shape[1])
    s = limit / 2
    for _ in range(max_rounds):
        cfg = _build_cover(P, dirs, s, radius, radius_factor, diam)
        bad = _cover_violations(cfg, P, limit, omega_prime, boundary_samples)
        if bad is None:
            return cfg
        fresh = []
        for b in bad:
            _, p = hull_distance(P, b)
            d = b - p
            nd = np.linalg.norm(d)
            if nd > 0:
                d = d / nd
                if np.max(dirs @ d) < 1 - 1e-6 and all(np.dot(d, e) < 1 - 1e-6 for e in fresh):
                    fresh.append(d)
        if fresh:
            dirs = np.vstack([dirs, fresh])
        else:
            s /= 2
    raise CoverageCheckFailed("ball intersection does not fit the required neighbourhood")


def _build_cover(P, dirs, s, radius, radius_factor, diam) -> BarrierConfig:
    centers, radii = [], []
    for d in dirs:
        proj = P @ d
        top = proj.max()
        face = np.abs(proj - top) <= 1e-12 * max(1.0, abs(top))
        p = P[face].mean(axis=0)
        u = top - proj
        need = (np.sum((P - p) ** 2, axis=1) - s ** 2) / (2 * (u + s))
        R_min = max(float(need.max()), s)
        if radius is None:
            R = radius_factor * R_min
        elif radius == "50diam":
            R = max(50 * diam, R_min * 1.01)
        else:
            R = float(radius)
            if R < R_min:
                raise BadParams(f"radius {R:g} is too small to contain the generators")
        centers.append(p - R * d)
        radii.append(R + s)
    return BarrierConfig(np.array(centers), np.array(radii), s)


def _cover_violations(cfg, P, limit, omega_prime, count):
    """Boundary samples violating the cover requirements (``None`` if there are none)."""
    if not cfg.in_all_balls(P).all():
        raise CoverageCheckFailed("a generator escapes a ball")
    B = _boundary_sample(cfg, P.mean(axis=0), count)
    dist = np.array([hull_distance(P, b)[0] for b in B])
    bad = dist >= limit
    if omega_prime is not None:
        bad |= ~omega_prime.contains(B)
    if not bad.any():
        return None
    order = np.argsort(-dist[bad])
    return B[bad][order][:4 * P.shape[1]]


# ----------------------------------------------------------------------------
# extensions


@dataclass
class SmoothExtension:
    """A certified smooth extension together with its recipe.

    ``kind`` is ``"hull"``, ``"barrier"`` or ``"full"``. Calling the object
    evaluates the extension on an (m, n) array.
    """

    kind: str
    function: Callable = field(repr=False)
    base: Callable = field(repr=False)
    blend: dict
    auxiliary: dict
    constant_c: float
    valid_region: GridDomain = field(repr=False)
    certificates: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    parts: dict = field(default_factory=dict, repr=False)

    def __call__(self, X):
        return self.function(np.atleast_2d(np.asarray(X, dtype=float)))

    def hessians(self, X, h: float) -> np.ndarray:
        """Hessians used for certification (see :func:`hessians_of`)."""
        return hessians_of(self.function, X, h)

    def recipe(self) -> dict:
        return {"kind": self.kind, "blend": self.blend, "auxiliary": self.auxiliary,
                "constant_c": self.constant_c,
                "valid_region": self.valid_region.to_json_dict(),
                "certificates": {k: v.to_json_dict() for k, v in self.certificates.items()},
                "trace": self.trace}

    def to_json(self) -> str:
        return json.dumps(self.recipe(), sort_keys=True)


def _hull_cells(lattice: GridDomain, points) -> GridDomain:
    """Cells of ``lattice`` whose centers lie in the hull of ``points``."""
    P = as_points(points)
    C = lattice.all_centers().reshape(-1, lattice.dim)
    if lattice.dim == 1:
        lo, hi = P.min(), P.max()
        mask = (C[:, 0] >= lo - 1e-12) & (C[:, 0] <= hi + 1e-12)
    else:
        eq = ConvexHull(P).equations
        mask = np.all(C @ eq[:, :-1].T + eq[:, -1] <= 1e-10, axis=1)
    return lattice.with_indicator(mask.reshape(lattice.shape))


def _hull_gap(points, X) -> np.ndarray:
    """Lower bound on the distance from ``X`` to the hull of ``points`` (largest facet offset)."""
    P = as_points(points)
    X = np.atleast_2d(X)
    if P.shape[1] == 1:
        return np.maximum(np.maximum(P.min() - X[:, 0], X[:, 0] - P.max()), 0.0)
    eq = ConvexHull(P).equations
    return np.maximum((X @ eq[:, :-1].T + eq[:, -1]).max(axis=1), 0.0)


def _sample_convex(points, values) -> tuple[bool, LowerEnvelope]:
    env = LowerEnvelope(points, values)
    ok = bool(np.all(env(points) - values >= -1e-9 * (1 + np.abs(values))))
    return ok, env


def _embed(small: GridDomain, big: GridDomain) -> np.ndarray:
    """Indicator of ``small`` placed on the lattice ``big`` (aligned lattices)."""
    off = np.rint((small.origin - big.origin) / big.spacing).astype(int)
    if np.any(np.abs(small.origin - (big.origin + off * big.spacing)) > 1e-9 * big.spacing) \
            or abs(small.spacing - big.spacing) > 1e-12 * big.spacing:
        raise DimensionMismatch("lattices are not aligned")
    out = np.zeros(big.shape, dtype=bool)
    idx = small.marked_indices() + off
    ok = np.all((idx >= 0) & (idx < np.array(big.shape)), axis=1)
    if not ok.all():
        raise DimensionMismatch("domain does not fit in the target lattice")
    out[tuple(idx.T)] = True
    return out


def box_lattice(like: GridDomain, lo, hi) -> GridDomain:
    """Lattice aligned with ``like`` covering the box ``[lo, hi]`` (all cells marked)."""
    lo, hi = as_point(lo, like.dim), as_point(hi, like.dim)
    s = like.spacing
    i0 = np.floor((lo - like.origin) / s + 1e-9).astype(int)
    i1 = np.ceil((hi - like.origin) / s - 1e-9).astype(int)
    return GridDomain(like.origin + i0 * s, s, np.ones(tuple(i1 - i0), dtype=bool))


def coarse_lattice(lo, hi, spacing: float) -> GridDomain:
    lo, hi = as_point(lo), as_point(hi)
    shape = np.maximum(np.round((hi - lo) / spacing).astype(int), 1)
    step = float(np.max((hi - lo) / shape))
    return GridDomain(lo, step, np.ones(tuple(shape), dtype=bool))


def hull_smooth_extension(f: Callable, omega: GridDomain, eps: float, c0: float = 0.1,
                          delta0: float | None = None, max_halvings: int = 12,
                          strong_fractions=(0.8, 0.4, 0.2),
                          delta_min: float | None = None) -> SmoothExtension:
    """Extend ``f`` from ``omega`` to its hull with positive definite Hessian.

    With ``q = |x - x0|^2 / 2`` (``x0`` the centroid of ``omega``) the roof of
    ``f - mu q`` over the samples of the ``3 eps`` neighbourhood, plus
    ``mu q``, is a convex extension with curvature at least ``mu``. ``mu`` is
    the largest of ``strong_fractions`` times the certified smallest
    eigenvalue for which ``f - mu q`` is still convex on the samples, else 0.
    That extension is smoothed with a bump of radius ``delta``, an affine fit of
    its offset from ``f`` on ``omega^eps`` is removed, and the result ``g`` is
    blended::

        h = f + (1 - alpha) (g - f + c |x - x0|^2)

    where ``alpha = 1`` on ``omega`` and ``0`` beyond distance ``eps``.
    ``delta`` and ``c`` are halved from ``(delta0, c0)`` (``delta0`` defaults
    to ``eps``; ``delta`` is floored at ``delta_min``, default five spacings)
    until the Hessian of
    ``h`` is certified positive definite on the hull of
    ``omega^(2 eps - 2 spacing)``.

    Raises
    ------
    PreconditionFailed
        ``f`` is not Hessian-PD or not convex on the ``3 eps`` neighbourhood.
    TuningFailed
        No tuning step certified; the exception carries the trace.
    """
    s = omega.spacing
    if eps < 4.1 * s:
        raise BadParams(f"eps={eps:g} needs a grid spacing below eps/4.1 (got {s:g})")
    delta0 = eps if delta0 is None else float(delta0)
    if not 2 * s <= delta0 <= eps:
        raise BadParams("delta0 must lie between two spacings and eps")
    # a kernel much wider than the finite-difference step keeps the certified
    # Hessian of the smoothed roof honest near its kinks
    delta_min = min(delta0, 5 * s) if delta_min is None else max(float(delta_min), 2 * s)
    lattice = omega.padded(int(np.ceil((3 * eps + delta0) / s)) + 4)
    base = lattice.with_indicator(_embed(omega, lattice))
    nb3 = epsilon_neighborhood(base, 3 * eps)

    pre = pd_certify(f, nb3, s, 0.0)
    if not pre.holds:
        raise PreconditionFailed(
            f"Hessian not positive definite on the 3*eps neighbourhood "
            f"(min eigenvalue {pre.worst_eigenvalue:.3e} at {pre.worst_point.tolist()})")
    P3 = nb3.centers()
    F3 = evaluate(f, P3)
    x0 = omega.centers().mean(axis=0)

    def q(X):
        return 0.5 * np.sum((np.atleast_2d(X) - x0) ** 2, axis=1)

    for frac in (*strong_fractions, 0.0):
        mu = frac * pre.worst_eigenvalue
        ok, env = _sample_convex(P3, F3 - mu * q(P3))
        if ok:
            break
    else:
        raise PreconditionFailed("f is not convex on the 3*eps neighbourhood samples")

    hull3 = _hull_cells(lattice, P3)
    H3 = hull3.centers()
    table = np.full(lattice.shape, np.nan)
    table[tuple(hull3.marked_indices().T)] = env(H3) + mu * q(H3)
    table[tuple(nb3.marked_indices().T)] = F3
    roof_fn = GridFunction(hull3, table[hull3.indicator])

    alpha = SmoothCutoff(base, 0.0, eps)
    region = _hull_cells(lattice, epsilon_neighborhood(base, 2 * eps - 2 * s).centers())
    near = epsilon_neighborhood(base, eps)
    Xn = near.centers()
    An = np.hstack([Xn, np.ones((Xn.shape[0], 1))])
    fn = evaluate(f, Xn)

    def blended(g, c):
        def h(X):
            X = np.atleast_2d(X)
            a = alpha(X)
            out = np.empty(X.shape[0])
            one = a >= 1.0
            out[one] = evaluate(f, X[one])
            rest = ~one
            if rest.any():
                Xr, ar = X[rest], a[rest]
                aux = g(Xr) + 2 * c * q(Xr)
                fr = np.zeros(Xr.shape[0])
                part = ar > 0
                if part.any():
                    fr[part] = evaluate(f, Xr[part])
                out[rest] = ar * fr + (1 - ar) * aux
            return out
        return h

    trace = []
    for k in range(max_halvings + 1):
        delta = max(delta0 / 2 ** k, delta_min)
        c = c0 / 2 ** k
        smooth = Mollifier(roof_fn, delta)
        coef = np.linalg.lstsq(An, smooth(Xn) - fn, rcond=None)[0]
        g = _Shifted(smooth, coef)
        h = blended(g, c)
        cert = pd_certify(h, region, s, 0.0)
        cert_near = pd_certify(h, near, s, 0.0)
        trace.append({"step": k, "delta": delta, "c": c,
                      "min_eigenvalue": cert.worst_eigenvalue,
                      "min_eigenvalue_near": cert_near.worst_eigenvalue,
                      "worst_point": cert.worst_point.tolist()})
        if cert.holds:
            return SmoothExtension(
                "hull", h, f, alpha.spec(),
                {"type": "mollified strongly convex roof", "delta": delta, "mu": mu,
                 "center": x0.tolist(), "affine_shift": coef.tolist(),
                 "kernel": "exp(-1/(1-|z/delta|^2))", "roof_samples": int(P3.shape[0])},
                c, region, {"precondition": pre, "region": cert, "near": cert_near}, trace,
                {"alpha": alpha, "g": g, "lattice": lattice})
    raise TuningFailed(f"no certified extension after {max_halvings} halvings", trace)


class _BarrierBlend:
    """``alpha (f - l) + l + c g`` with the barrier Hessian in closed form.

    ``l`` is an affine function (coefficients ``affine``, constant last);
    it does not change any Hessian but keeps the blended term small.
    """

    def __init__(self, alpha, f, balls: BarrierConfig, c: float, affine=None):
        self.alpha, self.f, self.balls, self.c = alpha, f, balls, float(c)
        self.affine = np.zeros(balls.dim + 1) if affine is None else np.asarray(affine, float)

    def _affine(self, X):
        return X @ self.affine[:-1] + self.affine[-1]

    def blended(self, X):
        X = np.atleast_2d(X)
        a = self.alpha(X)
        out = np.zeros(X.shape[0])
        part = a > 0
        if part.any():
            Xp = X[part]
            out[part] = a[part] * (evaluate(self.f, Xp) - self._affine(Xp))
        return out

    def __call__(self, X):
        X = np.atleast_2d(X)
        a = self.alpha(X)
        out = np.empty(X.shape[0])
        # on the plateau return f itself rather than (f - l) + l, which may round
        one = a >= 1.0
        if one.any():
            out[one] = evaluate(self.f, X[one])
        rest = ~one
        if rest.any():
            Xr, ar = X[rest], a[rest]
            out[rest] = self._affine(Xr)
            part = ar > 0
            if part.any():
                out[rest.nonzero()[0][part]] += ar[part] * (evaluate(self.f, Xr[part])
                                                            - self._affine(Xr[part]))
        return out + self.c * barrier_eval(self.balls, X)[0]

    def hessians(self, X, h):
        # on the cutoff plateaus the blend is f (resp. 0) on a neighbourhood,
        # so only f is differenced there; elsewhere the whole blend is
        X = np.atleast_2d(X)
        out = self.c * barrier_eval(self.balls, X)[2]
        one, zero = self.alpha.plateaus(X)
        if one.any():
            out[one] += hessians_of(self.f, X[one], h)
        mid = ~(one | zero)
        if mid.any():
            out[mid] += fd_hessians(self.blended, X[mid], h)
        return out


class _Shifted:
    """``g(x) - (a . x + b)``; subtracting an affine function keeps convexity."""

    def __init__(self, g, coef):
        self.g = g
        self.coef = np.asarray(coef, dtype=float)

    def __call__(self, X):
        X = np.atleast_2d(X)
        return self.g(X) - X @ self.coef[:-1] - self.coef[-1]


def outside_smooth_extension(f: Callable, omega: GridDomain, omega_prime, eps: float, bbox,
                             c0: float = 1.0, max_doublings: int = 20,
                             coarse_spacing: float | None = None,
                             radius=None) -> SmoothExtension:
    """Continue ``f`` beyond a neighbourhood of the hull of ``omega`` with a barrier.

    ``h = alpha (f - l) + l + c g`` where ``alpha`` is 1 within ``eps`` of
    ``omega`` and 0 beyond ``2 eps``, ``l`` is the affine least-squares fit
    of ``f`` on the ``2 eps`` neighbourhood (it keeps ``alpha'' f`` small), and ``g`` is the ball barrier of
    :func:`ball_cover`, zero on the hull. ``c`` doubles from ``c0`` until
    ``h`` is certified on the cells outside ``omega_prime`` within
    ``max(2 eps, margin)`` plus one coarse spacing of the hull; the result is
    then also certified on ``omega^eps`` and, on a coarser grid
    (``coarse_spacing``), beyond that band. A margin wider than ``2 eps``
    leaves ``h = c g`` outside ``omega_prime``, which avoids fighting the
    weak tangential curvature of large balls.

    Parameters
    ----------
    omega_prime : float or GridDomain
        Open set containing the hull: either a margin (cells closer than
        that to the hull) or explicit cells.
    bbox : pair of points
        Evaluation box ``(lo, hi)``.

    Distances to the hull are measured on the grid (to the nearest hull
    cell center).
    """
    s = omega.spacing
    lo, hi = as_point(bbox[0], omega.dim), as_point(bbox[1], omega.dim)
    reach = 2 * eps + 0.49 * eps + 6 * s
    olo, ohi = omega.origin, omega.upper
    big = box_lattice(omega, np.minimum(lo, olo - reach), np.maximum(hi, ohi + reach))
    C = big.all_centers().reshape(-1, big.dim)
    base = big.with_indicator(_embed(omega, big))
    nb1 = epsilon_neighborhood(base, eps)
    nb2 = epsilon_neighborhood(base, 2 * eps)
    pre = pd_certify(f, nb2, s, 0.0)
    if not pre.holds:
        raise PreconditionFailed(
            f"Hessian not positive definite on the 2*eps neighbourhood "
            f"(min eigenvalue {pre.worst_eigenvalue:.3e} at {pre.worst_point.tolist()})")

    P = omega.centers()
    hullpts = P[hull_vertex_indices(P)] if P.shape[0] > P.shape[1] + 1 else P
    hull_dist = _hull_cells(big, hullpts).distance_field().ravel()
    if isinstance(omega_prime, GridDomain):
        if not omega_prime.contains(hullpts).all():
            raise PreconditionFailed("omega_prime does not contain the hull of omega")
        prime = omega_prime.contains(C)
        margin = float(max(hull_dist[~prime].min() - s, s)) if (~prime).any() else 1.0
        balls = ball_cover(hullpts, margin, eps, radius=radius, omega_prime=omega_prime)
    else:
        margin = float(omega_prime)
        prime = hull_dist < margin
        balls = ball_cover(hullpts, margin, eps, radius=radius)

    alpha = SmoothCutoff(base, eps, 2 * eps)
    in_box = np.all((C >= lo) & (C <= hi), axis=1)
    coarse = coarse_lattice(lo, hi, coarse_spacing or max(s, float(np.max(hi - lo)) / 60))
    # the fine tuning band reaches one coarse spacing past both the blend
    # support and omega_prime, so it overlaps the coarse far-field check
    reach_fine = max(2 * eps, margin) + coarse.spacing
    tune_mask = (hull_dist <= reach_fine) & ~prime & in_box
    if not tune_mask.any():
        raise BadParams("no cells outside omega_prime near the hull; enlarge bbox")
    tune_region = big.with_indicator(tune_mask.reshape(big.shape))
    cc = coarse.centers()
    far_pts = cc[_hull_gap(hullpts, cc) > reach_fine]

    # affine least-squares fit of f over the blend support
    X2 = nb2.centers()
    A2 = np.hstack([X2, np.ones((X2.shape[0], 1))])
    affine = np.linalg.lstsq(A2, evaluate(f, X2), rcond=None)[0]

    def make(c):
        return _BarrierBlend(alpha, f, balls, c, affine)

    trace = []
    c = float(c0)
    for k in range(max_doublings + 1):
        h = make(c)
        cert = pd_certify(h, tune_region, s, 0.0)
        trace.append({"step": k, "c": c, "min_eigenvalue": cert.worst_eigenvalue,
                      "worst_point": cert.worst_point.tolist()})
        if cert.holds:
            break
        c *= 2
    else:
        raise TuningFailed(f"no certified barrier extension after {max_doublings} doublings",
                           trace)
    certs = {"precondition": pre, "tuning_region": cert,
             "near": pd_certify(h, nb1, s, 0.0)}
    if len(far_pts):
        certs["far"] = pd_certify(h, far_pts, coarse.spacing, 0.0)
    if not all(v.holds for v in certs.values()):
        bad = [k for k, v in certs.items() if not v.holds]
        raise TuningFailed(f"barrier extension failed certification on {bad}", trace)
    valid = (nb1.indicator.ravel() | ~prime) & in_box
    return SmoothExtension(
        "barrier", h, f, alpha.spec(),
        {"type": "ball barrier", "affine": affine.tolist(), **balls.to_json_dict()}, c,
        big.with_indicator(valid.reshape(big.shape)), certs, trace,
        {"alpha": alpha, "balls": balls, "omega_prime_margin": margin})


def full_smooth_extension(band, f: Callable, eps: float, bbox, eps_outer: float | None = None,
                          margin: float | None = None, **kwargs) -> SmoothExtension:
    """Extension to ``bbox`` minus the hole of a band domain.

    Step one fills the hull of the band (:func:`hull_smooth_extension`
    with ``eps``); step two continues that function outside
    (:func:`outside_smooth_extension` from the outer domain, with
    ``eps_outer`` defaulting to ``0.8 eps`` and the omega-prime margin
    to ``0.8 eps_outer``).
    """
    from .domains import BandDomain
    if not isinstance(band, BandDomain):
        raise BadParams("full_smooth_extension needs a BandDomain")
    eps2 = 0.8 * eps if eps_outer is None else eps_outer
    if eps2 > eps - band.outer.spacing:
        raise BadParams("eps_outer must stay below eps minus one spacing")
    m = 0.8 * eps2 if margin is None else margin
    step1 = hull_smooth_extension(f, band.band, eps, **{k: v for k, v in kwargs.items()
                                                         if k in ("c0", "delta0", "max_halvings")})
    step2 = outside_smooth_extension(step1, band.outer, m, eps2, bbox,
                                     **{k: v for k, v in kwargs.items()
                                        if k in ("max_doublings", "coarse_spacing", "radius")})
    region = step2.valid_region
    if band.hole is not None:
        hole = band.hole.contains(region.all_centers().reshape(-1, region.dim))
        region = region.with_indicator(region.indicator & ~hole.reshape(region.shape))
    certs = {f"hull.{k}": v for k, v in step1.certificates.items()}
    certs.update({f"outside.{k}": v for k, v in step2.certificates.items()})
    return SmoothExtension(
        "full", step2.function, f, {"hull": step1.blend, "outside": step2.blend},
        {"hull": step1.auxiliary, "outside": step2.auxiliary}, step2.constant_c, region, certs,
        [{"stage": "hull", **t} for t in step1.trace] + [{"stage": "outside", **t}
                                                          for t in step2.trace],
        {"hull": step1, "outside": step2})


__all__ = [
    "BarrierConfig", "HessianReport", "Mollifier", "PdCertificate", "SmoothCutoff",
    "SmoothExtension", "ball_cover", "barrier_eval", "barrier_function", "bump", "fd_hessian",
    "fd_hessians", "full_smooth_extension", "gamma", "hessians_of", "hull_smooth_extension",
    "jacobi_eigenvalues", "mollify", "outside_smooth_extension", "pd_certify",
]
