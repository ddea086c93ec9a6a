"""Non-smooth convex extensions of sampled convex functions.

* :func:`convex_roof` fills the convex hull with the largest convex
  minorant of the data (an LP per query, or the lifted lower envelope for
  many queries at once);
* :func:`roof_feasibility` documents why the roof is finite, including an
  explicit lower-bound certificate built from an interior sample;
* :func:`outer_extension` extends beyond the hull by the supremum of
  secant extrapolations, the smallest convex extension;
* :func:`band_extension` chains the two for a convex domain with a hole.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .classify import (ConvexCombinationCertificate, LipschitzEstimate, convexity_verdict,
                       lipschitz_estimate)
from .domains import (BandDomain, FiniteSampledFunction, GridFunction, as_point, as_points)
from .errors import (BadParams, DimensionMismatch, NotConvexInput, NotInHull,
                     QueryInsideHull)
from .geometry import (LowerEnvelope, affine_hull_dim, hull_membership, hull_vertex_indices,
                       relative_interior_test)
from .lp import MAX_VARS, LpProblem, solve_lp
from .tolerances import DEFAULT_TOLERANCES, ToleranceConfig


@dataclass(frozen=True)
class RoofResult:
    value: float
    certificate: ConvexCombinationCertificate

    def to_json_dict(self) -> dict:
        return {"value": self.value, "certificate": self.certificate.to_json_dict()}


def _finite(f) -> FiniteSampledFunction:
    if isinstance(f, GridFunction):
        return f.to_finite()
    if isinstance(f, FiniteSampledFunction):
        return f
    raise BadParams(f"expected sampled function, got {type(f).__name__}")


def convex_roof(f, query, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> RoofResult:
    """Value at ``query`` of the largest convex function below the data.

    Solves ``min sum w_i f(x_i)`` over convex combinations ``sum w_i x_i =
    query``. The optimal vertex has at most ``n + 1`` support points.

    Raises
    ------
    NotInHull
        ``query`` is outside the hull of the sample points.
    """
    f = _finite(f)
    P, v = f.points, f.values
    q = as_point(query, f.dimension)
    if P.shape[0] > MAX_VARS:
        return _roof_by_envelope(P, v, q)
    A = np.vstack([P.T, np.ones((1, P.shape[0]))])
    b = np.concatenate([q, [1.0]])
    sol = solve_lp(LpProblem(v, A, b), tol)
    if not sol.optimal:
        raise NotInHull(f"query {q.tolist()} is outside the hull of the samples")
    lam = sol.primal
    nz = np.flatnonzero(lam > 1e-14)
    w = lam[nz] / lam[nz].sum()
    value = float(w @ v[nz])
    cert = ConvexCombinationCertificate(q.copy(), P[nz].copy(), w, value, value,
                                        tuple(int(i) for i in nz))
    return RoofResult(value, cert)


def _roof_by_envelope(P, v, q):
    if not hull_membership(P, q).inside:
        raise NotInHull(f"query {q.tolist()} is outside the hull of the samples")
    env = LowerEnvelope(P, v)
    support, w = env.support(q)
    value = float(w @ v[support])
    cert = ConvexCombinationCertificate(q.copy(), P[support].copy(), w, value, value,
                                        tuple(int(i) for i in support))
    return RoofResult(value, cert)


def roof_values(f, queries, method: str = "auto",
                tol: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Roof values at many hull points.

    ``method="lp"`` runs :func:`convex_roof` per query; ``"hull"`` evaluates
    the lifted lower envelope (needs full-dimensional samples); ``"auto"``
    picks the envelope above a few dozen queries or the LP size limit.
    """
    f = _finite(f)
    Q = as_points(queries, f.dimension)
    if method == "auto":
        full = affine_hull_dim(f.points) == f.dimension
        method = "hull" if full and (len(f) > MAX_VARS or Q.shape[0] > 32) else "lp"
    if method == "lp":
        return np.array([convex_roof(f, q, tol).value for q in Q])
    if method == "hull":
        return LowerEnvelope(f.points, f.values)(Q)
    raise BadParams(f"unknown method {method!r}")


# ----------------------------------------------------------------------------
# feasibility

class FeasibilityCondition(str, Enum):
    BOUNDED_BELOW = "BoundedBelow"
    RELATIVE_INTERIOR_POINT = "RelativeInteriorPoint"
    NEITHER_DETECTED = "NeitherDetected"


@dataclass(frozen=True)
class LowerBoundCertificate:
    """``interior_point = lam * query + sum lam_j support_j`` giving
    ``roof(query) >= (f(interior_point) - sum lam_j f(support_j)) / lam``."""

    query: np.ndarray
    bound: float
    interior_point: np.ndarray
    query_weight: float
    support_points: np.ndarray
    support_weights: np.ndarray

    def to_json_dict(self) -> dict:
        return {"query": self.query.tolist(), "bound": self.bound,
                "interior_point": self.interior_point.tolist(),
                "query_weight": self.query_weight,
                "support_points": self.support_points.tolist(),
                "support_weights": self.support_weights.tolist()}


@dataclass(frozen=True)
class FeasibilityReport:
    condition: FeasibilityCondition
    min_value: float
    interior_index: int | None = None
    spanning_indices: tuple = ()
    lower_bound_at: LowerBoundCertificate | None = None

    def to_json_dict(self) -> dict:
        return {"condition": self.condition.value, "min_value": self.min_value,
                "interior_index": self.interior_index,
                "spanning_indices": list(self.spanning_indices),
                "lower_bound_at": (None if self.lower_bound_at is None
                                   else self.lower_bound_at.to_json_dict())}


def _simplex_around(P, i, max_tries: int = 1):
    """Affinely spanning simplex of other samples with ``P[i]`` strictly inside."""
    k = P.shape[0]
    others = np.flatnonzero(np.arange(k) != i)
    d = affine_hull_dim(P)
    # coordinates in the affine span
    _, _, Vt = np.linalg.svd(P - P.mean(axis=0), full_matrices=False)
    B = Vt[:d].T
    Y = (P - P.mean(axis=0)) @ B
    if d == 0:
        return None
    if d == 1:
        y = Y[:, 0]
        left = others[y[others] < y[i] - 1e-12]
        right = others[y[others] > y[i] + 1e-12]
        if left.size == 0 or right.size == 0:
            return None
        a = left[np.argmax(y[left])]
        b = right[np.argmin(y[right])]
        t = (y[i] - y[a]) / (y[b] - y[a])
        return np.array([a, b]), np.array([1 - t, t])
    attempts = [others]
    if max_tries > 1:
        attempts.append(others[hull_vertex_indices(P[others])])
    for ids in attempts:
        try:
            tri = Delaunay(Y[ids])
        except QhullError:
            continue
        s = int(tri.find_simplex(Y[i]))
        if s < 0:
            continue
        T = tri.transform[s]
        bary = T[:d] @ (Y[i] - T[d])
        bary = np.append(bary, 1 - bary.sum())
        if bary.min() > 1e-9:
            return ids[tri.simplices[s]], bary
    return None


def roof_feasibility(f, query=None, max_candidates: int = 50) -> FeasibilityReport:
    """Which finiteness hypothesis for the roof the data satisfy.

    Finite data are always bounded below. In addition, samples near the
    centroid are tried as an interior point: one that sits strictly inside
    a spanning simplex of other samples yields an explicit lower bound for
    the roof at ``query`` (default: the sample farthest from it).
    """
    f = _finite(f)
    P, v = f.points, f.values
    if len(f) < 2:
        raise BadParams("feasibility needs at least two points")
    vmin = float(v.min())
    order = np.argsort(np.linalg.norm(P - P.mean(axis=0), axis=1), kind="stable")
    vertices = set(hull_vertex_indices(P).tolist())
    for i in order[:max_candidates]:
        i = int(i)
        if i in vertices:
            continue
        found = _simplex_around(P, i, max_tries=2)
        if found is None:
            continue
        simplex, bary = found
        if not relative_interior_test(P, P[i]):
            continue
        q = P[int(np.argmax(np.linalg.norm(P - P[i], axis=1)))] if query is None \
            else as_point(query, f.dimension)
        cert = _lower_bound(P, v, i, simplex, bary, q)
        return FeasibilityReport(FeasibilityCondition.RELATIVE_INTERIOR_POINT, vmin, i,
                                 tuple(int(s) for s in simplex), cert)
    return FeasibilityReport(FeasibilityCondition.BOUNDED_BELOW, vmin)


def _lower_bound(P, v, i, simplex, bary, q):
    """Write the interior point as ``lam q + (1 - lam) y`` with ``y`` on a face."""
    S = P[simplex]
    xbar = P[i]
    if np.linalg.norm(q - xbar) == 0:
        return None
    # barycentric coordinates of q with respect to the simplex (affine, may be negative)
    A = np.vstack([S.T, np.ones(len(simplex))])
    bq = np.linalg.lstsq(A, np.concatenate([q, [1.0]]), rcond=None)[0]
    step = bary - bq
    neg = step < -1e-15
    if not neg.any():
        return None
    s = float(np.min(bary[neg] / -step[neg]))
    beta = np.clip(bary + s * step, 0, None)
    lam = s / (1 + s)
    mu = (1 - lam) * beta
    keep = mu > 1e-15
    bound = (v[i] - mu[keep] @ v[simplex][keep]) / lam
    return LowerBoundCertificate(q.copy(), float(bound), xbar.copy(), float(lam),
                                 S[keep].copy(), mu[keep])


# ----------------------------------------------------------------------------
# outer extension

@dataclass(frozen=True)
class OuterExtensionResult:
    value: float
    z: np.ndarray
    y: np.ndarray
    lam: float
    routed_to_roof: bool = False

    def to_json_dict(self) -> dict:
        return {"value": self.value, "z": self.z.tolist(), "y": self.y.tolist(),
                "lambda": self.lam, "routed_to_roof": self.routed_to_roof}


class OuterExtender:
    """Smallest convex extension of a convex grid function beyond its hull.

    For a query ``q`` outside the hull of the marked centers and every
    marked center ``z``, walk along ``[z, q]`` to the last point ``y`` where
    the multilinear grid interpolant of ``f`` is defined (all surrounding
    centers marked). Writing ``q = lam y + (1 - lam) z`` with ``lam >= 1``
    gives the secant value ``lam f(y) + (1 - lam) f(z)``; the extension is
    the largest of these. Pairs closer than half a cell are skipped, since the
    factor ``lam`` would amplify interpolation error without bound.

    Parameters
    ----------
    f : GridFunction
        Values on a bounded, full-dimensional domain.
    check_convex : bool
        Refuse non-convex data (:class:`NotConvexInput`).
    """

    def __init__(self, f: GridFunction, check_convex: bool = True,
                 tol: ToleranceConfig = DEFAULT_TOLERANCES):
        if not isinstance(f, GridFunction):
            raise BadParams("outer extension works on grid functions")
        self.f = f
        self.tol = tol
        P, v = f.points, f.values
        n = P.shape[1]
        if affine_hull_dim(P) < n:
            raise DimensionMismatch("outer extension needs a full-dimensional domain")
        if check_convex:
            verdict = convexity_verdict(f, tol=tol)
            if not verdict.holds:
                raise NotConvexInput(f"samples are not convex (margin {verdict.margin:.3e})")
        self.P, self.v, self.dim = P, v, n
        if n == 1:
            lo, hi = P[:, 0].min(), P[:, 0].max()
            self.normals = np.array([[1.0], [-1.0]])
            self.offsets = np.array([-hi, lo])
        else:
            hull = ConvexHull(P)
            self.normals = hull.equations[:, :n]
            self.offsets = hull.equations[:, n]
        dom = f.domain
        self._values = np.nan_to_num(f.as_array())
        # cells of the center lattice whose corners are all marked
        ind = dom.indicator
        full = ind.copy()
        for corner in np.ndindex(*([2] * n)):
            sl = tuple(slice(c, size - 1 + c) for c, size in zip(corner, ind.shape))
            part = np.zeros_like(ind)
            part[tuple(slice(0, size - 1) for size in ind.shape)] = ind[sl]
            full &= part
        self._cell_ok = full
        self._centers0 = dom.origin + 0.5 * dom.spacing
        self.spacing = dom.spacing
        self.scale = float(np.max(np.abs(P))) + 1.0

    def inside(self, q) -> float:
        """Largest half-space violation (<= 0 inside the hull)."""
        return float(np.max(self.normals @ q + self.offsets))

    def _locate(self, X):
        t = (X - self._centers0) / self.spacing
        i = np.floor(t).astype(np.int64)
        shape = np.array(self._cell_ok.shape)
        # points on the last lattice line belong to the cell below
        i = np.where(i == shape - 1, i - 1, i)
        inside = np.all((i >= 0) & (i < shape - 1), axis=1)
        ok = np.zeros(X.shape[0], dtype=bool)
        ok[inside] = self._cell_ok[tuple(i[inside].T)]
        return i, t - i, ok

    def _defined(self, X):
        return self._locate(X)[2]

    def _interpolate(self, X):
        """Multilinear interpolant of the samples; NaN where undefined."""
        i, frac, ok = self._locate(X)
        out = np.full(X.shape[0], np.nan)
        if not ok.any():
            return out
        i, frac = i[ok], frac[ok]
        acc = np.zeros(i.shape[0])
        for corner in np.ndindex(*([2] * self.dim)):
            c = np.array(corner)
            w = np.prod(np.where(c == 1, frac, 1 - frac), axis=1)
            acc += w * self._values[tuple((i + c).T)]
        out[ok] = acc
        return out

    def _last_defined(self, Z, U, s_hi):
        """Largest ``s <= s_hi`` (approximately) with ``Z + s U`` interpolable."""
        step = self.spacing / 4
        floor = self.spacing / 2
        s = s_hi.copy()
        found = self._defined(Z + s[:, None] * U)
        lo = np.where(found, s, 0.0)
        hi = s.copy()
        pending = ~found
        while pending.any():
            s = np.where(pending, s - step, s)
            s = np.maximum(s, 0.0)
            ok = self._defined(Z + s[:, None] * U)
            newly = pending & ok
            lo = np.where(newly, s, lo)
            hi = np.where(newly, s + step, hi)
            pending &= ~ok & (s > floor)
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            ok = self._defined(Z + mid[:, None] * U)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        return lo

    def evaluate(self, query) -> OuterExtensionResult:
        q = as_point(query, self.dim)
        viol = self.inside(q)
        if viol <= 1e-9 * self.scale:
            if viol < -1e-9 * self.scale:
                raise QueryInsideHull(f"query {q.tolist()} is inside the hull of the domain")
            roof = convex_roof(self.f, q, self.tol)
            return OuterExtensionResult(roof.value, q, q, 1.0, routed_to_roof=True)
        Z = self.P
        D = q - Z
        length = np.linalg.norm(D, axis=1)
        U = D / length[:, None]
        num = -(Z @ self.normals.T + self.offsets)          # >= 0 inside
        den = U @ self.normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(den > 0, num / den, np.inf)
        s_exit = np.clip(s.min(axis=1), 0.0, length)
        s_y = self._last_defined(Z, U, s_exit)
        ok = s_y >= self.spacing / 2
        if not ok.any():
            raise DimensionMismatch("domain too thin for a secant of half a cell")
        Z, U, s_y, length, fz = Z[ok], U[ok], s_y[ok], length[ok], self.v[ok]
        Y = Z + s_y[:, None] * U
        fy = self._interpolate(Y)
        lam = length / s_y
        cand = lam * fy + (1 - lam) * fz
        j = int(np.argmax(cand))
        return OuterExtensionResult(float(cand[j]), Z[j].copy(), Y[j].copy(), float(lam[j]))


def outer_extension(f: GridFunction, query, check_convex: bool = True,
                    tol: ToleranceConfig = DEFAULT_TOLERANCES) -> OuterExtensionResult:
    """Minimal convex extension value at a point outside the domain's hull.

    See :class:`OuterExtender`; build one directly to answer many queries.
    """
    return OuterExtender(f, check_convex, tol).evaluate(query)


# ----------------------------------------------------------------------------
# band extension

@dataclass(frozen=True)
class BandExtensionResult:
    values: np.ndarray
    stage: tuple
    filled: GridFunction
    lipschitz_before: LipschitzEstimate
    lipschitz_after: LipschitzEstimate
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"values": self.values.tolist(), "stage": list(self.stage),
                "lipschitz_before": self.lipschitz_before.to_json_dict(),
                "lipschitz_after": self.lipschitz_after.to_json_dict(),
                "details": self.details}


def band_extension(band: BandDomain, f: GridFunction, queries=(), method: str = "auto",
                   tol: ToleranceConfig = DEFAULT_TOLERANCES) -> BandExtensionResult:
    """Extend a convex function from a band ``outer - hole`` to everything.

    Stage 1 fills the hole with the roof of the band samples (the band has
    the same hull as ``outer``). Stage 2 extends the filled function beyond
    the hull with :class:`OuterExtender`. Lipschitz estimates of the band
    data and of the filled data are returned for comparison.
    """
    if not isinstance(band, BandDomain):
        raise BadParams("band_extension needs a BandDomain")
    if not isinstance(f, GridFunction) or not f.domain.same_lattice(band.band) \
            or not np.array_equal(f.domain.indicator, band.band.indicator):
        raise DimensionMismatch("f must be sampled on the band cells")
    verdict = convexity_verdict(f, tol=tol)
    if not verdict.holds:
        raise NotConvexInput(f"band samples are not convex (margin {verdict.margin:.3e})")
    outer = band.outer
    full = np.full(outer.shape, np.nan)
    full[band.band.indicator] = f.values
    if band.hole is not None and band.hole.count:
        hole_pts = band.hole.centers()
        full[band.hole.indicator] = roof_values(f, hole_pts, method, tol)
    filled = GridFunction(outer, full[outer.indicator])
    before = lipschitz_estimate(f)
    after = lipschitz_estimate(filled)

    Q = np.zeros((0, outer.dim)) if len(queries) == 0 else as_points(queries, outer.dim)
    values, stage = [], []
    extender = None
    for q in Q:
        if hull_membership(f.points, q).inside:
            values.append(roof_values(f, q[None, :], method, tol)[0])
            stage.append("roof")
        else:
            if extender is None:
                extender = OuterExtender(filled, check_convex=False, tol=tol)
            values.append(extender.evaluate(q).value)
            stage.append("outer")
    return BandExtensionResult(np.array(values, dtype=float), tuple(stage), filled, before,
                               after, {"hole_cells": 0 if band.hole is None else band.hole.count})


# ----------------------------------------------------------------------------
# csv

def results_to_csv(queries, results) -> str:
    """One row per query: coordinates, value, support indices, lambda."""
    Q = as_points(queries)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"x{k}" for k in range(Q.shape[1])] + ["value", "support", "lambda"])
    for q, r in zip(Q, results):
        if isinstance(r, RoofResult):
            support = ";".join(str(i) for i in r.certificate.support_indices)
            weights = ";".join(repr(float(w)) for w in r.certificate.weights)
            row = [repr(float(x)) for x in q] + [repr(r.value), support, weights]
        elif isinstance(r, OuterExtensionResult):
            row = [repr(float(x)) for x in q] + [repr(r.value), "", repr(r.lam)]
        else:
            row = [repr(float(x)) for x in q] + [repr(float(r)), "", ""]
        writer.writerow(row)
    return buf.getvalue()
