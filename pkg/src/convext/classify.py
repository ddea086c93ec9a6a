"""Convexity notions for sampled functions, with violation certificates.

Four verdicts are offered:

``convexity_verdict``
    global convexity on a finite set, one roof LP per point;
``local_convexity_verdict``
    convexity of every restriction to a ball of given radius;
``line_convexity_verdict``
    convexity along every line (collinear triples of samples);
``interval_convexity_verdict``
    convexity along every lattice segment that stays inside a grid domain.

Each verdict stores the smallest slack seen and, on failure, a convex
combination whose inequality is violated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import product

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .domains import FiniteSampledFunction, GridFunction
from .errors import BadParams, DegenerateBall
from .geometry import LowerEnvelope, affine_hull_dim
from .lp import MAX_VARS, LpProblem, solve_lp
from .tolerances import DEFAULT_TOLERANCES, ToleranceConfig


class Notion(str, Enum):
    CONVEX = "Convex"
    LOCALLY_CONVEX = "LocallyConvex"
    LINE_CONVEX = "LineConvex"
    INTERVAL_CONVEX = "IntervalConvex"


@dataclass(frozen=True)
class ConvexCombinationCertificate:
    """A convex combination ``target = sum w_i p_i`` with ``lhs = f(target)``
    and ``rhs = sum w_i f(p_i)``."""

    target: np.ndarray
    support_points: np.ndarray
    weights: np.ndarray
    lhs: float
    rhs: float
    support_indices: tuple = ()
    target_index: int | None = None

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def check(self, atol: float = 1e-8) -> bool:
        """Weights are a partition of unity reproducing the target."""
        w = self.weights
        return (bool(np.all(w >= -1e-12)) and abs(w.sum() - 1) <= 1e-9
                and np.linalg.norm(w @ self.support_points - self.target) <= atol)

    def to_json_dict(self) -> dict:
        return {"target": self.target.tolist(), "support_points": self.support_points.tolist(),
                "weights": self.weights.tolist(), "lhs": self.lhs, "rhs": self.rhs,
                "support_indices": [int(i) for i in self.support_indices],
                "target_index": None if self.target_index is None else int(self.target_index)}


@dataclass(frozen=True)
class ConvexityVerdict:
    notion: Notion
    strict: bool
    holds: bool
    margin: float
    witness: ConvexCombinationCertificate | None = None
    details: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"notion": self.notion.value, "strict": self.strict, "holds": self.holds,
                "margin": _finite_or_none(self.margin),
                "witness": None if self.witness is None else self.witness.to_json_dict(),
                "details": self.details}


@dataclass(frozen=True)
class LipschitzEstimate:
    constant: float
    witness_pair: tuple
    pairs_examined: int = 0
    exhaustive: bool = True

    def to_json_dict(self) -> dict:
        return {"constant": self.constant,
                "witness_pair": [np.asarray(p).tolist() for p in self.witness_pair],
                "pairs_examined": self.pairs_examined, "exhaustive": self.exhaustive}


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def _as_finite(f) -> FiniteSampledFunction:
    if isinstance(f, GridFunction):
        return f.to_finite()
    if isinstance(f, FiniteSampledFunction):
        return f
    raise BadParams(f"expected sampled function, got {type(f).__name__}")


def _certificate(P, v, target_index, support, weights):
    support = np.asarray(support, dtype=int)
    w = np.asarray(weights, dtype=float)
    return ConvexCombinationCertificate(
        target=P[target_index].copy(), support_points=P[support].copy(), weights=w,
        lhs=float(v[target_index]), rhs=float(w @ v[support]),
        support_indices=tuple(int(i) for i in support), target_index=int(target_index))


# ----------------------------------------------------------------------------
# global convexity

def roof_without_point(P, v, i, tol: ToleranceConfig = DEFAULT_TOLERANCES):
    """Roof of the data with point ``i`` removed, evaluated at ``P[i]``.

    Returns ``(value, support, weights)``; value is ``inf`` when ``P[i]`` is
    not in the hull of the remaining points.
    """
    keep = np.arange(P.shape[0]) != i
    X, fx = P[keep], v[keep]
    idx = np.flatnonzero(keep)
    A = np.vstack([X.T, np.ones((1, X.shape[0]))])
    b = np.concatenate([P[i], [1.0]])
    sol = solve_lp(LpProblem(fx, A, b), tol, enforce_size=False)
    if not sol.optimal:
        return np.inf, np.array([], dtype=int), np.array([])
    lam = sol.primal
    nz = np.flatnonzero(lam > 1e-12)
    w = lam[nz] / lam[nz].sum()
    return float(w @ fx[nz]), idx[nz], w


def convexity_verdict(f, strict: bool = False, tol: ToleranceConfig = DEFAULT_TOLERANCES,
                      method: str = "auto") -> ConvexityVerdict:
    """Decide convexity of a finite sampled function.

    Parameters
    ----------
    f : FiniteSampledFunction or GridFunction
    strict : bool
        Require strict inequality for every combination not supported on
        the point itself.
    method : {"auto", "lp", "hull"}
        ``"lp"`` solves one roof LP per point over the other points. ``"hull"``
        compares each value with the lifted lower envelope of all the data;
        it is non-strict only and used by ``"auto"`` above the dense LP size.

    Returns
    -------
    ConvexityVerdict
        ``margin`` is the smallest ``roof(x) - f(x)``; the witness belongs to
        the failing point of lowest index.
    """
    f = _as_finite(f)
    P, v = f.points, f.values
    if P.shape[0] < 2:
        raise BadParams("convexity needs at least two points")
    if method == "auto":
        method = "hull" if (P.shape[0] > MAX_VARS and not strict
                            and affine_hull_dim(P) == P.shape[1]) else "lp"
    if method == "hull":
        if strict:
            raise BadParams("the hull method decides non-strict convexity only")
        return _convexity_by_envelope(P, v, tol)
    if method != "lp":
        raise BadParams(f"unknown method {method!r}")

    limit = tol.strict if strict else tol.convexity
    margin = np.inf
    witness = None
    for i in range(P.shape[0]):
        r, support, w = roof_without_point(P, v, i, tol)
        if not np.isfinite(r):
            continue
        slack = r - v[i]
        margin = min(margin, slack)
        failed = slack <= limit if strict else slack < -limit
        if failed and witness is None:
            witness = _certificate(P, v, i, support, w)
    holds = witness is None
    return ConvexityVerdict(Notion.CONVEX, strict, holds, float(margin), witness,
                            {"method": "lp", "points": int(P.shape[0])})


def _convexity_by_envelope(P, v, tol):
    env = LowerEnvelope(P, v)
    gap = env(P) - v
    margin = float(gap.min())
    bad = np.flatnonzero(gap < -tol.convexity)
    witness = None
    if bad.size:
        i = int(bad[0])
        support, w = env.support(P[i])
        witness = _certificate(P, v, i, support, w)
    return ConvexityVerdict(Notion.CONVEX, False, witness is None, margin, witness,
                            {"method": "hull", "points": int(P.shape[0])})


# ----------------------------------------------------------------------------
# local convexity

def local_convexity_verdict(f, radius: float | None, strict: bool = False,
                            tol: ToleranceConfig = DEFAULT_TOLERANCES,
                            centers=None) -> ConvexityVerdict:
    """Convexity of every restriction of ``f`` to a closed ball ``B(x, radius)``.

    Parameters
    ----------
    radius : float or None
        Ball radius. ``None`` uses, per center, the smallest radius that
        captures two neighbours.
    centers : sequence of int, optional
        Restrict the test to these sample indices (default: every sample).

    Raises
    ------
    DegenerateBall
        If some ball contains only its center.
    """
    f = _as_finite(f)
    P, v = f.points, f.values
    if radius is not None and not radius > 0:
        raise BadParams("radius must be positive")
    tree = cKDTree(P)
    idx_list = range(P.shape[0]) if centers is None else [int(c) for c in centers]
    margin = np.inf
    witness, failing = None, None
    tested = 0
    for c in idx_list:
        if radius is None:
            k = min(3, P.shape[0])
            r = tree.query(P[c], k=k)[0][-1]
        else:
            r = radius
        ball = np.sort(tree.query_ball_point(P[c], r * (1 + 1e-12)))
        if ball.size < 2:
            raise DegenerateBall(f"ball of radius {r:g} around {P[c].tolist()} holds no other sample")
        sub = FiniteSampledFunction(P[ball], v[ball])
        verdict = convexity_verdict(sub, strict, tol)
        tested += 1
        margin = min(margin, verdict.margin)
        if not verdict.holds and witness is None:
            w = verdict.witness
            witness = ConvexCombinationCertificate(
                w.target, w.support_points, w.weights, w.lhs, w.rhs,
                tuple(int(ball[j]) for j in w.support_indices), int(ball[w.target_index]))
            failing = c
    details = {"radius": radius, "centers_tested": tested}
    if failing is not None:
        details["failing_center"] = P[failing].tolist()
    return ConvexityVerdict(Notion.LOCALLY_CONVEX, strict, witness is None, float(margin),
                            witness, details)


# ----------------------------------------------------------------------------
# line convexity

def collinear_triples(P, tol: ToleranceConfig = DEFAULT_TOLERANCES):
    """Consecutive collinear triples ``(a, m, b)`` of a point set.

    ``P[m]`` lies strictly inside ``[P[a], P[b]]`` at distance below
    ``tol.collinear`` from the line, and ``P[a]``, ``P[b]`` are the samples
    nearest to ``P[m]`` on either side along that line. Convexity of a
    function on finitely many points of a line is equivalent to convexity
    on its consecutive triples, so these are all that needs checking.

    Returns arrays ``(a, m, b, lam)`` with ``P[m] = lam P[a] + (1 - lam) P[b]``.
    """
    k = P.shape[0]
    A, M, B, L = [], [], [], []
    for m in range(k):
        D = P - P[m]
        dist = np.linalg.norm(D, axis=1)
        others = np.flatnonzero(dist > 0)
        if others.size < 2:
            continue
        U = D[others] / dist[others, None]
        # group samples seen in the same direction from P[m]
        pairs = cKDTree(U).query_pairs(r=1e-7, output_type="ndarray")
        if len(pairs):
            graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                               shape=(others.size, others.size))
            _, label = connected_components(graph, directed=False)
        else:
            label = np.arange(others.size)
        order = np.lexsort((dist[others], label))
        first = order[np.r_[True, label[order][1:] != label[order][:-1]]]
        near = others[first]                      # nearest sample per direction
        Ug = U[first]
        hits = cKDTree(Ug).query_ball_point(-Ug, r=1e-6)
        for ga, lst in enumerate(hits):
            for gb in lst:
                if gb <= ga:
                    continue
                a, b = near[ga], near[gb]
                seg = P[b] - P[a]
                t = float((P[m] - P[a]) @ seg) / float(seg @ seg)
                off = np.linalg.norm(P[a] + t * seg - P[m])
                if off < tol.collinear and 0 < t < 1:
                    A.append(a); M.append(m); B.append(b); L.append(1 - t)
    return (np.array(A, dtype=int), np.array(M, dtype=int),
            np.array(B, dtype=int), np.array(L, dtype=float))


def line_convexity_verdict(f, strict: bool = False,
                           tol: ToleranceConfig = DEFAULT_TOLERANCES) -> ConvexityVerdict:
    """Convexity along every line through three or more samples.

    Only consecutive triples along each line are examined (see
    :func:`collinear_triples`); the margin is the smallest slack among them.
    """
    f = _as_finite(f)
    P, v = f.points, f.values
    if P.shape[0] < 3:
        raise BadParams("line convexity needs at least three points")
    a, m, b, lam = collinear_triples(P, tol)
    if a.size == 0:
        return ConvexityVerdict(Notion.LINE_CONVEX, strict, True, np.inf, None,
                                {"triples": 0})
    rhs = lam * v[a] + (1 - lam) * v[b]
    slack = rhs - v[m]
    bad = slack <= tol.strict if strict else slack < -tol.convexity
    witness = None
    if bad.any():
        # lowest middle index, then the worst triple there
        cand = np.flatnonzero(bad)
        first = m[cand].min()
        cand = cand[m[cand] == first]
        j = int(cand[np.argmin(slack[cand])])
        witness = _certificate(P, v, m[j], [a[j], b[j]], [lam[j], 1 - lam[j]])
    return ConvexityVerdict(Notion.LINE_CONVEX, strict, witness is None, float(slack.min()),
                            witness, {"triples": int(a.size)})


# ----------------------------------------------------------------------------
# interval convexity on grids

def primitive_directions(dim: int, max_step) -> list:
    """Integer directions with coprime entries, first nonzero entry positive."""
    max_step = np.broadcast_to(np.asarray(max_step, dtype=int), (dim,))
    out = []
    for v in product(*[range(-int(s), int(s) + 1) for s in max_step]):
        v = np.array(v)
        nz = np.flatnonzero(v)
        if nz.size == 0 or v[nz[0]] < 0:
            continue
        if math.gcd(*[int(abs(x)) for x in v]) != 1:
            continue
        out.append(v)
    return out


def _shift(arr, offset):
    """``out[p] = arr[p + offset]`` with False/NaN outside."""
    fill = False if arr.dtype == bool else np.nan
    out = np.full_like(arr, fill)
    src, dst = [], []
    for o, size in zip(offset, arr.shape):
        o = int(o)
        if abs(o) >= size:
            return out
        src.append(slice(max(o, 0), size + min(o, 0)))
        dst.append(slice(max(-o, 0), size - max(o, 0)))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _step_inside(indicator, v):
    """Cells ``p`` such that the segment from ``p`` to ``p + v`` stays marked.

    The segment is sampled at steps of at most half a cell and every sample
    must fall in a marked cell.
    """
    N = max(1, int(math.ceil(2 * np.linalg.norm(v))))
    t = np.arange(N + 1) / N
    offsets = np.unique(np.floor(t[:, None] * v[None, :] + 0.5).astype(int), axis=0)
    ok = indicator.copy()
    for o in offsets:
        ok &= _shift(indicator, o)
    return ok


def interval_convexity_verdict(f, strict: bool = False,
                               tol: ToleranceConfig = DEFAULT_TOLERANCES,
                               full_budget: int = 2000, local_step: int = 4,
                               n_random: int = 64, seed: int = 0) -> ConvexityVerdict:
    """Convexity along lattice segments contained in a grid domain.

    A pair of marked cells is tested when the segment joining their centers
    stays in the domain. Along such a segment the lattice points are equally
    spaced, so convexity is checked through second differences of the exact
    sample values. All pairs are covered when the domain has at most
    ``full_budget`` cells; otherwise directions are limited to steps of
    max-norm ``local_step`` plus ``n_random`` further directions drawn with
    ``seed``.

    Finite clouds contain no segments; for them this falls back to
    :func:`line_convexity_verdict` and records the substitution.
    """
    if isinstance(f, FiniteSampledFunction):
        lv = line_convexity_verdict(f, strict, tol)
        return ConvexityVerdict(Notion.INTERVAL_CONVEX, strict, lv.holds, lv.margin,
                                lv.witness, {**lv.details, "substituted": "line_convexity"})
    if not isinstance(f, GridFunction):
        raise BadParams(f"expected GridFunction, got {type(f).__name__}")
    dom = f.domain
    if dom.count < 2:
        raise BadParams("interval convexity needs two marked cells")
    ind = dom.indicator
    vals = f.as_array()
    marked = dom.marked_indices()
    extent = marked.max(axis=0) - marked.min(axis=0)
    half = np.maximum(extent // 2, 1)
    exhaustive = dom.count <= full_budget
    if exhaustive:
        dirs = primitive_directions(dom.dim, half)
    else:
        dirs = primitive_directions(dom.dim, np.minimum(half, local_step))
        far = [d for d in primitive_directions(dom.dim, half) if np.max(np.abs(d)) > local_step]
        if far:
            rng = np.random.default_rng(seed)
            pick = np.sort(rng.choice(len(far), size=min(n_random, len(far)), replace=False))
            dirs += [far[i] for i in pick]

    # index of every marked cell in the C-ordered value vector
    order = np.full(dom.shape, -1, dtype=np.int64)
    order[ind] = np.arange(dom.count)
    P = dom.centers()
    margin = np.inf
    best = None       # (target_index, lo_index, hi_index, slack)
    tested = 0
    for d in dirs:
        fwd = _step_inside(ind, d)                  # p -> p + d inside
        back = _shift(fwd, -d)                      # p - d -> p inside
        mid = fwd & back
        if not mid.any():
            continue
        second = _shift(vals, d) + _shift(vals, -d) - 2 * vals
        s = 0.5 * second[mid]
        tested += int(mid.sum())
        margin = min(margin, float(s.min()))
        bad = s <= tol.strict if strict else s < -tol.convexity
        if bad.any():
            cells = np.argwhere(mid)[bad]
            sb = s[bad]
            ids = order[tuple(cells.T)]
            j = int(np.argmin(ids))
            if best is None or ids[j] < best[0]:
                c = cells[j]
                best = (int(ids[j]), int(order[tuple(c - d)]), int(order[tuple(c + d)]), sb[j])
    witness = None
    if best is not None:
        i, lo, hi, _ = best
        witness = _certificate(P, f.values, i, [lo, hi], [0.5, 0.5])
    details = {"directions": len(dirs), "segments_tested": tested, "exhaustive": exhaustive,
               "seed": seed}
    return ConvexityVerdict(Notion.INTERVAL_CONVEX, strict, witness is None, float(margin),
                            witness, details)


# ----------------------------------------------------------------------------
# Lipschitz constant

def lipschitz_estimate(f, exact_limit: int = 3000, neighbours: int = 24,
                       n_random: int = 200_000, seed: int = 0) -> LipschitzEstimate:
    """Largest difference quotient ``|f(x) - f(y)| / |x - y|`` over sample pairs.

    All pairs are used up to ``exact_limit`` samples. Above that, each
    sample is paired with its ``neighbours`` nearest samples, and
    ``n_random`` long-range pairs are drawn with ``seed``.
    """
    f = _as_finite(f)
    P, v = f.points, f.values
    k = P.shape[0]
    if k < 2:
        raise BadParams("Lipschitz estimate needs two points")
    best = (-1.0, 0, 1)
    examined = 0

    def scan(I, J):
        nonlocal best, examined
        d = np.linalg.norm(P[I] - P[J], axis=1)
        q = np.abs(v[I] - v[J]) / d
        j = int(np.argmax(q))
        examined += I.size
        if q[j] > best[0]:
            best = (float(q[j]), int(I[j]), int(J[j]))

    if k <= exact_limit:
        for i in range(k - 1):
            J = np.arange(i + 1, k)
            scan(np.full(J.size, i), J)
        exhaustive = True
    else:
        nn = min(neighbours, k - 1)
        _, J = cKDTree(P).query(P, k=nn + 1)
        I = np.repeat(np.arange(k), nn)
        scan(I, J[:, 1:].ravel())
        rng = np.random.default_rng(seed)
        I = rng.integers(0, k, n_random)
        J = rng.integers(0, k, n_random)
        keep = I != J
        scan(I[keep], J[keep])
        exhaustive = False
    c, i, j = best
    return LipschitzEstimate(c, (P[i].copy(), P[j].copy()), examined, exhaustive)

