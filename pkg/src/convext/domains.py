"""Domain and function representations.

Two substrates are used throughout:

* finite point clouds (:class:`PointCloud`, :class:`FiniteSampledFunction`),
  on which convexity questions are exact linear programs;
* regular lattices with a membership indicator (:class:`GridDomain`,
  :class:`GridFunction`), standing in for open or compact subsets of R^n.
  A grid domain is identified with the set of its marked cell centers.

Lower-dimensional example sets (rays, segments) are always point clouds;
an indicator grid cannot carry a measure-zero set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial import cKDTree

from .errors import (BadParams, ConvextError, DimensionMismatch, EmptyDomain, NonFiniteValue,
                     UnknownName)
from .tolerances import DEFAULT_TOLERANCES


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite float array of shape (k, n)."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 0:
        P = P.reshape(1, 1)
    elif P.ndim == 1:
        P = P.reshape(-1, 1) if dim == 1 else P.reshape(1, -1)
    if P.ndim != 2 or P.shape[1] < 1:
        raise DimensionMismatch(f"expected an array of points, got shape {P.shape}")
    if dim is not None and P.shape[1] != dim:
        raise DimensionMismatch(f"points have dimension {P.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(P)):
        raise NonFiniteValue("point coordinates must be finite")
    return P


def as_point(x, dim: int | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a single point, got shape {x.shape}")
    if dim is not None and x.size != dim:
        raise DimensionMismatch(f"point has dimension {x.size}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("point coordinates must be finite", point=x)
    return x


def evaluate(f: Callable, X: np.ndarray) -> np.ndarray:
    """Evaluate a vectorized oracle ``f((m, n)) -> (m,)``; falls back to a loop."""
    X = np.asarray(X, dtype=float)
    with np.errstate(all="ignore"):
        try:
            out = np.asarray(f(X), dtype=float)
        except ConvextError:
            raise
        except (TypeError, ValueError, IndexError):
            out = None
        if out is None or out.shape != (X.shape[0],):
            out = np.array([float(f(x)) for x in X], dtype=float)
    return out


# ----------------------------------------------------------------------------
# point clouds

@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        P = as_points(self.points)
        _check_duplicates(P)
        object.__setattr__(self, "points", P)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def to_json_dict(self) -> dict:
        return {"kind": "finite", "points": self.points.tolist()}


@dataclass(frozen=True)
class FiniteSampledFunction:
    """Explicit point set with one finite value per point."""

    points: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        P = as_points(self.points)
        v = np.atleast_1d(np.asarray(self.values, dtype=float)).ravel()
        if v.size != P.shape[0]:
            raise DimensionMismatch(f"{P.shape[0]} points but {v.size} values")
        bad = ~np.isfinite(v)
        if bad.any():
            i = int(np.argmax(bad))
            raise NonFiniteValue(f"non-finite value at point {P[i].tolist()}", point=P[i])
        _check_duplicates(P)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def subset(self, index) -> "FiniteSampledFunction":
        return FiniteSampledFunction(self.points[index], self.values[index], dict(self.meta))

    def to_json_dict(self) -> dict:
        return {"kind": "finite", "points": self.points.tolist(), "values": self.values.tolist()}


def _check_duplicates(P: np.ndarray, tol: float = DEFAULT_TOLERANCES.duplicate):
    if P.shape[0] < 2:
        return
    pairs = cKDTree(P).query_pairs(r=tol, output_type="ndarray")
    if len(pairs):
        i, j = pairs[0]
        raise BadParams(f"duplicate points {P[i].tolist()} and {P[j].tolist()}")


# ----------------------------------------------------------------------------
# grids

def _rle_encode(bits: np.ndarray) -> str:
    flat = np.asarray(bits, dtype=bool).ravel()
    if flat.size == 0:
        return "0;"
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds)
    return f"{int(flat[0])};" + ",".join(str(int(r)) for r in runs)


def _rle_decode(code: str, shape) -> np.ndarray:
    first, _, body = code.partition(";")
    runs = [int(r) for r in body.split(",") if r]
    bit = first == "1"
    out = np.empty(sum(runs), dtype=bool)
    pos = 0
    for r in runs:
        out[pos:pos + r] = bit
        pos += r
        bit = not bit
    if out.size != int(np.prod(shape)):
        raise BadParams("run-length code does not match grid shape")
    return out.reshape(tuple(shape))


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Axis-aligned lattice of cells with a boolean membership indicator.

    ``origin`` is the lower corner of the lattice; cell ``i`` has center
    ``origin + (i + 1/2) * spacing``.
    """

    origin: np.ndarray
    spacing: float
    indicator: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ind = np.asarray(self.indicator, dtype=bool)
        origin = as_point(self.origin)
        if origin.size != ind.ndim:
            raise DimensionMismatch(f"origin has dimension {origin.size}, indicator {ind.ndim}")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise BadParams("spacing must be positive")
        if not ind.any():
            raise EmptyDomain("grid domain has no marked cell")
        object.__setattr__(self, "indicator", ind)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))

    # --- geometry -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.indicator.ndim

    @property
    def shape(self) -> tuple:
        return self.indicator.shape

    @property
    def count(self) -> int:
        return int(self.indicator.sum())

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.array(self.shape) * self.spacing

    def marked_indices(self) -> np.ndarray:
        return np.argwhere(self.indicator)

    def centers(self) -> np.ndarray:
        """Marked cell centers, (count, n), in C order."""
        return self.origin + (self.marked_indices() + 0.5) * self.spacing

    def all_centers(self) -> np.ndarray:
        axes = [self.origin[k] + (np.arange(self.shape[k]) + 0.5) * self.spacing
                for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.floor((X - self.origin) / self.spacing).astype(np.int64)

    def contains(self, X) -> np.ndarray:
        """True where a point falls in a marked cell."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        idx = self.cell_index(X)
        ok = np.all((idx >= 0) & (idx < np.array(self.shape)), axis=1)
        out = np.zeros(X.shape[0], dtype=bool)
        if ok.any():
            out[ok] = self.indicator[tuple(idx[ok].T)]
        return out

    def same_lattice(self, other: "GridDomain") -> bool:
        return (self.shape == other.shape and self.spacing == other.spacing
                and np.array_equal(self.origin, other.origin))

    # --- derived domains ----------------------------------------------------
    def with_indicator(self, indicator, **meta) -> "GridDomain":
        return GridDomain(self.origin, self.spacing, indicator, {**self.meta, **meta})

    def padded(self, cells: int) -> "GridDomain":
        """Same lattice extended by ``cells`` unmarked cells on every side."""
        cells = int(cells)
        if cells <= 0:
            return self
        ind = np.pad(self.indicator, cells, constant_values=False)
        return GridDomain(self.origin - cells * self.spacing, self.spacing, ind, dict(self.meta))

    def distance_field(self) -> np.ndarray:
        """Euclidean distance from every cell center to the nearest marked center."""
        return distance_transform_edt(~self.indicator, sampling=self.spacing)

    # --- serialization ------------------------------------------------------
    def to_json_dict(self) -> dict:
        return {"kind": "grid", "origin": self.origin.tolist(), "spacing": self.spacing,
                "shape": list(self.shape), "indicator": _rle_encode(self.indicator)}

    def __eq__(self, other):
        return (isinstance(other, GridDomain) and self.same_lattice(other)
                and np.array_equal(self.indicator, other.indicator))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values attached to the marked cells of a grid domain (C order)."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.domain.count:
            raise DimensionMismatch(f"{self.domain.count} marked cells but {v.size} values")
        bad = ~np.isfinite(v)
        if bad.any():
            p = self.domain.centers()[int(np.argmax(bad))]
            raise NonFiniteValue(f"non-finite value at cell center {p.tolist()}", point=p)
        object.__setattr__(self, "values", v)

    @property
    def points(self) -> np.ndarray:
        return self.domain.centers()

    def as_array(self) -> np.ndarray:
        out = np.full(self.domain.shape, np.nan)
        out[self.domain.indicator] = self.values
        return out

    def to_finite(self) -> FiniteSampledFunction:
        return FiniteSampledFunction(self.points, self.values)

    def restrict(self, domain: GridDomain) -> "GridFunction":
        if not domain.same_lattice(self.domain):
            raise DimensionMismatch("restriction needs the same lattice")
        if np.any(domain.indicator & ~self.domain.indicator):
            raise BadParams("restriction domain is not a subset")
        return GridFunction(domain, self.as_array()[domain.indicator])

    def to_json_dict(self) -> dict:
        d = self.domain.to_json_dict()
        d["values"] = self.values.tolist()
        return d


@dataclass(frozen=True, eq=False)
class BandDomain:
    """Convex ``outer`` minus a hole whose closure lies inside ``outer``."""

    outer: GridDomain
    hole: GridDomain | None
    band: GridDomain = field(init=False)

    def __post_init__(self):
        outer, hole = self.outer, self.hole
        if hole is None:
            object.__setattr__(self, "band", outer)
            return
        if not outer.same_lattice(hole):
            raise DimensionMismatch("outer and hole must share a lattice")
        grown = hole.distance_field() <= 2 * hole.spacing * (1 + 1e-12)
        if np.any(grown & ~outer.indicator):
            raise BadParams("hole dilated by two cells escapes the outer domain")
        object.__setattr__(self, "band", outer.with_indicator(outer.indicator & ~hole.indicator))

    def to_json_dict(self) -> dict:
        d = self.outer.to_json_dict()
        d["kind"] = "band"
        d["outer"] = d.pop("indicator")
        d["hole"] = _rle_encode(self.hole.indicator) if self.hole is not None else None
        return d


# ----------------------------------------------------------------------------
# constructors

def build_grid_domain(indicator_predicate: Callable, bbox, resolution, **meta) -> GridDomain:
    """Mark the cells of a regular lattice whose centers satisfy a predicate.

    Parameters
    ----------
    indicator_predicate : callable
        Vectorized ``(m, n) -> (m,)`` boolean (a per-point callable also works).
    bbox : pair of points
        Lower and upper corner. Extents divided by ``resolution`` must give
        one common spacing.
    resolution : int or sequence of int
        Cells per axis, at least 4.
    """
    lo, hi = (as_point(p) for p in bbox)
    if lo.size != hi.size:
        raise DimensionMismatch("bbox corners differ in dimension")
    n = lo.size
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (n,))
    if np.any(res < 4):
        raise BadParams("resolution must be at least 4 per axis")
    ext = hi - lo
    if np.any(ext <= 0):
        raise BadParams("degenerate bbox")
    steps = ext / res
    if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
        raise BadParams(f"bbox/resolution give non-uniform spacing {steps.tolist()}")
    spacing = float(steps[0])
    axes = [lo[k] + (np.arange(res[k]) + 0.5) * spacing for k in range(n)]
    C = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    mask = np.asarray(evaluate(lambda X: np.asarray(indicator_predicate(X), dtype=float), C) != 0)
    ind = mask.reshape(tuple(res))
    if not ind.any():
        raise EmptyDomain("predicate marks no cell")
    return GridDomain(lo, spacing, ind, dict(meta))


def sample_function(domain, f: Callable):
    """Evaluate ``f`` at cell centers or cloud points.

    Returns a :class:`GridFunction` for grid domains, a
    :class:`FiniteSampledFunction` for clouds. Raises
    :class:`NonFiniteValue` naming the first offending point.
    """
    if isinstance(domain, GridFunction):
        domain = domain.domain
    if isinstance(domain, GridDomain):
        P = domain.centers()
    elif isinstance(domain, (PointCloud, FiniteSampledFunction)):
        P = domain.points
    else:
        raise BadParams(f"cannot sample on {type(domain).__name__}")
    v = evaluate(f, P)
    bad = ~np.isfinite(v)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteValue(f"f is not finite at {P[i].tolist()}", point=P[i])
    if isinstance(domain, GridDomain):
        return GridFunction(domain, v)
    meta = dict(getattr(domain, "meta", {}))
    return FiniteSampledFunction(P, v, meta)


def padded_for(domain: GridDomain, radius: float) -> GridDomain:
    """Pad a lattice so that a ``radius``-neighborhood fits inside it."""
    return domain.padded(int(np.ceil(radius / domain.spacing)) + 2)


# ----------------------------------------------------------------------------
# json

def domain_to_json(obj) -> str:
    return json.dumps(obj.to_json_dict(), sort_keys=True, separators=(",", ":"))


def domain_from_json(data):
    """Inverse of :func:`domain_to_json`; accepts a string or a parsed dict."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    kind = data.get("kind")
    if kind == "finite":
        if data.get("values") is None:
            return PointCloud(np.asarray(data["points"], dtype=float))
        return FiniteSampledFunction(np.asarray(data["points"], dtype=float),
                                     np.asarray(data["values"], dtype=float))
    if kind in ("grid", "band"):
        origin = np.asarray(data["origin"], dtype=float)
        shape = tuple(int(s) for s in data["shape"])
        spacing = float(data["spacing"])
        if kind == "grid":
            dom = GridDomain(origin, spacing, _rle_decode(data["indicator"], shape))
            if data.get("values") is not None:
                return GridFunction(dom, np.asarray(data["values"], dtype=float))
            return dom
        outer = GridDomain(origin, spacing, _rle_decode(data["outer"], shape))
        hole = (None if data.get("hole") is None
                else GridDomain(origin, spacing, _rle_decode(data["hole"], shape)))
        return BandDomain(outer, hole)
    raise BadParams(f"unknown domain kind {kind!r}")


# ----------------------------------------------------------------------------
# named example domains

def _segment(a, b, h):
    a, b = np.asarray(a, float), np.asarray(b, float)
    k = max(1, int(round(np.linalg.norm(b - a) / h)))
    t = np.arange(k + 1) / k
    return a + t[:, None] * (b - a)


def _ray_cloud(angles, radius, h):
    k = max(1, int(round(radius / h)))
    r = np.arange(1, k + 1) / k * radius
    pts = [np.zeros((1, 2))]
    for th in angles:
        pts.append(np.stack([r * np.cos(th), r * np.sin(th)], axis=1))
    return np.vstack(pts)


def _grid_bbox(half, resolution, n=2, center=None):
    center = np.zeros(n) if center is None else np.asarray(center, float)
    return (center - half, center + half), resolution


def _triangle_plus_interior(p=None, vertices=None):
    V = np.array(vertices if vertices is not None else [[0, 0], [1, 0], [0, 1]], float)
    p = np.array(p if p is not None else [1 / 3, 1 / 3], float)
    return PointCloud(np.vstack([V, p]), {"name": "triangle_plus_interior", "connected": False})


def _two_rays_step(length=2.0, gap=0.5, h=0.5):
    k = int(round((length - gap) / h))
    right = gap + h * np.arange(k + 1)
    pts = np.concatenate([-right[::-1], right])[:, None]
    return PointCloud(pts, {"name": "two_rays_step", "connected": False})


def _slit_annulus(eps=0.1, resolution=192, slit_width=None, half=1.2):
    if not 0 < eps < 1:
        raise BadParams("slit_annulus needs 0 < eps < 1")
    spacing = 2 * half / resolution
    w = 2 * spacing if slit_width is None else float(slit_width)

    def pred(X):
        r = np.hypot(X[:, 0], X[:, 1])
        slit = (X[:, 0] > 0) & (np.abs(X[:, 1]) < w / 2)
        return (np.abs(r - 1) < eps) & ~slit

    return build_grid_domain(pred, ([-half] * 2, [half] * 2), resolution,
                             name="slit_annulus", eps=eps, slit_width=w, connected=True)


def _tripod(radius=2.0, h=0.01):
    angles = [0.0, 2 * np.pi / 3, 4 * np.pi / 3]
    return PointCloud(_ray_cloud(angles, radius, h), {"name": "tripod", "arms": angles})


def _two_segments_plus_origin(h=0.01):
    top = _segment([-1, 1], [1, 1], h)
    bottom = _segment([-1, -1], [1, -1], h)
    return PointCloud(np.vstack([top, bottom, [[0.0, 0.0]]]),
                      {"name": "two_segments_plus_origin"})


def _plane_minus_axis(half=3.0, resolution=60, gap=0.0):
    if resolution % 2:
        raise BadParams("plane_minus_axis needs an even resolution (no center on the axis)")

    def pred(X):
        return np.abs(X[:, 1]) > gap / 2

    return build_grid_domain(pred, ([-half] * 2, [half] * 2), resolution,
                             name="plane_minus_axis", truncated_to=half)


def _disk_minus_disk(radius=2.0, hole_radius=1.0, hole_center=(1.0, 0.0), resolution=64):
    c = np.asarray(hole_center, float)

    def pred(X):
        return (np.hypot(X[:, 0], X[:, 1]) <= radius) & \
               (np.hypot(X[:, 0] - c[0], X[:, 1] - c[1]) > hole_radius)

    return build_grid_domain(pred, ([-radius] * 2, [radius] * 2), resolution,
                             name="disk_minus_disk", radius=radius, hole_radius=hole_radius,
                             hole_center=c.tolist())


def _three_points_line():
    return PointCloud(np.array([[0.0], [1.0], [2.0]]), {"name": "three_points_line"})


def _nested_squares(resolution=80, cut=2.7, gap=0.3):
    """Frame [-2,2]x[0,4] minus (-1,1)x(1,3), split at height ``cut``.

    omega1 is the lower U of the frame, omega2 the part of the frame above
    ``cut + gap``, omega3 the pocket [-0.5,0.5]x[1.5,cut] inside the hull of
    omega1 (reachable only by chaining).
    """
    bbox = ([-2.5, -0.5], [2.5, 4.5])

    def frame(X):
        inner = (np.abs(X[:, 0]) < 1) & (X[:, 1] > 1) & (X[:, 1] < 3)
        return (np.abs(X[:, 0]) <= 2) & (X[:, 1] >= 0) & (X[:, 1] <= 4) & ~inner

    o1 = build_grid_domain(lambda X: frame(X) & (X[:, 1] <= cut), bbox, resolution,
                           name="nested_squares.omega1")
    o2 = build_grid_domain(lambda X: frame(X) & (X[:, 1] >= cut + gap), bbox, resolution,
                           name="nested_squares.omega2")
    o3 = build_grid_domain(lambda X: (np.abs(X[:, 0]) <= 0.5) & (X[:, 1] >= 1.5)
                           & (X[:, 1] <= cut), bbox, resolution, name="nested_squares.omega3")
    return {"omega1": o1, "omega2": o2, "omega3": o3}


def _slab_complement(radius=3.0, slab=0.05, resolution=120):
    def pred(X):
        return (np.linalg.norm(X, axis=1) < radius) & (np.abs(X[:, 0]) > slab)

    return build_grid_domain(pred, ([-radius] * 2, [radius] * 2), resolution,
                             name="slab_complement", slab=slab, radius=radius)


_NAMED = {
    "triangle_plus_interior": _triangle_plus_interior,
    "two_rays_step": _two_rays_step,
    "slit_annulus": _slit_annulus,
    "tripod": _tripod,
    "two_segments_plus_origin": _two_segments_plus_origin,
    "plane_minus_axis": _plane_minus_axis,
    "disk_minus_disk": _disk_minus_disk,
    "three_points_line": _three_points_line,
    "nested_squares": _nested_squares,
    "slab_complement": _slab_complement,
}

DOMAIN_NAMES = tuple(_NAMED)


def named_domain(name: str, **params):
    """Build one of the standard example domains with documented defaults.

    ``slit_annulus`` defaults to eps=0.1 at resolution 192 (the slit is a
    removed strip of width two cells along the positive x-axis);
    ``disk_minus_disk`` to radius 2 with a radius-1 hole at (1, 0);
    ``tripod`` and ``two_segments_plus_origin`` are clouds with step 0.01;
    unbounded domains are truncated to [-3, 3]^n.
    """
    try:
        builder = _NAMED[name]
    except KeyError:
        raise UnknownName(f"unknown domain {name!r}; choose from {', '.join(DOMAIN_NAMES)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise BadParams(f"{name}: {exc}") from None
