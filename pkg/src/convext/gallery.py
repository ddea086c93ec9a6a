"""Registry of worked examples and counterexamples with self-checking reports.

Each :class:`Scenario` bundles a domain, a function oracle and a list of
:class:`Expectation` entries; :func:`run_scenario` executes the entries and
returns a machine-readable report (optionally written as JSON plus a CSV of
plot data). Reports contain no timings, so identical inputs give identical
bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classify import (convexity_verdict, interval_convexity_verdict, line_convexity_verdict,
                       lipschitz_estimate, local_convexity_verdict)
from .domains import (FiniteSampledFunction, GridDomain, PointCloud, build_grid_domain,
                      named_domain, sample_function)
from .errors import BadParams, PreconditionFailed, UnknownScenario
from .extend import convex_roof
from .smooth import fd_hessian, hull_smooth_extension, outside_smooth_extension, pd_certify
from .tolerances import DEFAULT_TOLERANCES


# ----------------------------------------------------------------------------
# locally convex function that is not convex across a slab

def smoothstep5(x):
    """Quintic smoothstep, clamped to [0, 1]; C2 with flat ends."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x * x)


def plateau_profile(u):
    """``beta(u)``: 1 for u <= 1/2, 0 for u >= 1, a mirrored smoothstep between.

    Returns ``(beta, beta', beta'')``.
    """
    u = np.asarray(u, dtype=float)
    x = np.clip(2 * u - 1, 0.0, 1.0)
    inside = (u > 0.5) & (u < 1.0)
    s1 = 30 * x * x * (1 - x) ** 2
    s2 = 60 * x * (1 - x) * (1 - 2 * x)
    return (1 - smoothstep5(x), np.where(inside, -2 * s1, 0.0), np.where(inside, -4 * s2, 0.0))


@dataclass(frozen=True)
class Th203Config:
    """Parameters of the locally convex but non-convex function across a slab.

    The removed set is the hyperplane piece ``t = 0`` (axis ``slab_normal``)
    over the unit ball in ``y``; ``p = (a, 0)`` and the interval
    ``I = (-a - delta, -a + delta) x 0`` sit on opposite sides.
    """

    a: float
    c: float
    b: float
    R: float
    dim: int = 2
    slab_normal: int = 0
    beta_profile: str = "1 - smoothstep5(2u - 1), clamped"
    hessian_bound: float = 0.0

    def invariants(self) -> dict:
        return {"c_below_threshold": self.c < -self.a - 4 * self.a ** 2,
                "a_positive": self.a > 0,
                "b_exceeds_bound": self.b > self.hessian_bound}

    def to_json_dict(self) -> dict:
        return {"a": self.a, "c": self.c, "b": self.b, "R": self.R, "dim": self.dim,
                "slab_normal": self.slab_normal, "beta_profile": self.beta_profile,
                "hessian_bound": self.hessian_bound}


def th203_hessian_bound(c: float, R: float, n_t: int = 801, n_u: int = 401) -> float:
    """Grid maximum over the radius-``R`` ball of the non-``tau`` Hessian terms.

    For a unit direction ``eta`` in ``y`` the terms are bounded by
    ``|(t+c) beta'(u)| + |2 (t+c) beta''(u) - beta'(u)^2| u`` with
    ``u = |y|^2``; both vanish unless ``1/2 < u < 1``.
    """
    t = np.linspace(-R, R, n_t)[:, None]
    u = np.linspace(0.5, 1.0, n_u)[None, :]
    _, b1, b2 = plateau_profile(u)
    val = np.abs((t + c) * b1) + np.abs(2 * (t + c) * b2 - b1 ** 2) * u
    val = np.where(t ** 2 + u < R ** 2, val, 0.0)
    return float(val.max())


def construct_th203(a: float, R: float, dim: int = 2, c: float | None = None):
    """Build the smooth, locally convex, non-convex function across a slab.

    ``f(t, y) = t^2 + b |y|^2 + (t + c) beta(|y|^2)`` for ``t > 0`` and
    ``t^2 + b |y|^2`` for ``t <= 0``, with ``c = -a - 4a^2 - 1`` and ``b``
    twice the scanned bound (``c`` may be given explicitly; it must stay
    below ``-a - 4a^2``), so the Hessian is positive definite off
    ``{t = 0, |y| < 1}`` while the secant from ``(-a, 0)`` to ``(a, 0)`` is
    steeper downwards than the slope at ``(-a, 0)``.

    Returns
    -------
    (Th203Config, callable)
    """
    a, R = float(a), float(R)
    if not (a > 0 and R > 2 * a and dim >= 2):
        raise BadParams("construct_th203 needs a > 0, R > 2a and dim >= 2")
    c = -a - 4 * a * a - 1.0 if c is None else float(c)
    if not c < -a - 4 * a * a:
        raise BadParams("c must be below -a - 4a^2")
    bound = th203_hessian_bound(c, R)
    cfg = Th203Config(a, c, 2 * bound, R, dim, hessian_bound=bound)

    def f(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = X[:, 0]
        u = np.sum(X[:, 1:] ** 2, axis=1)
        out = t * t + cfg.b * u
        pos = t > 0
        out[pos] += (t[pos] + c) * plateau_profile(u[pos])[0]
        return out

    return cfg, f


def th203_sample_set(cfg: Th203Config, half_width: float = 0.1, count: int = 9) -> np.ndarray:
    """Interval samples around ``(-a, 0)``, then ``p = (a, 0)``, then cross-slab pairs."""
    t = -cfg.a + half_width * np.linspace(-1, 1, count)
    pts = [np.hstack([t[:, None], np.zeros((count, cfg.dim - 1))])]
    pts.append(np.hstack([[cfg.a], np.zeros(cfg.dim - 1)])[None, :])
    for tau in (0.3, 0.6):
        for y in (-0.6, 0.6):
            for sgn in (-1, 1):
                q = np.zeros(cfg.dim)
                q[0], q[1] = sgn * tau, y
                pts.append(q[None, :])
    return np.vstack(pts)


# ----------------------------------------------------------------------------
# scenario types

@dataclass(frozen=True)
class DomainSpec:
    """How to build a scenario's domain; ``resolution`` overrides one parameter."""

    label: str
    build: Callable = field(repr=False, compare=False)
    params: dict = field(default_factory=dict)
    resolution_param: str | None = None
    default_resolution: int | None = None

    def make(self, resolution: int | None = None):
        params = dict(self.params)
        if self.resolution_param is not None:
            params[self.resolution_param] = (self.default_resolution if resolution is None
                                             else int(resolution))
        return self.build(**params)

    def to_json_dict(self) -> dict:
        return {"label": self.label, "params": self.params,
                "resolution_param": self.resolution_param,
                "default_resolution": self.default_resolution}


@dataclass(frozen=True)
class FunctionSpec:
    formula: str
    oracle: Callable = field(repr=False, compare=False)
    sampling: str = "cell centers"


@dataclass(frozen=True)
class CheckOutcome:
    passed: bool
    measured: dict
    witness: object = None


@dataclass(frozen=True)
class Expectation:
    """One expected outcome, decided by one public operation."""

    operation: str
    parameters: dict
    outcome: str
    tolerance: float | None
    check: Callable = field(repr=False, compare=False)


@dataclass(frozen=True)
class Scenario:
    name: str
    domain: DomainSpec
    function: FunctionSpec
    expected: tuple
    provenance: str
    description: str = ""

    def __post_init__(self):
        if not self.provenance:
            raise BadParams(f"scenario {self.name} has no provenance")


class _Context:
    """Lazily built domain and samples shared by the checks of one run."""

    def __init__(self, sc: Scenario, resolution, seed: int, tolerance_scale: float):
        self.scenario, self.resolution, self.seed = sc, resolution, seed
        self.tolerance_scale = tolerance_scale
        self.tol = DEFAULT_TOLERANCES.scaled(tolerance_scale)
        self._domain = None
        self._sample = None
        self.plot: FiniteSampledFunction | None = None

    @property
    def f(self):
        return self.scenario.function.oracle

    @property
    def domain(self):
        if self._domain is None:
            self._domain = self.scenario.domain.make(self.resolution)
        return self._domain

    @property
    def sample(self):
        if self._sample is None:
            self._sample = sample_function(self.domain, self.f)
        return self._sample

    def scaled(self, tolerance):
        return None if tolerance is None else tolerance * self.tolerance_scale


def _verdict_measure(v) -> dict:
    out = {"holds": v.holds, "margin": v.margin}
    if v.witness is not None:
        w = v.witness
        out["witness"] = {"target": w.target, "support": w.support_points,
                          "weights": w.weights, "lhs": w.lhs, "rhs": w.rhs}
    return out


def _expect(operation, parameters, outcome, tolerance=None):
    def wrap(fn):
        return Expectation(operation, parameters, outcome, tolerance, fn)
    return wrap


# ----------------------------------------------------------------------------
# scenario definitions


def _eg20() -> Scenario:
    values = (-0.25, 0.0, 0.25)
    dom = DomainSpec("triangle_plus_interior", lambda: named_domain("triangle_plus_interior"))

    def data(v):
        P = named_domain("triangle_plus_interior").points
        return FiniteSampledFunction(P, [0.0, 0.0, 0.0, v])

    exps = []
    for v in values:
        @_expect("line_convexity_verdict", {"v": v}, "holds for every v")
        def line_check(ctx, tol, v=v):
            r = line_convexity_verdict(data(v), tol=ctx.tol)
            return CheckOutcome(r.holds, _verdict_measure(r))

        @_expect("convexity_verdict", {"v": v}, f"holds iff v <= 0 (expect {v <= 0})")
        def convex_check(ctx, tol, v=v):
            r = convexity_verdict(data(v), tol=ctx.tol)
            return CheckOutcome(r.holds == (v <= 0), _verdict_measure(r), r.witness)

        exps += [line_check, convex_check]

    @_expect("convex_roof", {"query": [1 / 3, 1 / 3], "points": "triangle vertices"},
             "threshold value 0 (barycentric weights 1/3)", 1e-12)
    def threshold(ctx, tol):
        P = named_domain("triangle_plus_interior").points[:3]
        r = convex_roof(FiniteSampledFunction(P, np.zeros(3)), [1 / 3, 1 / 3], ctx.tol)
        return CheckOutcome(abs(r.value) <= tol, {"value": r.value,
                                                  "weights": r.certificate.weights})

    exps.append(threshold)
    return Scenario("eg20_triangle", dom,
                    FunctionSpec("(0, 0, 0, v) on vertices and the interior point",
                                 lambda X: np.zeros(len(np.atleast_2d(X))), "listed values"),
                    tuple(exps), "triangle with an interior point: convex exactly when v <= 0",
                    "Line convexity is vacuous here; convexity needs v <= 0.")


def _eg21() -> Scenario:
    dom = DomainSpec("two_rays_step", named_domain, {"name": "two_rays_step"})

    @_expect("local_convexity_verdict", {"radius": 0.5}, "holds")
    def local(ctx, tol):
        r = local_convexity_verdict(ctx.sample, 0.5, tol=ctx.tol)
        return CheckOutcome(r.holds, _verdict_measure(r))

    @_expect("convexity_verdict", {}, "fails")
    def glob(ctx, tol):
        r = convexity_verdict(ctx.sample, tol=ctx.tol)
        return CheckOutcome(not r.holds, _verdict_measure(r), r.witness)

    return Scenario("eg21_step", dom,
                    FunctionSpec("sign(x)", lambda X: np.sign(np.atleast_2d(X)[:, 0]),
                                 "cloud points"),
                    (local, glob), "step across a gap: locally convex, not convex")


def slit_annulus_function(a: float = 0.5):
    """``r^2 + a theta`` with ``theta`` in [0, 2 pi) measured from the positive x-axis."""
    def f(X):
        X = np.atleast_2d(X)
        th = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * np.pi)
        return X[:, 0] ** 2 + X[:, 1] ** 2 + a * th
    return f


def slit_gap(sample, point=(1.0, 0.0)) -> dict:
    """Values at the cells just above and below the slit nearest ``point``."""
    P, v = sample.points, sample.values
    right = P[:, 0] > 0
    out = {}
    for side, sel in (("above", right & (P[:, 1] > 0)), ("below", right & (P[:, 1] < 0))):
        Q = P[sel]
        ymin = np.min(np.abs(Q[:, 1]))
        row = np.flatnonzero(sel & (np.abs(np.abs(P[:, 1]) - ymin) < 1e-9))
        k = row[np.argmin(np.abs(P[row, 0] - point[0]))]
        out[side] = {"point": P[k], "value": float(v[k])}
    out["gap"] = out["below"]["value"] - out["above"]["value"]
    return out


def _eg22() -> Scenario:
    a = 0.5
    dom = DomainSpec("slit_annulus", named_domain, {"name": "slit_annulus", "eps": 0.1},
                     "resolution", 192)

    @_expect("pd_certify", {"step": "grid spacing"}, "holds with positive margin")
    def pd(ctx, tol):
        r = pd_certify(ctx.f, ctx.domain)
        return CheckOutcome(r.holds, {"min_eigenvalue": r.worst_eigenvalue,
                                      "worst_point": r.worst_point})

    @_expect("convexity_verdict", {}, "fails")
    def glob(ctx, tol):
        r = convexity_verdict(ctx.sample, tol=ctx.tol)
        return CheckOutcome(not r.holds, _verdict_measure(r), r.witness)

    @_expect("slit_gap", {"point": [1.0, 0.0]}, "one-sided gap 2 pi a = pi", 0.05)
    def gap(ctx, tol):
        g = slit_gap(ctx.sample)
        err = abs(g["gap"] - 2 * math.pi * a)
        return CheckOutcome(err <= tol, {**g, "error": err, "resolution":
                                         ctx.resolution or 192,
                                         "spacing": ctx.domain.spacing})

    return Scenario("eg22_slit_annulus", dom,
                    FunctionSpec("r^2 + 0.5 theta", slit_annulus_function(a)),
                    (pd, glob, gap), "slit annulus: Hessian-PD, one-sided limits 1 and 1 + 2 pi a at (1, 0)",
                    "The gap check needs resolution of about 96 or more.")


def _eg23() -> Scenario:
    dom = DomainSpec("tripod", named_domain, {"name": "tripod"})

    def f(X):
        X = np.atleast_2d(X)
        return (np.hypot(X[:, 0], X[:, 1]) - 1) ** 2

    @_expect("line_convexity_verdict", {"per": "arm"}, "holds on each arm")
    def arms(ctx, tol):
        P, v = ctx.sample.points, ctx.sample.values
        ang = np.arctan2(P[:, 1], P[:, 0])
        res = []
        for th in ctx.domain.meta["arms"]:
            d = np.abs(np.angle(np.exp(1j * (ang - th))))
            sel = (d < 1e-6) | (np.hypot(P[:, 0], P[:, 1]) < 1e-12)
            r = line_convexity_verdict(FiniteSampledFunction(P[sel], v[sel]), tol=ctx.tol)
            res.append({"arm": th, "holds": r.holds, "margin": r.margin})
        return CheckOutcome(all(x["holds"] for x in res), {"arms": res})

    @_expect("local_convexity_verdict", {"radius": 1.5, "center": [0.0, 0.0]},
             "fails at the origin: f(0) = 1 against the mean 0 of three r = 1 points", 0.99)
    def local(ctx, tol):
        P = ctx.sample.points
        i0 = int(np.argmin(np.linalg.norm(P, axis=1)))
        r = local_convexity_verdict(ctx.sample, 1.5, centers=[i0], tol=ctx.tol)
        w = r.witness
        ok = (not r.holds and w is not None and np.allclose(w.target, 0)
              and w.lhs - w.rhs >= tol)
        return CheckOutcome(bool(ok), _verdict_measure(r), w)

    return Scenario("eg23_tripod", dom, FunctionSpec("(r - 1)^2", f, "cloud points"),
                    (arms, local), "three-armed star: convex on every line, not locally convex at 0")


def _eg24() -> Scenario:
    dom = DomainSpec("two_segments_plus_origin", named_domain,
                     {"name": "two_segments_plus_origin"})

    @_expect("convexity_verdict", {"strict": False}, "holds", 1e-9)
    def plain(ctx, tol):
        r = convexity_verdict(ctx.sample, tol=ctx.tol)
        return CheckOutcome(r.holds and r.margin >= -tol, _verdict_measure(r))

    @_expect("convexity_verdict", {"strict": True},
             "fails at the origin = (0,1)/2 + (0,-1)/2 with equality", 1e-9)
    def strict(ctx, tol):
        r = convexity_verdict(ctx.sample, strict=True, tol=ctx.tol)
        w = r.witness
        ok = (not r.holds and w is not None and np.allclose(w.target, 0)
              and abs(w.lhs - w.rhs) <= tol)
        return CheckOutcome(bool(ok), _verdict_measure(r), w)

    return Scenario("eg24_two_segments", dom,
                    FunctionSpec("x^2", lambda X: np.atleast_2d(X)[:, 0] ** 2, "cloud points"),
                    (plain, strict), "two segments plus the origin: x^2 convex, not strictly")


def axis_rows(spacing: float, half: float = 3.0) -> PointCloud:
    """Points ``(k spacing, +-spacing/2)``: the two rows of a lattice next to the x-axis."""
    k = int(round(half / spacing))
    x = spacing * np.arange(-k, k + 1)
    P = np.vstack([np.stack([x, np.full_like(x, s * spacing / 2)], axis=1) for s in (1, -1)])
    return PointCloud(P, {"name": "axis_rows", "spacing": spacing})


def _eg31() -> Scenario:
    def f(X):
        X = np.atleast_2d(X)
        return np.exp(X[:, 0]) * X[:, 1] ** 2

    dom = DomainSpec("axis_rows", lambda resolution: axis_rows(6.0 / resolution), {},
                     "resolution", 60)
    exps = []

    @_expect("convex_roof", {"query": [0.0, 0.0], "rows": "y = +-0.05"},
             "value <= 0.0025 (rounding slack 1e-12)", 1e-12)
    def roof0(ctx, tol):
        r = convex_roof(ctx.sample, [0.0, 0.0], ctx.tol)
        return CheckOutcome(r.value <= 0.0025 + tol, {"value": r.value})

    exps.append(roof0)
    for x in (-1.0, 1.0):
        @_expect("convex_roof", {"query": [x, 0.0]}, "equals e^x (spacing/2)^2", 1e-12)
        def roofx(ctx, tol, x=x):
            r = convex_roof(ctx.sample, [x, 0.0], ctx.tol)
            want = math.exp(x) * (ctx.domain.meta["spacing"] / 2) ** 2
            return CheckOutcome(abs(r.value - want) <= tol * (1 + want),
                                {"value": r.value, "expected": want})
        exps.append(roofx)

    @_expect("convex_roof", {"query": [0.0, 0.0], "resolutions": [60, 120, 240]},
             "decreases to 0 under refinement")
    def refine(ctx, tol):
        vals = [convex_roof(sample_function(axis_rows(6.0 / n), f), [0.0, 0.0], ctx.tol).value
                for n in (60, 120, 240)]
        return CheckOutcome(vals[0] > vals[1] > vals[2] >= 0, {"values": vals})

    for x in (-1.0, 0.0, 1.0):
        @_expect("fd_hessian", {"point": [x, 0.0]}, "smallest eigenvalue 0", 1e-5)
        def hess_axis(ctx, tol, x=x):
            r = fd_hessian(f, [x, 0.0])
            return CheckOutcome(abs(r.min_eigenvalue) <= tol,
                                {"min_eigenvalue": r.min_eigenvalue})
        exps.append(hess_axis)

    # off the axis the Hessian exp(x) [[y^2, 2y], [2y, 2]] has determinant -2 y^2 e^(2x)
    want = (2.25 - math.sqrt(1.75 ** 2 + 4)) / 2

    @_expect("fd_hessian", {"point": [0.0, 0.5]},
             f"indefinite off the axis: smallest eigenvalue {want:.6f}", 1e-5)
    def hess_off(ctx, tol):
        r = fd_hessian(f, [0.0, 0.5])
        return CheckOutcome(abs(r.min_eigenvalue - want) <= tol,
                            {"min_eigenvalue": r.min_eigenvalue, "expected": want})

    exps += [refine, hess_off]
    return Scenario("eg31_plane_minus_axis", dom,
                    FunctionSpec("exp(x) y^2", f, "rows y = +-spacing/2, columns through 0"),
                    tuple(exps), "plane minus the x-axis: any convex extension is flat along the axis",
                    "resolution = cells across [-3, 3]; spacing = 6 / resolution.")


def _disk_minus_disk() -> Scenario:
    def f(X):
        return 1.0 / (2.0 - np.atleast_2d(X)[:, 0])

    dom = DomainSpec("disk_minus_disk", named_domain, {"name": "disk_minus_disk"},
                     "resolution", 64)

    @_expect("convexity_verdict", {}, "holds")
    def glob(ctx, tol):
        r = convexity_verdict(ctx.sample, tol=ctx.tol)
        return CheckOutcome(r.holds, _verdict_measure(r))

    @_expect("lipschitz_estimate", {"resolutions": [64, 128, 256]},
             "strictly increasing, last >= 10", 10.0)
    def lip(ctx, tol):
        consts = []
        for n in (64, 128, 256):
            g = sample_function(named_domain("disk_minus_disk", resolution=n), f)
            consts.append(lipschitz_estimate(g).constant)
        ok = consts[0] < consts[1] < consts[2] and consts[2] >= 10.0
        return CheckOutcome(ok, {"constants": consts})

    return Scenario("disk_minus_disk", dom, FunctionSpec("1 / (2 - x)", f), (glob, lip),
                    "1/(2 - x) on a disk minus an internally tangent disk: unbounded "
                    "Lipschitz constant")


def three_points_neighborhood(radius: float = 0.1, resolution: int = 300) -> GridDomain:
    """Cells within ``radius`` of 0, 1 or 2 on the line, lattice over [-0.5, 2.5]."""
    centers = np.array([0.0, 1.0, 2.0])

    def pred(X):
        return np.min(np.abs(X[:, :1] - centers), axis=1) <= radius

    return build_grid_domain(pred, ([-0.5], [2.5]), resolution, name="three_points_nbhd")


def _three_points() -> Scenario:
    def f(X):
        x = np.atleast_2d(X)[:, 0]
        return (x - np.round(x)) ** 2

    dom = DomainSpec("three_points_neighborhood", three_points_neighborhood, {},
                     "resolution", 300)

    @_expect("convexity_verdict", {"points": [0, 1, 2]}, "holds (non-strict)")
    def convex(ctx, tol):
        r = convexity_verdict(sample_function(named_domain("three_points_line"), f),
                              tol=ctx.tol)
        return CheckOutcome(r.holds, _verdict_measure(r))

    @_expect("convexity_verdict", {"points": [0, 1, 2], "strict": True}, "fails")
    def strict(ctx, tol):
        r = convexity_verdict(sample_function(named_domain("three_points_line"), f),
                              strict=True, tol=ctx.tol)
        return CheckOutcome(not r.holds, _verdict_measure(r), r.witness)

    @_expect("hull_smooth_extension", {"eps": 0.05}, "precondition fails")
    def hull(ctx, tol):
        try:
            hull_smooth_extension(f, ctx.domain, 0.05)
        except PreconditionFailed as exc:
            return CheckOutcome(True, {"error": type(exc).code, "message": str(exc)})
        return CheckOutcome(False, {"error": None})

    return Scenario("three_points_line", dom,
                    FunctionSpec("(x - x0)^2 near each x0 in {0, 1, 2}", f), (convex, strict, hull),
                    "neighbourhoods of three collinear points: convex data with no PD hull extension",
                    "f has a positive Hessian near each point but is only convex on the "
                    "three points themselves, so no positive definite extension exists.")


def punctured_square(resolution: int = 12) -> GridDomain:
    """Square grid on [-1, 1]^2 with three interior cells removed (a codim-2 deletion)."""
    dom = build_grid_domain(lambda X: np.ones(len(X), bool), ([-1, -1], [1, 1]), resolution,
                            name="punctured_square")
    ind = dom.indicator.copy()
    m = resolution // 2
    for i, j in ((m - 2, m - 1), (m, m + 1), (m + 1, m - 3)):
        ind[i, j] = False
    return dom.with_indicator(ind, name="punctured_square")


def max_affine(seed: int, count: int = 3, dim: int = 2):
    """``max_k (a_k . x + b_k)`` with coefficients drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (count, dim))
    b = rng.uniform(-0.5, 0.5, count)

    def f(X):
        return np.max(np.atleast_2d(X) @ A.T + b, axis=1)
    return f


def three_verdicts(sample, radius, tol) -> dict:
    return {"convex": convexity_verdict(sample, tol=tol),
            "local": local_convexity_verdict(sample, radius, tol=tol),
            "interval": interval_convexity_verdict(sample, tol=tol)}


def _th201() -> Scenario:
    dom = DomainSpec("punctured_square", punctured_square, {}, "resolution", 12)

    def run(ctx, fn, expect):
        g = sample_function(ctx.domain, fn)
        vs = three_verdicts(g, 2.5 * ctx.domain.spacing, ctx.tol)
        flags = {k: v.holds for k, v in vs.items()}
        return CheckOutcome(all(h == expect for h in flags.values()), {"verdicts": flags})

    @_expect("three verdicts", {"function": "max of 3 affine (seeded)"},
             "convex, locally convex and interval convex all hold")
    def agree_convex(ctx, tol):
        return run(ctx, max_affine(ctx.seed), True)

    @_expect("three verdicts", {"function": "-|x|^2"}, "all three fail")
    def agree_concave(ctx, tol):
        return run(ctx, lambda X: -np.sum(np.atleast_2d(X) ** 2, axis=1), False)

    return Scenario("th201_agreement", dom,
                    FunctionSpec("max of three seeded affine functions", max_affine(0)),
                    (agree_convex, agree_concave),
                    "grid minus a codimension-2 set: the three convexity notions agree")


def product_union(step: float = 0.05) -> PointCloud:
    """``([1, 2] x {0}) ∪ ({0} x [1, 2])``: convex pieces times points outside them."""
    s = np.arange(1.0, 2.0 + step / 2, step)
    P = np.vstack([np.stack([s, np.zeros_like(s)], 1), np.stack([np.zeros_like(s), s], 1)])
    return PointCloud(P, {"name": "product_union"})


_PRODUCT_CASES = {
    "quadratic_and_exp": (lambda x, y: (x - 1.3) ** 2 + 0.2, lambda x, y: np.exp(y) - 3, True),
    "affine_and_abs": (lambda x, y: 4 * x - 7, lambda x, y: np.abs(y - 1.5), True),
    "concave_piece": (lambda x, y: -(x - 1.5) ** 2, lambda x, y: y, False),
}


def _product_union() -> Scenario:
    dom = DomainSpec("product_union", product_union)

    def oracle(case):
        f1, f2, _ = _PRODUCT_CASES[case]

        def f(X):
            X = np.atleast_2d(X)
            x, y = X[:, 0], X[:, 1]
            return np.where(np.abs(y) < 1e-12, f1(x, y), f2(x, y))
        return f

    exps = []
    for case, (_, _, convex) in _PRODUCT_CASES.items():
        @_expect("local_convexity_verdict, convexity_verdict", {"case": case, "radius": 0.12},
                 f"both {'hold' if convex else 'fail'}")
        def check(ctx, tol, case=case, convex=convex):
            g = sample_function(ctx.domain, oracle(case))
            loc = local_convexity_verdict(g, 0.12, tol=ctx.tol)
            glob = convexity_verdict(g, tol=ctx.tol)
            return CheckOutcome(loc.holds == convex and glob.holds == convex,
                                {"local": loc.holds, "convex": glob.holds})
        exps.append(check)

    return Scenario("product_union_sanity", dom,
                    FunctionSpec("piecewise per segment (hand-picked cases)",
                                 oracle("quadratic_and_exp"), "cloud points"),
                    tuple(exps), "unions of convex pieces times points outside them",
                    "Hand-picked instances only; not a proof of the general statement.")


def nested_squares_function(X):
    """``|x|^2`` plus a narrow bump at (0, 2): Hessian indefinite near the bump only."""
    X = np.atleast_2d(X)
    x, y = X[:, 0], X[:, 1]
    return x * x + y * y + 0.15 * np.exp(-(x * x + (y - 2) ** 2) / 0.1)


def _nested() -> Scenario:
    params = {"name": "nested_squares", "cut": 2.0, "gap": 1.0}
    dom = DomainSpec("nested_squares", named_domain, params, "resolution", 125)
    bbox = ([-2.5, -0.5], [2.5, 4.5])
    eps, margin = 0.2, 0.45

    @_expect("pd_certify", {"region": "omega3", "function": "f"}, "fails (control)")
    def control(ctx, tol):
        r = pd_certify(ctx.f, ctx.domain["omega3"])
        return CheckOutcome(not r.holds, {"min_eigenvalue": r.worst_eigenvalue})

    @_expect("outside_smooth_extension x2, pd_certify",
             {"eps": eps, "margin": margin, "bbox": [list(b) for b in bbox]},
             "chained extension is certified on omega3")
    def chain(ctx, tol):
        d = ctx.domain
        h1 = outside_smooth_extension(ctx.f, d["omega1"], margin, eps, bbox)
        h2 = outside_smooth_extension(h1, d["omega2"], margin, eps, bbox)
        inside = bool(h2.valid_region.contains(d["omega3"].centers()).all())
        r = pd_certify(h2, d["omega3"])
        return CheckOutcome(inside and r.holds,
                            {"c1": h1.constant_c, "c2": h2.constant_c, "covered": inside,
                             "min_eigenvalue": r.worst_eigenvalue})

    return Scenario("nested_squares_chain", dom,
                    FunctionSpec("|x|^2 + 0.15 exp(-|x - (0,2)|^2 / 0.1)",
                                 nested_squares_function, "omega1 cells"),
                    (control, chain), "nested squares: extending Hessian convexity twice in a row",
                    "f is not positive definite on omega3; the twice-extended function is.")


def _th203() -> Scenario:
    cfg, f = construct_th203(0.5, 3.0, c=-2.0)
    dom = DomainSpec("slab_complement", named_domain, {"name": "slab_complement"},
                     "resolution", 120)

    @_expect("construct_th203", {"a": 0.5, "R": 3.0, "c": -2.0}, "all configuration invariants hold")
    def invariants(ctx, tol):
        inv = cfg.invariants()
        return CheckOutcome(all(inv.values()), {"invariants": inv, "config": cfg.to_json_dict()})

    @_expect("secant vs slope", {"a": 0.5}, "secant -1.5 < slope -1 (1e-9 formula, 1e-4 FD)",
             1e-9)
    def secant(ctx, tol):
        a = cfg.a
        p, q = np.array([[a, 0.0]]), np.array([[-a, 0.0]])
        sec = float((f(p) - f(q))[0] / (2 * a))
        h = 1e-4
        fd = float((f(q + [h, 0]) - f(q - [h, 0]))[0] / (2 * h))
        sec_formula = (a + cfg.c) / (2 * a)
        ok = (abs(sec - sec_formula) <= tol and abs(sec - (-1.5)) <= tol
              and abs(fd - (-2 * a)) <= 1e-4 * ctx.tolerance_scale and sec < fd)
        return CheckOutcome(ok, {"secant": sec, "secant_formula": sec_formula, "slope_fd": fd,
                                 "slope_formula": -2 * a})

    @_expect("convexity_verdict", {"points": "p, interval samples, cross-slab pairs"}, "fails")
    def nonconvex(ctx, tol):
        P = th203_sample_set(cfg)
        r = convexity_verdict(FiniteSampledFunction(P, f(P)), tol=ctx.tol)
        return CheckOutcome(not r.holds, _verdict_measure(r), r.witness)

    @_expect("pd_certify", {"region": "radius-3 ball minus the slab |t| <= 0.05"}, "holds")
    def pd(ctx, tol):
        r = pd_certify(f, ctx.domain)
        return CheckOutcome(r.holds, {"min_eigenvalue": r.worst_eigenvalue,
                                      "worst_point": r.worst_point})

    return Scenario("th203_counterexample", dom,
                    FunctionSpec("t^2 + b|y|^2 + (t + c) beta(|y|^2) for t > 0", f),
                    (invariants, secant, nonconvex, pd),
                    "ball minus a slab: Hessian-PD on both sides, not convex")


_BUILDERS = {
    "eg20_triangle": _eg20,
    "eg21_step": _eg21,
    "eg22_slit_annulus": _eg22,
    "eg23_tripod": _eg23,
    "eg24_two_segments": _eg24,
    "eg31_plane_minus_axis": _eg31,
    "disk_minus_disk": _disk_minus_disk,
    "three_points_line": _three_points,
    "th201_agreement": _th201,
    "th203_counterexample": _th203,
    "nested_squares_chain": _nested,
    "product_union_sanity": _product_union,
}

SCENARIO_NAMES = tuple(sorted(_BUILDERS))


def scenario(name: str) -> Scenario:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from "
                              f"{', '.join(SCENARIO_NAMES)}") from None


# ----------------------------------------------------------------------------
# running and reporting

def to_plain(x):
    """JSON-ready copy: arrays to lists, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): to_plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def run_scenario(name: str, resolution: int | None = None, seed: int = 0,
                 tolerance_scale: float = 1.0, out_dir: str | None = None) -> dict:
    """Execute every expectation of a scenario.

    Returns the report dictionary. With ``out_dir`` the report is written to
    ``<name>.json`` and the plot data (coordinates, f, witness flags) to
    ``<name>.csv``, each atomically.
    """
    sc = scenario(name)
    ctx = _Context(sc, resolution, seed, tolerance_scale)
    checks, witnesses = [], []
    for e in sc.expected:
        tol = ctx.scaled(e.tolerance)
        out = e.check(ctx, tol)
        if out.witness is not None:
            witnesses.append(out.witness)
        checks.append({"operation": e.operation, "parameters": e.parameters,
                       "expected": e.outcome, "tolerance": tol, "passed": bool(out.passed),
                       "measured": out.measured})
    report = to_plain({
        "scenario": sc.name, "provenance": sc.provenance, "description": sc.description,
        "domain": sc.domain.to_json_dict(), "function": sc.function.formula,
        "resolution": resolution if resolution is not None else sc.domain.default_resolution,
        "seed": seed, "tolerance_scale": tolerance_scale,
        "passed": all(c["passed"] for c in checks), "checks": checks})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _atomic_write(os.path.join(out_dir, f"{name}.json"), report_to_json(report))
        _atomic_write(os.path.join(out_dir, f"{name}.csv"), plot_csv(ctx, witnesses))
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def plot_csv(ctx: _Context, witnesses=()) -> str:
    """Plot data: one row per sample with value and witness-role flags."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    dom = ctx.domain
    if isinstance(dom, dict):
        # several pieces: plot the first one with the scenario function
        ctx = _Context(ctx.scenario, ctx.resolution, ctx.seed, ctx.tolerance_scale)
        ctx._domain = dom[sorted(dom)[0]]
    P, v = ctx.sample.points, ctx.sample.values
    target = np.zeros(len(P), dtype=bool)
    support = np.zeros(len(P), dtype=bool)
    for wit in witnesses:
        target |= np.all(np.isclose(P, wit.target, atol=1e-12), axis=1)
        for q in wit.support_points:
            support |= np.all(np.isclose(P, q, atol=1e-12), axis=1)
    w.writerow([f"x{k}" for k in range(P.shape[1])] + ["f", "witness_target",
                                                        "witness_support"])
    for p, val, t, s in zip(P, v, target, support):
        w.writerow([repr(float(x)) for x in p] + [repr(float(val)), int(t), int(s)])
    return buf.getvalue()


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_gallery(names=None, **kwargs) -> dict:
    """Run several scenarios; the merged report is keyed and ordered by name."""
    names = SCENARIO_NAMES if names is None else tuple(sorted(names))
    runs = {n: run_scenario(n, **kwargs) for n in names}
    return {"passed": all(r["passed"] for r in runs.values()), "scenarios": runs}


__all__ = [
    "CheckOutcome", "DomainSpec", "Expectation", "FunctionSpec", "SCENARIO_NAMES", "Scenario",
    "Th203Config", "construct_th203", "plateau_profile", "report_to_json", "run_gallery",
    "run_scenario", "scenario", "slit_gap", "th203_hessian_bound", "th203_sample_set",
]
