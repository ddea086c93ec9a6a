import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convext.classify import (Notion, convexity_verdict, interval_convexity_verdict,
                              line_convexity_verdict, lipschitz_estimate,
                              local_convexity_verdict)
from convext.domains import (FiniteSampledFunction, PointCloud, build_grid_domain, named_domain,
                             sample_function)
from convext.errors import BadParams, DegenerateBall
from convext.gallery import max_affine, slit_annulus_function
from oracles import brute_convex, brute_lipschitz


def cloud_fn(points, values):
    return FiniteSampledFunction(np.asarray(points, float), np.asarray(values, float))


def assert_witness_valid(verdict, f):
    """The stored certificate reproduces its violation from the raw data."""
    w = verdict.witness
    assert w is not None and w.check()
    P, v = f.points, f.values
    lhs = v[w.target_index]
    rhs = w.weights @ v[list(w.support_indices)]
    assert lhs == pytest.approx(w.lhs, abs=1e-9)
    assert rhs == pytest.approx(w.rhs, abs=1e-9)
    np.testing.assert_allclose(w.weights @ P[list(w.support_indices)], P[w.target_index],
                               atol=1e-8)


# --- global convexity ------------------------------------------------------------


def test_collinear_parabola_points():
    v = convexity_verdict(cloud_fn([[0, 0], [1, 1], [2, 4]], [0, 1, 16]))
    assert v.holds and v.notion is Notion.CONVEX


def test_two_segments_strict_failure():
    cloud = named_domain("two_segments_plus_origin")
    f = sample_function(cloud, lambda X: X[:, 0] ** 2)
    assert convexity_verdict(f).holds
    strict = convexity_verdict(f, strict=True)
    assert not strict.holds
    w = strict.witness
    np.testing.assert_allclose(w.target, [0, 0], atol=1e-12)
    assert abs(w.lhs - w.rhs) <= 1e-9
    # the equality combination runs through the segments' midpoints
    np.testing.assert_allclose(np.abs(w.support_points[:, 1]), 1.0)


@pytest.mark.parametrize("v,holds", [(-0.5, True), (0.0, True), (1e-6, False), (0.3, False)])
def test_triangle_threshold(v, holds):
    f = cloud_fn([[0, 0], [1, 0], [0, 1], [1 / 3, 1 / 3]], [0, 0, 0, v])
    verdict = convexity_verdict(f)
    assert verdict.holds is holds
    assert brute_convex(f.points, f.values) is holds
    if not holds:
        assert_witness_valid(verdict, f)
        np.testing.assert_allclose(verdict.witness.weights, [1 / 3] * 3, atol=1e-9)


def test_step_function_locally_but_not_globally_convex():
    f = cloud_fn([[-2], [-1], [1], [2]], [-1, -1, 1, 1])
    # at unit spacing a ball must reach one neighbour; it never bridges the gap
    assert local_convexity_verdict(f, 1.0).holds
    assert not convexity_verdict(f).holds
    with pytest.raises(DegenerateBall):
        local_convexity_verdict(f, 0.5)


def test_tripod_local_failure_at_origin():
    cloud = named_domain("tripod")
    f = sample_function(cloud, lambda X: (np.hypot(X[:, 0], X[:, 1]) - 1) ** 2)
    origin = int(np.argmin(np.hypot(*cloud.points.T)))
    v = local_convexity_verdict(f, 1.5, centers=[origin])
    assert not v.holds
    w = v.witness
    assert w.lhs == pytest.approx(1.0)
    assert w.rhs == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(np.hypot(*w.support_points.T), 1.0, atol=1e-9)
    np.testing.assert_allclose(w.weights, [1 / 3] * 3, atol=1e-9)
    assert line_convexity_verdict(f).holds


def test_convex_function_on_convex_cloud_is_locally_convex():
    rng = np.random.default_rng(0)
    P = rng.uniform(-1, 1, (40, 2))
    f = cloud_fn(P, np.sum(P ** 2, axis=1))
    for r in (None, 0.6, 3.0):
        assert local_convexity_verdict(f, r).holds


# --- line and interval convexity ---------------------------------------------------


def test_triangle_line_convexity_is_vacuous():
    for v in (-3.0, 0.0, 5.0):
        f = cloud_fn([[0, 0], [1, 0], [0, 1], [1 / 3, 1 / 3]], [0, 0, 0, v])
        assert line_convexity_verdict(f).holds


def test_concave_spike_and_flat_strict():
    spike = cloud_fn([[0], [1], [2]], [0, 1, 0])
    v = line_convexity_verdict(spike)
    assert not v.holds
    assert v.witness.lhs == 1 and v.witness.rhs == 0
    np.testing.assert_allclose(v.witness.target, [1.0])
    flat = cloud_fn([[0], [1], [2]], [0, 0, 0])
    assert line_convexity_verdict(flat).holds
    assert not line_convexity_verdict(flat, strict=True).holds


def square(res=12):
    return build_grid_domain(lambda X: np.ones(len(X), bool), ([-1, -1], [1, 1]), res)


def test_interval_convexity_on_square():
    assert interval_convexity_verdict(sample_function(square(), lambda X: np.sum(X ** 2, 1))).holds
    v = interval_convexity_verdict(sample_function(square(), lambda X: -np.sum(X ** 2, 1)))
    assert not v.holds and v.witness is not None
    assert v.witness.lhs > v.witness.rhs


def test_slit_annulus_interval_convex_but_not_convex():
    dom = named_domain("slit_annulus", resolution=96)
    f = sample_function(dom, slit_annulus_function(0.5))
    assert interval_convexity_verdict(f).holds
    assert not convexity_verdict(f).holds


def test_interval_on_cloud_falls_back_to_lines():
    f = cloud_fn([[0], [1], [2]], [0, 1, 0])
    assert not interval_convexity_verdict(f).holds


# --- lipschitz ------------------------------------------------------------------------


def test_lipschitz_linear():
    est = lipschitz_estimate(cloud_fn([[0], [0.5], [1]], [0, 1.5, 3]))
    assert est.constant == pytest.approx(3.0)


def test_lipschitz_parabola():
    d = build_grid_domain(lambda X: np.ones(len(X), bool), ([-1], [1]), 200)
    est = lipschitz_estimate(sample_function(d, lambda X: X[:, 0] ** 2))
    assert 1.98 <= est.constant <= 2.0


def test_lipschitz_needs_two_points():
    with pytest.raises(BadParams):
        lipschitz_estimate(cloud_fn([[0.0]], [1.0]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 60))
def test_lipschitz_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (k, 2))
    v = rng.normal(size=k)
    est = lipschitz_estimate(cloud_fn(P, v))
    assert est.constant == pytest.approx(brute_lipschitz(P, v), rel=1e-12)
    a, b = (np.asarray(p) for p in est.witness_pair)
    i = int(np.argmin(np.linalg.norm(P - a, axis=1)))
    j = int(np.argmin(np.linalg.norm(P - b, axis=1)))
    assert abs(v[i] - v[j]) / np.linalg.norm(P[i] - P[j]) == pytest.approx(est.constant)


# --- properties -------------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(4, 12), st.integers(1, 2))
def test_convexity_matches_enumeration(seed, k, dim):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (k, dim))
    v = np.sum(P ** 2, 1) + 0.4 * rng.normal(size=k) * rng.integers(0, 2)
    f = cloud_fn(P, v)
    verdict = convexity_verdict(f)
    assert verdict.holds == brute_convex(P, v)
    if not verdict.holds:
        assert_witness_valid(verdict, f)
        assert verdict.witness.lhs - verdict.witness.rhs > 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_implication_chain_random_max_affine(seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (int(rng.integers(6, 20)), 2))
    f = sample_function(PointCloud(P), max_affine(seed))
    conv = convexity_verdict(f)
    assert conv.holds
    local = local_convexity_verdict(f, None)
    line = line_convexity_verdict(f)
    assert (not conv.holds or local.holds) and (not local.holds or line.holds)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (10, 2))
    v = rng.normal(size=10)
    a, b = rng.normal(size=2), rng.normal()
    base = convexity_verdict(cloud_fn(P, v))
    shifted = convexity_verdict(cloud_fn(P, v + P @ a + b))
    assert base.holds == shifted.holds


def test_strict_local_plus_convex_gives_strict_on_open_grid():
    rng = np.random.default_rng(7)
    M = rng.normal(size=(2, 2))
    Q = M @ M.T + 0.1 * np.eye(2)
    dom = build_grid_domain(lambda X: np.ones(len(X), bool), ([-1, -1], [1, 1]), 8)
    f = sample_function(dom, lambda X: np.sum(X ** 2, 1) ** 2 + np.einsum("ij,jk,ik->i", X, Q, X))
    assert convexity_verdict(f).holds
    assert local_convexity_verdict(f, 2.5 * dom.spacing, strict=True).holds
    assert convexity_verdict(f, strict=True).holds
