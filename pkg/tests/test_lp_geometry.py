import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convext.domains import build_grid_domain
from convext.errors import DimensionMismatch, NonFiniteValue, NotInHull
from convext.geometry import (LowerEnvelope, affine_hull_dim, epsilon_neighborhood,
                              hull_membership, relative_interior_test)
from convext.lp import LpProblem, LpStatus, solve_lp
from oracles import caratheodory_roof, highs_lp, highs_membership

# --- solve_lp ---------------------------------------------------------------


def test_single_forced_variable():
    sol = solve_lp(LpProblem([1.0], [[1.0]], [1.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.value == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(sol.primal, [1.0], atol=1e-12)


def test_two_point_roof_lp():
    # minimize lam2 subject to lam1 + lam2 = 1, 2 lam2 = 1
    sol = solve_lp(LpProblem([0.0, 1.0], [[1.0, 1.0], [0.0, 2.0]], [1.0, 1.0]))
    assert sol.optimal
    assert sol.value == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(sol.primal, [0.5, 0.5], atol=1e-12)


def test_contradictory_equalities_infeasible():
    sol = solve_lp(LpProblem([0.0, 0.0], [[1.0, 1.0], [1.0, 0.0]], [1.0, 2.0]))
    assert sol.status is LpStatus.INFEASIBLE
    assert sol.farkas is not None


def test_unbounded():
    # x1 - x2 = 0 with objective -x1 grows without bound
    sol = solve_lp(LpProblem([-1.0, 0.0], [[1.0, -1.0]], [0.0]))
    assert sol.status is LpStatus.UNBOUNDED


def test_problem_validation():
    with pytest.raises(DimensionMismatch):
        LpProblem([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(DimensionMismatch):
        LpProblem([1.0], [[1.0]], [1.0, 2.0])
    with pytest.raises(NonFiniteValue):
        LpProblem([np.nan], [[1.0]], [1.0])


def test_degenerate_problem_terminates():
    # Many redundant rows and ties: the pricing fallback must not cycle
    rng = np.random.default_rng(3)
    A = np.repeat(rng.integers(0, 2, (3, 8)).astype(float), 3, axis=0)
    x0 = np.zeros(8)
    x0[:2] = 1.0
    b = A @ x0
    sol = solve_lp(LpProblem(np.ones(8), A, b))
    status, value, _ = highs_lp(np.ones(8), A, b)
    assert sol.optimal and status == "optimal"
    assert sol.value == pytest.approx(value, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5), st.integers(1, 3))
def test_lp_matches_highs_and_beats_feasible_samples(seed, n_vars_extra, rows):
    rng = np.random.default_rng(seed)
    n = rows + n_vars_extra
    A = rng.normal(size=(rows, n))
    x_feas = rng.uniform(0, 1, n)
    b = A @ x_feas
    c = rng.normal(size=n)
    sol = solve_lp(LpProblem(c, A, b))
    status, value, _ = highs_lp(c, A, b)
    if status == "optimal":
        assert sol.optimal
        assert sol.value == pytest.approx(value, abs=1e-7 * (1 + abs(value)))
        assert np.all(sol.primal >= -1e-9)
        np.testing.assert_allclose(A @ sol.primal, b, atol=1e-8)
        assert sol.value == pytest.approx(c @ sol.primal, abs=1e-9)
        # weak duality style check: no feasible point does better
        null = np.linalg.svd(A)[2][rows:]
        for _ in range(100):
            y = x_feas + 0.3 * rng.normal(size=null.shape[0]) @ null
            if np.all(y >= 0):
                assert sol.value <= c @ y + 1e-9
    elif status == "unbounded":
        assert sol.status is LpStatus.UNBOUNDED


# --- hull membership ----------------------------------------------------------


def test_membership_midpoint():
    cert = hull_membership([[0.0], [1.0]], [0.5])
    assert cert.inside
    np.testing.assert_allclose(cert.weights, [0.5, 0.5], atol=1e-12)


def test_membership_outside_direction():
    G = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    cert = hull_membership(G, [1.0, 1.0])
    assert not cert.inside
    u = cert.separating_direction
    assert np.linalg.norm(u) == pytest.approx(1.0)
    np.testing.assert_allclose(u, np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-6)
    # the margin is real: every generator is strictly on the other side
    assert cert.margin > 0
    assert np.all(G @ u < u @ np.array([1.0, 1.0]))


def test_membership_centroid():
    G = [[0.0, 0.0], [4.0, 0.0], [3.0, 3.0]]
    cert = hull_membership(G, [7 / 3, 1.0])
    assert cert.inside
    np.testing.assert_allclose(cert.weights @ np.array(G), [7 / 3, 1.0], atol=1e-9)


def test_membership_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        hull_membership([[0.0, 0.0]], [0.0])


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(1, 10), st.booleans())
def test_membership_matches_enumeration(seed, dim, k, inside_bias):
    rng = np.random.default_rng(seed)
    G = rng.uniform(-1, 1, (k, dim))
    q = rng.dirichlet(np.ones(k)) @ G if inside_bias else rng.uniform(-1.5, 1.5, dim)
    cert = hull_membership(G, q)
    try:
        caratheodory_roof(G, np.zeros(k), q, tol=1e-10)
        brute = True
    except NotInHull:
        brute = False
    # points within rounding of the boundary may land either way
    if cert.inside != brute:
        assert cert.inside == highs_membership(G, q) or (not cert.inside and cert.margin < 1e-7)
        return
    if cert.inside:
        assert np.all(cert.weights >= -1e-12)
        assert np.linalg.norm(cert.weights @ G - q) <= 1e-8 * (1 + np.linalg.norm(q))
    else:
        assert np.all(G @ cert.separating_direction < cert.separating_direction @ q)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(1, 10))
def test_generator_is_always_inside(seed, dim, k):
    rng = np.random.default_rng(seed)
    G = rng.uniform(-1, 1, (k, dim))
    j = int(rng.integers(k))
    cert = hull_membership(G, G[j])
    assert cert.inside
    np.testing.assert_allclose(cert.weights @ G, G[j], atol=1e-8)


# --- affine hull and relative interior ------------------------------------------


@pytest.mark.parametrize("pts,dim", [
    ([[1.0, 2.0]], 0),
    ([[0, 0], [1, 0], [2, 0]], 1),
    ([[0, 0], [1, 0], [0, 1], [1, 1]], 2),
    ([[0, 0, 0], [1, 1, 1], [2, 2, 2.0]], 1),
])
def test_affine_hull_dim(pts, dim):
    assert affine_hull_dim(pts) == dim


def test_relative_interior_segment():
    assert relative_interior_test([[0.0], [2.0]], [1.0])
    assert not relative_interior_test([[0.0], [2.0]], [0.0])


def test_relative_interior_triangle_point():
    assert relative_interior_test([[0, 0], [4, 0], [3, 3]], [2.25, 1.3])
    # on an edge: in the hull but not in its relative interior
    assert not relative_interior_test([[0, 0], [4, 0], [3, 3]], [2.0, 0.0])


def test_relative_interior_lower_dimensional():
    # a segment in the plane: its midpoint is relatively interior
    assert relative_interior_test([[0, 0], [2, 2]], [1, 1])


def test_relative_interior_outside_raises():
    with pytest.raises(NotInHull):
        relative_interior_test([[0.0], [1.0]], [3.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_relative_interior_implies_membership_and_vertices_fail(seed, dim):
    rng = np.random.default_rng(seed)
    G = rng.uniform(-1, 1, (dim + 1, dim))  # a simplex in general position
    if affine_hull_dim(G) < dim:
        return
    q = rng.dirichlet(np.ones(dim + 1)) @ G
    if relative_interior_test(G, q):
        assert hull_membership(G, q).inside
    for g in G:
        assert not relative_interior_test(G, g)


# --- epsilon neighbourhood -------------------------------------------------------


def annulus(res=96):
    return build_grid_domain(lambda X: np.abs(np.hypot(X[:, 0], X[:, 1]) - 1) <= 0.1,
                             ([-1.2, -1.2], [1.2, 1.2]), res)


def test_eps_zero_is_identity():
    d = annulus()
    assert np.array_equal(epsilon_neighborhood(d, 0.0).indicator, d.indicator)


def test_single_cell_ball_stencil():
    ind = np.zeros((11, 11), bool)
    ind[5, 5] = True
    dom = build_grid_domain(lambda X: np.ones(len(X), bool), ([0, 0], [11, 11]), 11)
    dom = dom.with_indicator(ind)
    out = epsilon_neighborhood(dom, 2.0)
    I, J = np.indices((11, 11))
    np.testing.assert_array_equal(out.indicator, (I - 5) ** 2 + (J - 5) ** 2 <= 4)


def test_annulus_neighborhood_matches_analytic():
    d = annulus(240)
    out = epsilon_neighborhood(d, 0.05)
    r = np.hypot(*out.all_centers().reshape(-1, 2).T).reshape(out.shape)
    exact = np.abs(r - 1) <= 0.15
    # disagreement only within one cell of the analytic boundary
    bad = out.indicator != exact
    assert np.all(np.abs(np.abs(r[bad] - 1) - 0.15) <= d.spacing * np.sqrt(2))


def test_small_eps_warns():
    with pytest.warns(UserWarning):
        epsilon_neighborhood(annulus(), 0.001)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 0.3), st.floats(0, 0.3))
def test_eps_neighborhood_monotone(e1, e2):
    e1, e2 = sorted((e1, e2))
    d = annulus(48)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = epsilon_neighborhood(d, e1).indicator
        b = epsilon_neighborhood(d, e2).indicator
    assert not np.any(a & ~b)


# --- lower envelope (qhull-backed) against the LP roof ---------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_lower_envelope_matches_enumeration(seed, dim):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-1, 1, (8, dim))
    v = rng.uniform(-1, 1, 8)
    env = LowerEnvelope(P, v)
    for _ in range(3):
        q = rng.dirichlet(np.ones(8)) @ P
        assert env(q[None, :])[0] == pytest.approx(caratheodory_roof(P, v, q)[0], abs=1e-9)
