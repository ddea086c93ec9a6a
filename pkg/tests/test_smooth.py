import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convext.domains import BandDomain, build_grid_domain, named_domain, sample_function
from convext.errors import BadParams, PreconditionFailed, SupportEscapesData
from convext.gallery import slit_annulus_function, three_points_neighborhood
from convext.smooth import (BarrierConfig, ball_cover, barrier_eval, barrier_function,
                            fd_hessian, fd_hessians, full_smooth_extension, gamma,
                            hull_smooth_extension, jacobi_eigenvalues, mollify,
                            outside_smooth_extension, pd_certify)
from oracles import exp_y2_hessian, gamma_closed_form, radial_barrier_hessian


def sq_norm(X):
    return np.sum(np.atleast_2d(X) ** 2, axis=1)


def exp_sum(X):
    X = np.atleast_2d(X)
    return np.exp(X[:, 0]) + np.exp(X[:, 1])


# --- finite-difference Hessians ---------------------------------------------------------


@pytest.mark.parametrize("x", [[0.0, 0.0], [1.5, -2.0], [0.3, 0.7, -1.0]])
def test_fd_hessian_of_square_norm(x):
    rep = fd_hessian(sq_norm, x, 1e-3)
    np.testing.assert_allclose(rep.matrix, 2 * np.eye(len(x)), atol=1e-6)
    assert 1.999 <= rep.min_eigenvalue <= 2.001


def test_fd_hessian_exp_y2_at_origin():
    rep = fd_hessian(lambda X: np.exp(X[:, 0]) * X[:, 1] ** 2, [0.0, 0.0], 1e-3)
    np.testing.assert_allclose(rep.matrix, exp_y2_hessian(0.0, 0.0), atol=1e-6)
    assert -1e-5 <= rep.min_eigenvalue <= 1e-5


def test_fd_hessian_saddle():
    rep = fd_hessian(lambda X: X[:, 0] ** 2 - X[:, 1] ** 2, [0.0, 0.0], 1e-3)
    assert rep.min_eigenvalue == pytest.approx(-2.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_fd_hessian_symmetric_and_consistent(x, y):
    rep = fd_hessian(lambda X: np.exp(X[:, 0]) * X[:, 1] ** 2, [x, y], 1e-3)
    M = rep.matrix
    assert np.abs(M - M.T).max() <= 1e-7 * (1 + np.abs(M).max())
    assert rep.min_eigenvalue == pytest.approx(np.linalg.eigvalsh(M)[0], abs=1e-9)
    np.testing.assert_allclose(M, exp_y2_hessian(x, y), atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_jacobi_matches_lapack(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, n, n))
    A = A + np.swapaxes(A, 1, 2)
    np.testing.assert_allclose(jacobi_eigenvalues(A), np.linalg.eigvalsh(A), atol=1e-10)


# --- certification ------------------------------------------------------------------------


def test_pd_certify_slit_annulus():
    dom = named_domain("slit_annulus", resolution=192)
    ok = pd_certify(slit_annulus_function(0.5), dom, margin=0.0)
    assert ok.holds and ok.worst_eigenvalue > 0
    bad = pd_certify(slit_annulus_function(2.0), dom, margin=0.0)
    assert not bad.holds
    # the failure sits on the inner rim, where 2 r^2 is smallest relative to |a|
    failing = dom.centers()[bad.min_eigenvalues <= 0]
    r = np.hypot(failing[:, 0], failing[:, 1])
    assert r.max() < 1.0 and np.hypot(*bad.worst_point) < 0.95


def test_pd_certify_square_norm_everywhere():
    dom = build_grid_domain(lambda X: np.ones(len(X), bool), ([-3, -3], [3, 3]), 30)
    cert = pd_certify(sq_norm, dom)
    assert cert.holds and cert.worst_eigenvalue == pytest.approx(2.0, abs=1e-6)


def test_pd_certify_needs_step_for_point_lists():
    with pytest.raises(BadParams):
        pd_certify(sq_norm, np.zeros((3, 2)))


# --- mollification -------------------------------------------------------------------------


def line(res=400):
    return build_grid_domain(lambda X: np.ones(len(X), bool), ([-1], [1]), res)


X_LINE = np.linspace(-0.8, 0.8, 161)[:, None]


def test_mollify_constant_is_exact():
    m = mollify(sample_function(line(), lambda X: np.full(len(X), 5.0)), 0.1)
    assert np.all(m(X_LINE) == 5.0) or np.abs(m(X_LINE) - 5.0).max() <= 1e-15 * 5


def test_mollify_affine():
    m = mollify(sample_function(line(), lambda X: 3 * X[:, 0] + 1), 0.1)
    assert np.abs(m(X_LINE) - (3 * X_LINE[:, 0] + 1)).max() <= 1e-6


def test_mollify_abs():
    m = mollify(sample_function(line(), lambda X: np.abs(X[:, 0])), 0.1)
    y = m(X_LINE)
    far = np.abs(X_LINE[:, 0]) > 0.1 + 1e-9
    assert np.abs(y - np.abs(X_LINE[:, 0]))[far].max() <= 1e-9
    assert np.diff(y, 2).min() >= -1e-9
    assert y[80] > 0  # smoothed at the kink


def test_mollify_rejects_escaping_support_and_small_delta():
    g = sample_function(line(), lambda X: X[:, 0])
    with pytest.raises(SupportEscapesData):
        mollify(g, 0.1)(np.array([[0.95]]))
    with pytest.raises(BadParams):
        mollify(g, 0.001)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mollify_preserves_convexity_along_axes(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(-1, 1, (4, 2))
    b = rng.uniform(-0.5, 0.5, 4)
    dom = build_grid_domain(lambda X: np.ones(len(X), bool), ([-1, -1], [1, 1]), 40)
    g = sample_function(dom, lambda X: np.max(X @ A.T + b, axis=1) + 0.2 * sq_norm(X))
    m = mollify(g, 0.15)
    t = np.linspace(-0.75, 0.75, 31)
    for c in (-0.5, 0.0, 0.4):
        for P in (np.stack([t, np.full_like(t, c)], 1), np.stack([np.full_like(t, c), t], 1)):
            assert np.diff(m(P), 2).min() >= -1e-9


# --- barrier --------------------------------------------------------------------------------


def test_gamma_closed_form_at_two():
    assert float(gamma(2.0)) == pytest.approx(7 / 12, abs=1e-12)
    cfg = BarrierConfig(np.array([[0.0]]), [1.0])
    value, grad, hess = barrier_eval(cfg, np.array([2.0]))
    assert value == pytest.approx(7 / 12, abs=1e-12)
    assert grad[0] == pytest.approx(2.0)       # gamma'(2) = 2 (2-1)^2
    assert hess[0, 0] == pytest.approx(5.0)    # (t-1)^2 + 2t(t-1) at t = 2
    t = np.linspace(0, 3, 31)
    np.testing.assert_allclose(gamma(t), gamma_closed_form(t), atol=1e-15)


def test_gamma_profile_matches_quadrature():
    from scipy.integrate import quad
    for t in (1.2, 2.0, 3.5):
        assert float(gamma(t)) == pytest.approx(quad(lambda s: s * (s - 1) ** 2, 1, t)[0],
                                                abs=1e-12)


def unit_square_cover():
    P = np.array([[0, 0], [1, 0], [0, 1], [1, 1.0]])
    return P, ball_cover(P, 0.3, 0.2)


def test_ball_cover_unit_square():
    P, cfg = unit_square_cover()
    assert len(cfg.radii) >= 6
    d = np.linalg.norm(P[:, None] - cfg.centers[None], axis=2)
    assert np.all(d < cfg.radii)
    # boundary of the intersection stays within min(margin, eps) of the square
    th = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    U = np.stack([np.cos(th), np.sin(th)], 1)
    for u in U:
        lo, hi = 0.0, 3.0
        for _ in range(60):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if cfg.in_all_balls(np.array([0.5, 0.5]) + mid * u)[0] else (lo, mid)
        b = np.array([0.5, 0.5]) + lo * u
        gap = np.linalg.norm(b - np.clip(b, 0, 1))
        assert gap < 0.2


def test_ball_cover_single_point_and_segment():
    cfg = ball_cover(np.array([[0.3, -0.2]]), 0.1, 0.1)
    assert cfg.in_all_balls(np.array([[0.3, -0.2]]))[0]
    assert not cfg.in_all_balls(np.array([[0.5, -0.2]]))[0]
    seg = np.array([[0.0, 0.0], [1.0, 1.0]])
    cfg = ball_cover(seg, 0.1, 0.1)
    assert cfg.in_all_balls(seg).all()
    assert not cfg.in_all_balls(np.array([[0.5, 0.65]]))[0]


def test_barrier_zero_inside_and_psd():
    P, cfg = unit_square_cover()
    v, g, H = barrier_eval(cfg, np.array([[0.5, 0.5], [0.1, 0.9]]))
    assert np.all(v == 0) and np.all(g == 0) and np.all(H == 0)
    rng = np.random.default_rng(5)
    X = rng.uniform(-3, 4, (100, 2))
    F = fd_hessians(barrier_function(cfg), X, 1e-4)
    ev = jacobi_eigenvalues(F)[:, 0]
    assert ev.min() >= -1e-6
    outside = ~cfg.in_all_balls(X, closed=True)
    assert np.all(jacobi_eigenvalues(barrier_eval(cfg, X[outside])[2])[:, 0] > 0)


def test_barrier_analytic_vs_fd_and_closed_form():
    P, cfg = unit_square_cover()
    rng = np.random.default_rng(6)
    X = rng.uniform(-2, 3, (400, 2))
    X = X[~cfg.in_all_balls(X, closed=True)][:100]
    v, G, H = barrier_eval(cfg, X)
    f = barrier_function(cfg)
    h = 1e-4
    for x, g_an, H_an in zip(X, G, H):
        g_fd = np.array([(f(x + h * e) - f(x - h * e))[0] / (2 * h) for e in np.eye(2)])
        assert np.abs(g_fd - g_an).max() <= 1e-5 * max(1.0, np.abs(g_an).max())
        H_fd = fd_hessian(f, x, h).matrix
        assert np.abs(H_fd - H_an).max() <= 1e-5 * max(1.0, np.abs(H_an).max())
        H_ref = sum(radial_barrier_hessian(x, c, r) for c, r in zip(cfg.centers, cfg.radii))
        np.testing.assert_allclose(H_an, H_ref, rtol=1e-12, atol=1e-12)


# --- hull smooth extension -------------------------------------------------------------------


def test_hull_extension_on_square_tunes_monotonically():
    sq = build_grid_domain(lambda X: np.ones(len(X), bool), ([0, 0], [1, 1]), 40)
    ext = hull_smooth_extension(exp_sum, sq, 0.15)
    C = sq.centers()
    np.testing.assert_array_equal(ext(C), exp_sum(C))
    assert ext.certificates["region"].holds and ext.constant_c >= 0
    near = [t["min_eigenvalue_near"] for t in ext.trace]
    assert all(b >= a for a, b in zip(near, near[1:]))
    assert pd_certify(ext, ext.valid_region).holds
    json.loads(ext.to_json())


def test_hull_extension_refuses_three_points():
    f = lambda X: (X[:, 0] - np.round(X[:, 0])) ** 2  # noqa: E731
    with pytest.raises(PreconditionFailed):
        hull_smooth_extension(f, three_points_neighborhood(), 0.05)


def test_hull_extension_rejects_coarse_grid():
    sq = build_grid_domain(lambda X: np.ones(len(X), bool), ([0, 0], [1, 1]), 8)
    with pytest.raises(BadParams):
        hull_smooth_extension(exp_sum, sq, 0.15)


# --- barrier and full extensions ----------------------------------------------------------------


@pytest.fixture(scope="module")
def square_barrier():
    sq = build_grid_domain(lambda X: np.all((X >= 0) & (X <= 1), 1), ([0, 0], [1, 1]), 50)
    return sq, outside_smooth_extension(exp_sum, sq, 0.3, 0.2, ([-3, -3], [3, 3]))


def test_barrier_extension_equals_base_on_omega(square_barrier):
    sq, ext = square_barrier
    C = sq.centers()
    np.testing.assert_array_equal(ext(C), exp_sum(C))
    assert ext.constant_c > 0
    assert all(c.holds for c in ext.certificates.values())


def test_barrier_extension_far_field_is_barrier(square_barrier):
    _, ext = square_barrier
    cfg = ext.parts["balls"]
    a = np.asarray(ext.auxiliary["affine"])
    X = np.array([[2.9, 2.9], [-2.9, 0.5], [0.5, -2.5]])
    expected = ext.constant_c * barrier_eval(cfg, X)[0] + X @ a[:-1] + a[-1]
    np.testing.assert_allclose(ext(X), expected, rtol=1e-13)


def test_barrier_extension_recipe_is_reproducible(square_barrier):
    sq, ext = square_barrier
    again = outside_smooth_extension(exp_sum, sq, 0.3, 0.2, ([-3, -3], [3, 3]))
    assert again.to_json() == ext.to_json()


def test_barrier_extension_refuses_saddle():
    sq = build_grid_domain(lambda X: np.all((X >= 0) & (X <= 1), 1), ([0, 0], [1, 1]), 50)
    with pytest.raises(PreconditionFailed):
        outside_smooth_extension(lambda X: X[:, 0] ** 2 - X[:, 1] ** 2, sq, 0.3, 0.2,
                                 ([-3, -3], [3, 3]))


def ring(res=40):
    disk = build_grid_domain(lambda X: np.hypot(X[:, 0], X[:, 1]) <= 1, ([-1, -1], [1, 1]), res)
    r = np.hypot(*disk.all_centers().reshape(-1, 2).T).reshape(disk.shape)
    return BandDomain(disk, disk.with_indicator(r < 0.3))


def test_full_extension_ring_excludes_hole():
    band = ring()
    ext = full_smooth_extension(band, sq_norm, 0.3, ([-3, -3], [3, 3]), eps_outer=0.25,
                                margin=0.2)
    C = ext.valid_region.centers()
    assert not np.any(band.hole.contains(C))
    assert np.hypot(C[:, 0], C[:, 1]).max() > 2.5
    assert pd_certify(ext, ext.valid_region).holds
    B = band.band.centers()
    np.testing.assert_array_equal(ext(B), sq_norm(B))


def test_full_extension_refuses_saddle():
    with pytest.raises(PreconditionFailed):
        full_smooth_extension(ring(), lambda X: X[:, 0] ** 2 - X[:, 1] ** 2, 0.3,
                              ([-3, -3], [3, 3]))
