import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convext.errors import BadParams, UnknownScenario
from convext.gallery import (SCENARIO_NAMES, DomainSpec, FunctionSpec, Scenario,
                             construct_th203, plateau_profile, report_to_json, run_gallery,
                             run_scenario, scenario, th203_sample_set)
from convext.smooth import fd_hessian

EXPECTED_NAMES = {
    "disk_minus_disk", "eg20_triangle", "eg21_step", "eg22_slit_annulus", "eg23_tripod",
    "eg24_two_segments", "eg31_plane_minus_axis", "nested_squares_chain",
    "product_union_sanity", "th201_agreement", "th203_counterexample", "three_points_line",
}


@pytest.fixture(scope="module")
def gallery():
    return run_gallery(seed=0)


def test_registry_contents():
    assert set(SCENARIO_NAMES) == EXPECTED_NAMES
    assert list(SCENARIO_NAMES) == sorted(SCENARIO_NAMES)
    for name in SCENARIO_NAMES:
        sc = scenario(name)
        assert sc.provenance and sc.expected


@pytest.mark.parametrize("name", sorted(EXPECTED_NAMES))
def test_scenario_passes_at_default_resolution(gallery, name):
    report = gallery["scenarios"][name]
    failed = [c["operation"] for c in report["checks"] if not c["passed"]]
    assert report["passed"], failed


def test_gallery_aggregate(gallery):
    assert gallery["passed"]
    assert list(gallery["scenarios"]) == sorted(EXPECTED_NAMES)


def test_report_is_strict_json(gallery):
    for report in gallery["scenarios"].values():
        text = report_to_json(report)
        assert json.loads(text) == report


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        scenario("eg99_missing")
    with pytest.raises(UnknownScenario):
        run_scenario("eg99_missing")


def test_slit_gap_fails_at_coarse_resolution():
    report = run_scenario("eg22_slit_annulus", resolution=48)
    assert not report["passed"]
    assert report["resolution"] == 48
    gap = [c for c in report["checks"] if not c["passed"]]
    assert len(gap) == 1 and "gap" in json.dumps(gap[0]["measured"])


def test_scenario_requires_provenance():
    dom = DomainSpec("x", lambda: None, {}, None, None)
    with pytest.raises(BadParams):
        Scenario("bad", dom, FunctionSpec("0", lambda X: 0), (), "")


def test_run_scenario_writes_json_and_csv(tmp_path):
    report = run_scenario("eg24_two_segments", out_dir=str(tmp_path))
    assert report["passed"]
    assert json.loads((tmp_path / "eg24_two_segments.json").read_text()) == report
    rows = list(csv.reader((tmp_path / "eg24_two_segments.csv").open()))
    assert rows[0] == ["x0", "x1", "f", "witness_target", "witness_support"]
    flagged = [r for r in rows[1:] if r[3] == "1"]
    assert len(flagged) == 1 and float(flagged[0][0]) == 0.0 and float(flagged[0][1]) == 0.0


# --- slab counterexample construction --------------------------------------------------


def test_plateau_profile_shape():
    u = np.array([-1.0, 0.0, 0.5, 0.75, 1.0, 2.0])
    b, b1, b2 = plateau_profile(u)
    np.testing.assert_allclose(b[[0, 1, 2]], 1.0)
    np.testing.assert_allclose(b[[4, 5]], 0.0)
    assert b[3] == pytest.approx(0.5)
    assert np.all(b1 <= 0)
    # derivatives against central differences
    h = 1e-6
    uu = np.linspace(0.52, 0.98, 7)
    np.testing.assert_allclose(plateau_profile(uu)[1],
                               (plateau_profile(uu + h)[0] - plateau_profile(uu - h)[0]) / (2 * h),
                               atol=1e-6)


def test_slab_counterexample_reference_numbers():
    cfg, f = construct_th203(0.5, 3.0, c=-2.0)
    a, c = cfg.a, cfg.c
    assert all(cfg.invariants().values())
    sec = float((f([[a, 0]]) - f([[-a, 0]]))[0] / (2 * a))
    assert sec == pytest.approx((a + c) / (2 * a), abs=1e-12)
    assert sec == pytest.approx(-1.5, abs=1e-12)
    h = 1e-4
    fd = float((f([[-a + h, 0]]) - f([[-a - h, 0]]))[0] / (2 * h))
    assert fd == pytest.approx(-2 * a, abs=1e-4)
    assert sec < fd


def test_slab_counterexample_default_c_is_below_threshold():
    cfg, _ = construct_th203(0.5, 3.0)
    assert cfg.c == pytest.approx(-0.5 - 1.0 - 1.0)


def test_slab_counterexample_rejects_bad_parameters():
    with pytest.raises(BadParams):
        construct_th203(0.5, 0.9)
    with pytest.raises(BadParams):
        construct_th203(0.5, 3.0, c=-1.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 1.0, exclude_min=True, exclude_max=True))
def test_slab_counterexample_invariants_for_random_a(a):
    cfg, f = construct_th203(a, 3.0)
    inv = cfg.invariants()
    assert all(inv.values()), inv
    assert -cfg.a < 0 < cfg.a
    # Hessian positive definite at a few points away from the slab t = 0
    for x in ([0.3, 0.7], [-0.4, 0.2], [1.0, -0.8], [0.05, 0.9]):
        assert fd_hessian(f, x, 1e-4).min_eigenvalue > 0


def test_slab_counterexample_sample_set_layout():
    cfg, _ = construct_th203(0.5, 3.0, c=-2.0)
    P = th203_sample_set(cfg)
    assert P.shape == (9 + 1 + 8, 2)
    np.testing.assert_allclose(P[9], [0.5, 0.0])
    assert np.all(P[:9, 1] == 0) and np.all(np.abs(P[:9, 0] + 0.5) <= 0.1 + 1e-12)
