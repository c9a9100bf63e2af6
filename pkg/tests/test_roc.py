import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from isocal.core import Dataset, synth_simplex
from isocal.pav import pav_fit, pav_values
from isocal.roc import (
    auc,
    convex_hull_roc,
    csd,
    default_threshold_grid,
    gcm,
    is_roc_monotone,
    lattice_thresholds,
    pareto_front,
    roc_surface,
    sroc_curve,
    vus,
    vus_with_error,
    RocGraph,
)

from oracles import exact_dominated_volume, pairwise_auc, sroc_points_by_counting
from strategies import binary_problems


def _pointset(g):
    return {tuple(p) for p in g.points}


def _same_points(a, b, tol=1e-12):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    gap = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    return bool(gap.min(axis=1).max() <= tol and gap.min(axis=0).max() <= tol)


def test_four_point_curve_by_counting():
    s, y = [0.1, 0.2, 0.3, 0.4], [0, 1, 0, 1]
    g = sroc_curve(s, y)
    assert len(g) == 5
    assert _pointset(g) == sroc_points_by_counting(s, y)
    assert auc(g) == pytest.approx(pairwise_auc(s, y), abs=1e-15)


def test_separated_scores_reach_top_right_corner():
    g = sroc_curve([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert (1.0, 1.0) in _pointset(g)
    assert auc(g) == 1.0


def test_constant_scores_give_diagonal():
    g = sroc_curve([0.5] * 4, [0, 1, 0, 1])
    assert _pointset(g) == {(0.0, 1.0), (1.0, 0.0)}
    assert auc(g) == 0.5


def test_single_class_rejected():
    with pytest.raises(ValueError):
        sroc_curve([0.1, 0.2], [1, 1])


@given(binary_problems(min_n=2, max_n=40, ties=True))
def test_sroc_matches_counting_and_pairwise_auc(problem):
    s, y, w = problem
    assume(0 < y.sum() < y.size)
    g = sroc_curve(s, y.astype(int), w)
    ref = sroc_points_by_counting(s, y.astype(int), w)
    assert len(g) == len(ref)
    for p in g.points:
        assert min(max(abs(p[0] - a), abs(p[1] - b)) for a, b in ref) <= 1e-12
    assert auc(g) == pytest.approx(pairwise_auc(s, y.astype(int), w), abs=1e-12)


def test_csd_and_gcm_hand_example():
    c = csd([1, 0, 1])
    assert c.points.tolist() == [[0, 0], [1, 1], [2, 1], [3, 2]]
    assert gcm(c).points.tolist() == [[0, 0], [2, 1], [3, 2]]


def test_gcm_of_monotone_targets_is_csd_without_collinear_points():
    c = csd([0, 0, 1, 1])
    assert gcm(c).points.tolist() == [[0, 0], [2, 0], [4, 2]]
    c = csd([0, 0.5, 1])
    assert gcm(c).points.tolist() == c.points.tolist()


@given(binary_problems(max_n=50, ties=True))
def test_gcm_slopes_are_pav_values(problem):
    s, y, w = problem
    order = np.argsort(s, kind="stable")
    g = gcm(csd(y[order], w[order], s[order]))
    np.testing.assert_allclose(g.slopes(), pav_fit(s, y, w).values, rtol=0, atol=1e-12)


def test_hull_drops_collinear_and_keeps_convex():
    g = RocGraph(np.array([[0, 1], [0.5, 0.5], [1, 0]], dtype=float), np.zeros((3, 2)))
    assert convex_hull_roc(g).points.tolist() == [[0, 1], [1, 0]]
    g = RocGraph(np.array([[0, 1], [0.5, 0.9], [1, 0]], dtype=float), np.zeros((3, 2)))
    assert len(convex_hull_roc(g)) == 3


@given(binary_problems(min_n=2, max_n=60, ties=True))
def test_pav_curve_is_hull_of_raw_curve(problem):
    s, y, w = problem
    assume(0 < y.sum() < y.size)
    labels = y.astype(int)
    hull = convex_hull_roc(sroc_curve(s, labels, w)).points
    cal = sroc_curve(pav_values(s, y, w), labels, w).points
    hull = hull[np.lexsort(np.round(hull, 9).T[::-1])]
    cal = cal[np.lexsort(np.round(cal, 9).T[::-1])]
    assert hull.shape == cal.shape
    np.testing.assert_allclose(hull, cal, rtol=0, atol=1e-12)


def test_barycenter_separates_noiseless_data():
    ds = synth_simplex(300, 3, 0.0, 2)
    g = roc_surface(ds.P, ds.y, [[1 / 3] * 3])
    assert g.points.tolist() == [[1.0, 1.0, 1.0]]
    g = roc_surface(ds.P, ds.y, [[-1, 1, 1]])
    assert g.points.tolist() == [[1.0, 0.0, 0.0]]


@given(binary_problems(min_n=2, max_n=30, ties=True))
def test_surface_reduces_to_sroc_for_two_classes(problem):
    s, y, w = problem
    assume(0 < y.sum() < y.size)
    labels = y.astype(int)
    t = np.r_[-1.0, np.unique(s)]
    surf = roc_surface(np.column_stack([1 - s, s]), labels, np.column_stack([1 - t, t]), w)
    assert _same_points(surf.points, sroc_curve(s, labels, w).points)


def test_lattice_enumeration():
    G = lattice_thresholds(2, 0.5)
    np.testing.assert_allclose(np.sort(G[:, 1]), [-1, -0.5, 0, 0.5, 1, 1.5, 2])
    G3 = {tuple(r) for r in lattice_thresholds(3, 1.0)}
    brute = {(a, b, 1 - a - b) for a in (-1, 0, 1, 2) for b in (-1, 0, 1, 2) if -1 <= 1 - a - b <= 2}
    assert G3 == {tuple(map(float, r)) for r in brute}
    assert (-1.0, 1.0, 1.0) in G3 and (0.0, 0.0, 1.0) in G3


def test_grid_cap_is_enforced():
    ds = synth_simplex(20, 4, 0.1, 0)
    with pytest.raises(ValueError, match="cap"):
        default_threshold_grid(ds, lattice_step=0.001)
    G = default_threshold_grid(Dataset(np.array([[0.3, 0.7], [0.9, 0.1]]), [0, 1]), 0.5)
    assert G.shape[0] == 9


def test_vus_trivial_cases():
    assert vus(RocGraph(np.ones((1, 3)), np.zeros((1, 3))), 1000) == 1.0
    corners = np.vstack([np.zeros(3), np.eye(3)])
    assert vus(RocGraph(corners, np.zeros((4, 3))), 10_000) == 0.0
    with pytest.raises(ValueError):
        vus(RocGraph(np.ones((1, 2)), np.zeros((1, 2))), 0)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_vus_agrees_with_exact_volume(seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((6, 3))
    v, se = vus_with_error(pts, 40_000, seed)
    assert abs(v - exact_dominated_volume(pts)) <= 5 * se + 1e-3


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_vus_monotone_in_point_set(seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((8, 3))
    extra = np.vstack([pts, rng.random((3, 3))])
    assert vus(extra, 5000, 1) >= vus(pts, 5000, 1)


def test_pareto_front_removes_dominated():
    pts = np.array([[0.5, 0.5], [0.4, 0.4], [0.5, 0.5], [0.9, 0.1]])
    assert {tuple(p) for p in pareto_front(pts)} == {(0.5, 0.5), (0.9, 0.1)}


@given(st.integers(0, 10_000))
def test_identity_map_is_monotone(seed):
    ds = synth_simplex(30, 3, 0.3, seed)
    assert is_roc_monotone(ds.P, ds.P, ds.P[:10])


@given(binary_problems(min_n=2, max_n=30, ties=False))
def test_pav_output_is_monotone_on_data_thresholds(problem):
    s, y, w = problem
    P = np.column_stack([1 - s, s])
    r = pav_values(s, y, w)
    assert is_roc_monotone(P, np.column_stack([1 - r, r]), P)


def test_order_reversing_map_is_not_monotone():
    s = np.array([0.1, 0.2, 0.8, 0.9])
    P = np.column_stack([1 - s, s])
    R = P[:, ::-1]
    assert not is_roc_monotone(P, R, [[0.5, 0.5]])
    with pytest.raises(ValueError):
        is_roc_monotone(P, R, [[1 / 3] * 3])


def test_tied_scores_cut_diagonal_segments_in_half():
    rng = np.random.default_rng(3)
    s = np.round(rng.random(200), 1)
    y = (rng.random(200) < s).astype(int)
    g = sroc_curve(s, y)
    p = g.points[np.argsort(g.points[:, 0])]
    step = np.diff(p, axis=0)
    staircase = auc(g) - 0.5 * np.abs(step[:, 0] * step[:, 1]).sum()
    v, se = vus_with_error(g, 100_000, 0)
    assert abs(v - staircase) <= 5 * se
    assert auc(g) - v > 10 * se
