from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import parallel_triangles, regular_tetra
from meshsep import _fast
from meshsep.kernel import add, exact, point
from meshsep.mesh import build_mesh
from meshsep.octree import Octree
from meshsep.proximity import (
    all_feature_pairs, build_octree, close_pairs, index_insert, index_remove, pairs_near,
)
from meshsep.synthetic import SyntheticSpec, generate_synthetic, icosphere
from oracles import all_feature_d2, close_feature_keys


def _keys(pairs):
    return sorted(("vt" if fp.A.kind == "vertex" else "ee", fp.A.ids, fp.B.ids) for fp in pairs)


def _oracle_keys(m, t2):
    d = all_feature_d2(m.points, list(m.tris.values()))
    return sorted(k for k, v in d.items() if v < t2)


# -- octree ------------------------------------------------------------------

def test_single_triangle_root_only():
    m = build_mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    idx = build_octree(m)
    assert idx.root.children is None and idx.depth() == 0


def test_sphere_query_superset():
    P, F = icosphere(5)
    m = build_mesh([tuple(float(c) for c in p) for p in P], F, check=False)
    assert 10 ** 4 <= m.n_triangles <= 3 * 10 ** 4
    idx = build_octree(m)
    tids, lo, hi = m.tri_boxes()
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = rng.uniform(-1, 1, 3)
        r = rng.uniform(0.01, 0.3)
        qlo, qhi = c - r, c + r
        inside = set(tids[np.all(lo >= qlo, axis=1) & np.all(hi <= qhi, axis=1)].tolist())
        got = set(idx.query(qlo, qhi))
        assert inside <= got
        for t in got:
            blo, bhi = idx.boxes[t]
            assert np.all(np.array(blo) <= qhi) and np.all(np.array(bhi) >= qlo)


def test_depth_capped_on_stacked_boxes():
    n = 200
    lo = np.zeros((n, 3))
    hi = np.full((n, 3), 1e-9)
    tree = Octree.from_boxes(np.arange(n), lo, hi, max_leaf=4, max_depth=6)
    assert tree.depth() <= 6
    assert set(tree.query([0, 0, 0], [1, 1, 1])) == set(range(n))


def test_every_id_in_every_overlapping_leaf():
    rng = np.random.default_rng(1)
    lo = rng.uniform(0, 10, (300, 3))
    hi = lo + rng.uniform(0, 1.5, (300, 3))
    tree = Octree.from_boxes(np.arange(300), lo, hi, max_leaf=8)
    for leaf in tree.leaves():
        nlo, nhi = np.array(leaf.lo), np.array(leaf.hi)
        over = np.all(lo <= nhi, axis=1) & np.all(hi >= nlo, axis=1)
        assert set(np.nonzero(over)[0].tolist()) == leaf.items


def test_pairs_near_radius_zero():
    m = parallel_triangles(Fraction(1, 10))
    idx = build_octree(m)
    assert pairs_near(idx, (0.5, 0.5, 0.0), (0.5, 0.5, 0.0)) == [0]
    assert pairs_near(idx, (50, 50, 50), (51, 51, 51), 1.0) == []


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6), st.floats(0, 2))
def test_pairs_near_superset(seed, radius):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 10, (60, 3))
    hi = lo + rng.uniform(0, 1, (60, 3))
    tree = Octree.from_boxes(np.arange(60), lo, hi, max_leaf=4)
    c = rng.uniform(0, 10, 3)
    got = set(pairs_near(tree, c, c, radius))
    gap = np.maximum(np.maximum(lo - c, c - hi), 0)
    truth = set(np.nonzero(np.all(gap <= radius, axis=1))[0].tolist())
    assert truth <= got


def test_incremental_updates_match_rebuild():
    m, _ = generate_synthetic(SyntheticSpec("planted-pairs", size=1500, seed=2))
    idx = build_octree(m)
    rng = np.random.default_rng(3)
    verts = sorted(m.points)
    for v in rng.choice(verts, 40, replace=False).tolist():
        touched = sorted(m.vtris[v])
        index_remove(idx, touched)
        m.move_vertex(v, add(m.points[v], point(*(exact(float(x)) for x in rng.normal(0, 0.05, 3)))))
        index_insert(idx, m, touched)
    fresh = build_octree(m)
    tids, lo, hi = m.tri_boxes()
    for k in range(0, len(tids), 97):
        assert sorted(idx.query(lo[k], hi[k])) == sorted(fresh.query(lo[k], hi[k]))


# -- close_pairs -------------------------------------------------------------

def test_parallel_far_apart_is_empty():
    T = Fraction(1, 100)
    assert close_pairs(parallel_triangles(3 * T), None, threshold2=T * T) == []


def test_parallel_half_threshold_matches_enumeration():
    T = Fraction(1, 100)
    m = parallel_triangles(T / 2, shift=(Fraction(1, 5), Fraction(1, 7)))
    got = close_pairs(m, None, threshold2=T * T)
    assert _keys(got) == _oracle_keys(m, T * T)
    assert any(fp.A.kind == "vertex" for fp in got)


def test_tetra_opposite_edges_only():
    m = regular_tetra()            # edge length 2*sqrt(2)
    t2 = exact(Fraction(64, 100)) * 8
    got = close_pairs(m, None, threshold2=t2)
    assert len(got) == 3
    assert all(fp.A.kind == "edge" and fp.dist2 == 4 for fp in got)


def test_returned_pairs_are_exact_and_disjoint():
    m, _ = generate_synthetic(SyntheticSpec("sliver-band", size=800, seed=4))
    t2 = exact(1e-3) ** 2
    for fp in close_pairs(m, None, threshold2=t2):
        assert fp.A.disjoint(fp.B)
        assert fp.dist2 < t2
        r = [b - a for a, b in zip(fp.p, fp.q)]
        assert sum(x * x for x in r) == fp.dist2


def _clustered_soup(rng, n=40):
    pts, tris = [], []
    for _ in range(n):
        base = rng.uniform(-2, 2, 3)
        k = len(pts)
        # coordinates on a 1/16 grid keep the rational oracle fast
        pts += [tuple(Fraction(round(16 * x), 16) for x in base + rng.normal(0, 0.6, 3)) for _ in range(3)]
        a, b, c = (np.array([float(x) for x in p]) for p in pts[k:])
        if np.any(np.cross(b - a, c - a)):
            tris.append((k, k + 1, k + 2))
    # stitch some shared edges in so adjacency filtering is exercised
    for i in range(0, len(tris) - 1, 4):
        a, b, _ = tris[i]
        c = tris[i + 1][2]
        p, q, r = (np.array([float(x) for x in pts[v]]) for v in (a, b, c))
        if np.any(np.cross(q - p, r - p)):
            tris.append((a, b, c))
    return pts, tris


def test_no_false_negatives_against_all_pairs():
    rng = np.random.default_rng(5)
    trials = 0
    while trials < 50:
        pts, tris = _clustered_soup(rng, 12 + trials % 16)
        m = build_mesh(pts, tris)
        t2 = Fraction(int(rng.integers(1, 40)), 64) ** 2
        d = close_feature_keys(m.points, list(m.tris.values()), t2)
        if d and min(d.values()) == 0:
            continue        # touching soups have no closest-point frame
        trials += 1
        got = close_pairs(m, None, threshold2=t2)
        assert _keys(got) == sorted(d)


def test_whole_mesh_and_restricted_paths_agree():
    for kind in ("planted-pairs", "tetra-soup", "sliver-band"):
        m, _ = generate_synthetic(SyntheticSpec(kind, size=600, seed=6))
        idx = build_octree(m)
        for th in (1e-6, 3.5e-6, 1e-2):
            a = close_pairs(m, idx, th)
            b = close_pairs(m, idx, th, tids=list(m.tris))
            assert _keys(a) == _keys(b)


def test_inclusive_threshold():
    h = Fraction(1, 64)
    m = parallel_triangles(h)
    assert close_pairs(m, None, threshold2=h * h) == []
    assert len(close_pairs(m, None, threshold2=h * h, inclusive=True)) > 0


def test_brute_force_helper_agrees(tetra):
    assert _keys(all_feature_pairs(tetra, exact(2))) == _oracle_keys(tetra, 2)


# -- float helpers -----------------------------------------------------------

def test_box_pairs_brute_force():
    rng = np.random.default_rng(8)
    lo = rng.uniform(0, 5, (200, 3))
    hi = lo + rng.uniform(0, 0.7, (200, 3))
    got = {tuple(r) for r in _fast.box_pairs(lo, hi, 0.1).tolist()}
    truth = set()
    for i in range(200):
        for j in range(i + 1, 200):
            if np.all(lo[i] <= hi[j] + 0.1) and np.all(lo[j] <= hi[i] + 0.1):
                truth.add((i, j))
    assert truth <= got
    assert all(i < j for i, j in got)


def test_point_box_pairs_brute_force():
    rng = np.random.default_rng(9)
    pts = rng.uniform(0, 5, (300, 3))
    lo = rng.uniform(0, 5, (100, 3))
    hi = lo + rng.uniform(0, 1, (100, 3))
    got = {tuple(r) for r in _fast.point_box_pairs(pts, lo, hi, 0.05).tolist()}
    inside = (pts[:, None, :] >= lo[None] - 0.05) & (pts[:, None, :] <= hi[None] + 0.05)
    truth = {tuple(r) for r in np.argwhere(inside.all(axis=2)).tolist()}
    assert truth <= got


@pytest.mark.parametrize("kind", ["vt", "ee"])
def test_float_lower_bound_is_safe(kind):
    from meshsep.kernel import Feature, feature_distance
    rng = np.random.default_rng(10)
    n = 300
    P = rng.normal(size=(n, 4, 3)) * rng.uniform(1e-3, 10, (n, 1, 1))
    if kind == "vt":
        A, B = [P[:, 0]], [P[:, 1], P[:, 2], P[:, 3]]
    else:
        A, B = [P[:, 0], P[:, 1]], [P[:, 2], P[:, 3]]
    lb = _fast.distance_lower_bound(A, B)
    for k in range(n):
        pos = {i: point(*P[k, i]) for i in range(4)}
        if kind == "vt":
            d2 = feature_distance(Feature.vertex(0), Feature.triangle(1, 2, 3), pos)[0]
        else:
            d2 = feature_distance(Feature.edge(0, 1), Feature.edge(2, 3), pos)[0]
        assert exact(float(lb[k])) ** 2 <= d2
