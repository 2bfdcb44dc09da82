import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TETRA_POINTS, TETRA_TRIS, parallel_triangles, regular_tetra
from meshsep.errors import DegenerateTriangle, DuplicateTriangle, IndexOutOfRange
from meshsep.mesh import (
    build_index, build_mesh, certify_no_intersections, edge_key, intersecting_pairs,
    min_separation, topology_signature, vertex_star_boundary,
)
from meshsep.proximity import close_pairs
from oracles import all_feature_d2, intersecting_triangle_pairs

OCTA_POINTS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
OCTA_TRIS = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4), (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]


def test_single_triangle():
    m = build_mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    assert (m.n_vertices, m.n_edges, m.n_triangles) == (3, 3, 1)
    assert all(len(ts) == 1 for ts in m.edges.values())


def test_tetra_counts(tetra):
    assert (tetra.n_vertices, tetra.n_edges, tetra.n_triangles) == (4, 6, 4)
    assert all(len(ts) == 2 for ts in tetra.edges.values())


def test_two_tetra_sharing_a_face():
    pts = TETRA_POINTS + [(1, 1, 1)]
    tris = TETRA_TRIS + [(4, 2, 1), (4, 1, 3), (4, 3, 2)]
    m = build_mesh(pts, tris)
    shared = {edge_key(1, 2), edge_key(2, 3), edge_key(1, 3)}
    inc = {k: len(v) for k, v in m.edges.items()}
    assert all(inc[k] == 3 for k in shared)
    assert all(v == 2 for k, v in inc.items() if k not in shared)


@pytest.mark.parametrize("tris,err", [
    ([(0, 1, 7)], IndexOutOfRange),
    ([(0, 1, 1)], DegenerateTriangle),
    ([(0, 1, 2), (2, 0, 1)], DuplicateTriangle),
])
def test_build_errors(tris, err):
    with pytest.raises(err):
        build_mesh(TETRA_POINTS, tris)


def test_collinear_triangle_rejected():
    with pytest.raises(DegenerateTriangle):
        build_mesh([(0, 0, 0), (1, 1, 1), (2, 2, 2)], [(0, 1, 2)])


def test_signature_tetra(tetra):
    sig = topology_signature(tetra)
    assert sig.n_components == 1
    c = sig.components[0]
    assert (c.vertices, c.edges, c.triangles, c.euler, c.boundary_loops) == (4, 6, 4, 2, 0)


def test_signature_triangle():
    c = topology_signature(build_mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])).components[0]
    assert (c.euler, c.boundary_loops) == (1, 1)


def test_signature_two_tetra():
    pts = TETRA_POINTS + [(x + 5, y, z) for x, y, z in TETRA_POINTS]
    tris = TETRA_TRIS + [tuple(i + 4 for i in t) for t in TETRA_TRIS]
    sig = topology_signature(build_mesh(pts, tris))
    assert sig.n_components == 2
    assert [c.euler for c in sig.components] == [2, 2]


def test_star_octahedron_apex():
    m = build_mesh(OCTA_POINTS, OCTA_TRIS)
    loop = vertex_star_boundary(m, 4)
    assert sorted(loop) == [0, 1, 2, 3]
    for a, b in zip(loop, loop[1:] + loop[:1]):
        assert m.has_edge(a, b)


def test_star_single_triangle_is_empty():
    m = build_mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    assert vertex_star_boundary(m, 0) is None


def test_star_pinched_cones():
    # two closed cones (square pyramids with bases) joined at the apex 0
    pts = [(0, 0, 0), (1, 1, 1), (-1, 1, 1), (-1, -1, 1), (1, -1, 1),
           (1, 1, -1), (-1, 1, -1), (-1, -1, -1), (1, -1, -1)]
    tris = []
    for base in ((1, 2, 3, 4), (5, 6, 7, 8)):
        for i in range(4):
            tris.append((0, base[i], base[(i + 1) % 4]))
        tris += [(base[0], base[2], base[1]), (base[0], base[3], base[2])]
    m = build_mesh(pts, tris)
    assert vertex_star_boundary(m, 0) is None
    assert vertex_star_boundary(m, 1) is not None


def test_min_separation_regular_tetra():
    m = regular_tetra()
    L2 = 8
    d2 = min_separation(m, exhaustive=True)
    assert d2 == Fraction(L2, 2)          # edge / sqrt(2)
    assert d2 < Fraction(2 * L2, 3)       # vertex-face height sqrt(2/3) edge
    assert d2 == min(all_feature_d2(m.points, list(m.tris.values())).values())


def test_min_separation_parallel_triangles():
    h = Fraction(3, 7)
    assert min_separation(parallel_triangles(h), exhaustive=True) == h * h


def test_min_separation_sentinel(tetra):
    assert min_separation(tetra, pairs=close_pairs(tetra, None, 0.01)) == math.inf


def test_certify_tetra(tetra):
    assert certify_no_intersections(tetra)


def test_certify_interpenetrating_tetra():
    s = Fraction(1, 4)
    pts = TETRA_POINTS + [(x + s, y + s, z + s) for x, y, z in TETRA_POINTS]
    tris = TETRA_TRIS + [tuple(i + 4 for i in t) for t in TETRA_TRIS]
    m = build_mesh(pts, tris)
    assert not certify_no_intersections(m)
    assert intersecting_pairs(m) == intersecting_triangle_pairs(pts, tris)


def test_certify_folded_coplanar():
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (Fraction(1, 2), Fraction(1, 2), 0)]
    m = build_mesh(pts, [(0, 1, 2), (1, 0, 3)])
    assert not certify_no_intersections(m)


def _random_soup(rng, n):
    pts, tris = [], []
    for _ in range(n):
        base = rng.integers(-3, 4, size=3)
        while True:
            tri = [tuple(int(c) for c in base + rng.integers(-2, 3, size=3)) for _ in range(3)]
            a, b, c = (np.array(p) for p in tri)
            if np.any(np.cross(b - a, c - a)):
                break
        for p in tri:
            # reuse coincident points so soups contain shared vertices and edges
            if p in pts:
                continue
            pts.append(p)
        idx = tuple(pts.index(p) for p in tri)
        if len(set(idx)) == 3 and tuple(sorted(idx)) not in {tuple(sorted(t)) for t in tris}:
            tris.append(idx)
    return pts, tris


def test_intersecting_pairs_match_oracle_on_soups():
    rng = np.random.default_rng(11)
    for _ in range(15):
        pts, tris = _random_soup(rng, 25)
        m = build_mesh(pts, tris)
        assert intersecting_pairs(m) == intersecting_triangle_pairs(pts, tris)


def test_exhaustive_min_separation_matches_oracle():
    rng = np.random.default_rng(12)
    for _ in range(5):
        pts = [tuple(int(c) for c in rng.integers(-20, 21, size=3)) for _ in range(12)]
        tris = []
        for _ in range(20):
            t = tuple(sorted(int(i) for i in rng.choice(12, 3, replace=False)))
            a, b, c = (np.array(pts[i]) for i in t)
            if np.any(np.cross(b - a, c - a)) and t not in tris:
                tris.append(t)
        m = build_mesh(pts, tris)
        assert min_separation(m, exhaustive=True) == min(all_feature_d2(m.points, tris).values())


@settings(max_examples=40)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 10 ** 6)), min_size=1, max_size=30))
def test_adjacency_consistent_under_mutation(ops):
    m = build_mesh(TETRA_POINTS + [(2, 2, 2), (3, 0, 1)], TETRA_TRIS)
    for add, r in ops:
        if add or not m.tris:
            verts = sorted(m.points)
            t = tuple(verts[(r + k * 7) % len(verts)] for k in range(3))
            if len(set(t)) == 3 and not any(set(t) == set(s) for s in m.tris.values()):
                m.add_triangle(*t)
        else:
            m.remove_triangle(sorted(m.tris)[r % len(m.tris)])
        assert m.check_consistency()
    c = m.copy()
    assert c.check_consistency() and c.tris == m.tris


def test_index_covers_all_triangles(tetra):
    idx = build_index(tetra)
    lo, hi = tetra.tri_boxes()[1:]
    assert set(idx.query(lo.min(axis=0), hi.max(axis=0))) == set(tetra.tris)
