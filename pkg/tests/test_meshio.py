import struct
from fractions import Fraction

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from meshsep.errors import ParseError, PrecisionLoss, UnsupportedFormat
from meshsep.meshio import (
    annotate_close_features, read_annotated, read_mesh, read_mesh_data, write_mesh,
)
from meshsep.mesh import build_mesh
from meshsep.proximity import close_pairs
from meshsep.synthetic import SyntheticSpec, generate_synthetic
from conftest import D, TETRA_TRIS
from oracles import close_feature_keys

OFF_TETRA = """OFF
# a comment
4 4 0
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
"""


def test_off_tetra(tmp_path):
    p = tmp_path / "t.off"
    p.write_text(OFF_TETRA)
    m = read_mesh(p)
    assert m.n_vertices == 4 and m.n_triangles == 4
    assert m.points[3] == (0, 0, 1)


def test_obj_quads_fan(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n")
    pts, tris, _ = read_mesh_data(p)
    assert tris == [(0, 1, 2), (0, 2, 3)]


def test_xmesh_800_bit_round_trip(tmp_path):
    x = mpq(3 ** 500, 2 ** 800)
    assert x.denominator.bit_length() == 801
    m = build_mesh([(x, 0, 0), (1, -x, 0), (0, 1, x)], [(0, 1, 2)])
    p = tmp_path / "m.xmesh"
    write_mesh(m, p)
    text = p.read_text()
    back = read_mesh(p)
    assert back.points == m.points and back.tris == m.tris
    write_mesh(back, tmp_path / "n.xmesh")
    assert (tmp_path / "n.xmesh").read_text() == text


@settings(max_examples=40)
@given(st.lists(st.fractions(), min_size=9, max_size=9))
def test_xmesh_lossless(tmp_path_factory, coords):
    pts = [tuple(coords[3 * i:3 * i + 3]) for i in range(3)]
    try:
        m = build_mesh(pts, [(0, 1, 2)])
    except ValueError:
        return
    p = tmp_path_factory.mktemp("x") / "m.xmesh"
    write_mesh(m, p)
    assert read_mesh(p).points == m.points


def test_malformed_index_names_line(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text(OFF_TETRA.replace("3 0 1 3", "3 0 1 9"))
    with pytest.raises(ParseError) as ei:
        read_mesh(p)
    assert ei.value.line == 9
    assert "line 9" in str(ei.value)


def test_bad_token_column(tmp_path):
    p = tmp_path / "bad.xmesh"
    p.write_text("xmesh 3 1\n0 0 0\n1 x/2 0\n0 1 0\n0 1 2\n")
    with pytest.raises(ParseError) as ei:
        read_mesh(p)
    assert (ei.value.line, ei.value.column) == (3, 3)


def test_truncated(tmp_path):
    p = tmp_path / "short.off"
    p.write_text("OFF\n4 4 0\n0 0 0\n")
    with pytest.raises(ParseError):
        read_mesh(p)


def test_unsupported_format(tmp_path):
    with pytest.raises(UnsupportedFormat):
        read_mesh(tmp_path / "m.stl")


@pytest.mark.parametrize("binary", [False, True])
def test_ply_bit_identical(tmp_path, binary):
    rng = np.random.default_rng(0)
    pts = [tuple(float(c) for c in rng.normal(size=3)) for _ in range(4)]
    m = build_mesh(pts, TETRA_TRIS)
    p = tmp_path / "m.ply"
    write_mesh(m, p, binary=binary)
    back = read_mesh(p)
    for v in m.points:
        got = [struct.pack("<d", float(c)) for c in back.points[v]]
        assert got == [struct.pack("<d", float(c)) for c in m.points[v]]
        assert back.points[v] == m.points[v]


@pytest.mark.parametrize("fmt", ["off", "obj", "ply"])
def test_precision_loss(tmp_path, fmt):
    m = build_mesh([(Fraction(1, 3), 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    with pytest.raises(PrecisionLoss):
        write_mesh(m, tmp_path / f"m.{fmt}")
    write_mesh(m, tmp_path / f"m.{fmt}", lossy=True)
    assert read_mesh(tmp_path / f"m.{fmt}").points[0][0] == mpq(1 / 3)


def test_no_pairs_no_flags(tetra):
    assert annotate_close_features(tetra, []) == set()


def test_vertex_triangle_flags():
    h = Fraction(1, 2) * Fraction(D)
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (Fraction(1, 4), Fraction(1, 4), h),
           (0, 0, 1), (1, 1, 1), (-1, 1, 1)]
    m = build_mesh(pts, [(0, 1, 2), (3, 4, 5), (3, 5, 6), (4, 5, 6)])
    pairs = [fp for fp in close_pairs(m, threshold=D) if fp.dist2 < Fraction(D) ** 2]
    assert len(pairs) == 1
    assert annotate_close_features(m, pairs) == {0, 1, 2}


def _flag_oracle(tris, keys):
    flagged = set()
    for kind, a, b in keys:
        for feat in (a, b):
            flagged |= {t for t, tri in enumerate(tris) if set(feat) <= set(tri)}
    return flagged


@pytest.mark.parametrize("fmt", ["off", "obj", "ply", "xmesh"])
def test_flag_count_and_round_trip(tmp_path, fmt):
    m, _ = generate_synthetic(SyntheticSpec("planted-pairs", size=120, k=3, seed=2))
    pairs = [fp for fp in close_pairs(m, threshold=D) if fp.dist2 < Fraction(D) ** 2]
    flags = annotate_close_features(m, pairs)
    pts = {v: p for v, p in m.points.items()}
    tris = [m.tris[t] for t in sorted(m.tris)]
    keys = close_feature_keys(pts, tris, Fraction(D) ** 2)
    assert {sorted(m.tris)[t] for t in _flag_oracle(tris, keys)} == flags
    p = tmp_path / f"m.{fmt}"
    write_mesh(m, p, flags=flags, lossy=True)
    back, got = read_annotated(p)
    order = sorted(m.tris)
    assert {order.index(t) for t in flags} == got
