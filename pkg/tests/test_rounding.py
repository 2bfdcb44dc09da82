import math
import struct
from fractions import Fraction

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, settings, strategies as st

from meshsep.errors import ConfigError, InsufficientSeparation
from meshsep.kernel import norm2, sub
from meshsep.mesh import build_mesh, certify_no_intersections, topology_signature
from meshsep.proximity import exhaustive_min_separation
from meshsep.rounding import EPS, geometric_round, is_binary64, rounding_budget, snap
from meshsep.synthetic import SyntheticSpec, generate_synthetic
from conftest import D, TETRA_POINTS, TETRA_TRIS, parallel_triangles

SQRT3_EPS = 1.9229626863835638e-16   # sqrt(3) * 2**-53, to double precision


def bits(x):
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def tiny_rational(rng, nbits=800):
    den = (int(rng.integers(1, 2 ** 62)) << (nbits - 61)) | 1
    return mpq(int(rng.integers(-2 ** 40, 2 ** 40)), 2 ** 40) * mpq(den >> 1, den)


def test_budget_unit():
    b = rounding_budget(build_mesh(TETRA_POINTS, TETRA_TRIS))
    assert b.M == 1 and b.eps == mpq(1, 2 ** 53)
    assert b.e == pytest.approx(SQRT3_EPS, rel=1e-15)
    # outward rounding: e is an upper bound, and tight to one ulp
    assert mpq(b.e) ** 2 >= b.e2
    assert mpq(math.nextafter(b.e, 0)) ** 2 < b.e2


def test_budget_scales():
    big = build_mesh([tuple(c * 2 ** 20 for c in p) for p in TETRA_POINTS], TETRA_TRIS)
    one = build_mesh(TETRA_POINTS, TETRA_TRIS)
    assert rounding_budget(big).e == rounding_budget(one).e * 2 ** 20
    assert rounding_budget(big).e2 == rounding_budget(one).e2 * 2 ** 40


def test_budget_zero():
    m = build_mesh([(0, 0, 0)], [])
    b = rounding_budget(m)
    assert b.M == 0 and b.e == 0.0 and b.e2 == 0


def test_snap_one_third():
    third = Fraction(1, 3)
    m = build_mesh([(third, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
    out, worst = snap(m)
    x = out.points[0][0]
    assert bits(float(x)) == 0x3FD5555555555555
    assert abs(x - mpq(1, 3)) < EPS / 3
    assert worst == (x - mpq(1, 3)) ** 2


def test_snap_identity_on_binary64(tetra):
    out, worst = snap(tetra)
    assert worst == 0 and out.points == tetra.points


def test_snap_800_bit():
    rng = np.random.default_rng(0)
    pts = [tuple(mpq(c) + tiny_rational(rng) for c in p) for p in TETRA_POINTS]
    m = build_mesh(pts, TETRA_TRIS)
    assert max(c.denominator.bit_length() for p in m.points.values() for c in p) >= 790
    b = rounding_budget(m)
    out, worst = snap(m, b)
    assert is_binary64(out)
    for v in m.points:
        assert norm2(sub(out.points[v], m.points[v])) <= b.e2
    assert worst <= b.e2


def test_snap_refuses_close_features():
    m = parallel_triangles(Fraction(1, 2 ** 52))
    with pytest.raises(InsufficientSeparation):
        snap(m)


def _near_2e(rng):
    b2e = 2 * SQRT3_EPS * 1.0001
    m = parallel_triangles(Fraction(b2e) + Fraction(1, 2 ** 70),
                           shift=(Fraction(int(rng.integers(-8, 1)), 16), Fraction(int(rng.integers(-8, 1)), 16)))
    for v in list(m.points):
        m.move_vertex(v, tuple(c + tiny_rational(rng, 200) * mpq(1, 2 ** 80) for c in m.points[v]))
    return m


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32))
def test_snap_safe_near_2e(seed):
    m = _near_2e(np.random.default_rng(seed))
    b = rounding_budget(m)
    assert exhaustive_min_separation(m) > b.snap_threshold2
    out, _ = snap(m, b)
    assert is_binary64(out)
    assert certify_no_intersections(out)
    assert topology_signature(out).invariant() == topology_signature(m).invariant()


def test_geometric_round_identity_on_clean_mesh(tetra):
    out, reps, res = geometric_round(tetra, D)
    assert out.points == tetra.points and out.tris == tetra.tris
    assert reps[-1].stage == "snap" and reps[-1].max == 0.0


def test_geometric_round_high_precision():
    m, truth = generate_synthetic(SyntheticSpec("high-precision", size=400, seed=2, bits=800))
    sig = topology_signature(m).invariant()
    out, reps, res = geometric_round(m, D)
    assert res.separated
    assert is_binary64(out)
    assert certify_no_intersections(out)
    assert topology_signature(out).invariant() == sig
    # second run has nothing left to do
    again, reps2, _ = geometric_round(out, D)
    assert again.points == out.points and again.tris == out.tris


def test_geometric_round_rejects_tiny_d(tetra):
    e = rounding_budget(tetra).e
    with pytest.raises(ConfigError):
        geometric_round(tetra, e)
