from fractions import Fraction

import pytest

from meshsep.mesh import certify_no_intersections
from meshsep.proximity import close_pairs
from meshsep.synthetic import KINDS, SyntheticSpec, generate_synthetic
from conftest import D
from oracles import close_feature_keys

D2 = Fraction(D) ** 2


def below_d(m):
    return [fp for fp in close_pairs(m, threshold=D) if fp.dist2 < D2]


def test_planted_pairs_oracle():
    m, truth = generate_synthetic(SyntheticSpec("planted-pairs", size=200, k=10, seed=1))
    tris = [m.tris[t] for t in sorted(m.tris)]
    keys = close_feature_keys(dict(m.points), tris, D2)
    assert len(keys) == 10 == truth["count"]
    assert all(k[0] == "vt" for k in keys)
    assert {(k[1][0], k[2]) for k in keys} == {(r["vertex"], tuple(sorted(r["triangle"])))
                                               for r in truth["pairs"]}
    # pairwise disjoint features
    used = [set(k[1]) | set(k[2]) for k in keys]
    assert all(not (a & b) for i, a in enumerate(used) for b in used[i + 1:])


@pytest.mark.parametrize("kind", ["planted-pairs", "tetra-soup", "high-precision"])
def test_truth_matches_proximity(kind):
    m, truth = generate_synthetic(SyntheticSpec(kind, size=2000, k=10, seed=3))
    assert len(below_d(m)) == truth["count"] == 10
    assert certify_no_intersections(m)


def test_high_precision_bits():
    m, truth = generate_synthetic(SyntheticSpec("high-precision", size=300, seed=0))
    assert max(c.denominator.bit_length() for p in m.points.values() for c in p) >= 600
    assert truth["bits"] == 600


def test_parallel_sheets_gap():
    m, _ = generate_synthetic(SyntheticSpec("parallel-sheets", size=200, gap=0.5))
    assert min(fp.dist2 for fp in close_pairs(m, threshold=D)) == D2 / 4


def test_sliver_band_truth():
    m, truth = generate_synthetic(SyntheticSpec("sliver-band", size=1000, k=6, seed=2))
    from meshsep.modify import find_short_edges, find_skinny_triangles
    short = {tuple(sorted(e)) for e, _ in find_short_edges(m, D)}
    assert short == {tuple(sorted(r["edge"])) for r in truth["short_edges"]}
    apexes = {f[2] for f in find_skinny_triangles(m, D)}
    assert {r["apex"] for r in truth["skinny"]} <= apexes


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic(kind):
    a, ta = generate_synthetic(SyntheticSpec(kind, size=300, seed=5))
    b, tb = generate_synthetic(SyntheticSpec(kind, size=300, seed=5))
    assert a.points == b.points and a.tris == b.tris and ta == tb


def test_bad_kind():
    with pytest.raises(ValueError):
        SyntheticSpec("blob")
