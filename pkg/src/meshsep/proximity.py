"""Close feature pairs: octree candidates, float prefilter, exact distances."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _fast
from .kernel import Feature, Frame, closest_frame, exact, feature_distance
from .mesh import Mesh, build_index
from .octree import Octree, inflate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeaturePair:
    """Disjoint vertex-triangle or edge-edge pair with exact closest points.

    ``dist2`` is the exact squared distance.  Vertex-triangle pairs always
    put the vertex in ``A``; edge-edge pairs order the edges by id.
    """
    A: Feature
    B: Feature
    dist2: object
    p: tuple
    q: tuple
    frame: Frame

    @property
    def dist(self) -> float:
        return math.sqrt(float(self.dist2))

    @property
    def key(self):
        return (self.A.ids, self.B.ids)


def build_octree(m: Mesh, max_leaf=16, max_depth=20) -> Octree:
    return build_index(m, max_leaf=max_leaf, max_depth=max_depth)


def index_remove(index: Octree, tids):
    for t in tids:
        index.remove(t)


def index_insert(index: Octree, m: Mesh, tids):
    for t in tids:
        lo, hi = m.tri_box(t)
        index.insert(t, lo, hi)


def pairs_near(index: Octree, lo, hi, radius=0.0):
    """Triangle ids whose boxes come within ``radius`` of the box [lo, hi]."""
    r = np.nextafter(float(radius), np.inf)
    lo = np.nextafter(np.asarray(lo, dtype=float) - r, -np.inf)
    hi = np.nextafter(np.asarray(hi, dtype=float) + r, np.inf)
    return sorted(index.query(lo, hi))


def make_pair(A: Feature, B: Feature, positions) -> FeaturePair:
    d2, p, q = feature_distance(A, B, positions)
    return FeaturePair(A, B, d2, p, q, closest_frame(p, q))


# ---------------------------------------------------------------------------
# sub-pair enumeration

_EDGES = ((0, 1), (1, 2), (2, 0))


def unique_rows(R):
    """Sorted distinct rows of an integer matrix."""
    if len(R) == 0:
        return R
    order = np.lexsort(R.T[::-1])
    R = R[order]
    keep = np.ones(len(R), dtype=bool)
    keep[1:] = np.any(R[1:] != R[:-1], axis=1)
    return R[keep]


def _subpairs(TA, TB, unique=True):
    """Disjoint canonical sub-pairs between triangle rows TA and TB.

    Returns (vt, ee): vt rows are (v, t0, t1, t2) with sorted triangle ids,
    ee rows are (e0, e1, f0, f1) with each edge sorted and (e0, e1) < (f0, f1).
    With ``unique`` False, rows shared by several triangle pairs repeat.
    """
    vt = []
    for X, Y in ((TA, TB), (TB, TA)):
        for k in range(3):
            v = X[:, k]
            ok = (v != Y[:, 0]) & (v != Y[:, 1]) & (v != Y[:, 2])
            vt.append(np.column_stack([v[ok], np.sort(Y[ok], axis=1)]))
    ee = []
    for i, j in _EDGES:
        e = np.sort(np.column_stack([TA[:, i], TA[:, j]]), axis=1)
        for k, l in _EDGES:
            f = np.sort(np.column_stack([TB[:, k], TB[:, l]]), axis=1)
            ok = ((e[:, 0] != f[:, 0]) & (e[:, 0] != f[:, 1])
                  & (e[:, 1] != f[:, 0]) & (e[:, 1] != f[:, 1]))
            e2, f2 = e[ok], f[ok]
            swap = (f2[:, 0] < e2[:, 0]) | ((f2[:, 0] == e2[:, 0]) & (f2[:, 1] < e2[:, 1]))
            lo = np.where(swap[:, None], f2, e2)
            hi = np.where(swap[:, None], e2, f2)
            ee.append(np.column_stack([lo, hi]))
    vt = np.concatenate(vt).reshape(-1, 4)
    ee = np.concatenate(ee).reshape(-1, 4)
    if unique:
        vt, ee = unique_rows(vt), unique_rows(ee)
    return vt, ee


def _lower_bounds(coords, vt, ee, cutoff=None):
    lb_vt = np.zeros(0)
    lb_ee = np.zeros(0)
    if len(vt):
        lb_vt = _fast.distance_lower_bound([coords[vt[:, 0]]],
                                           [coords[vt[:, 1]], coords[vt[:, 2]], coords[vt[:, 3]]],
                                           cutoff)
    if len(ee):
        lb_ee = _fast.distance_lower_bound([coords[ee[:, 0]], coords[ee[:, 1]]],
                                           [coords[ee[:, 2]], coords[ee[:, 3]]], cutoff)
    return lb_vt, lb_ee


def _rows_to_pairs(m, rows, kind, keep):
    out = []
    pos = m.points
    for r in rows[keep].tolist():
        if kind == "vt":
            A, B = Feature.vertex(r[0]), Feature.triangle(r[1], r[2], r[3])
        else:
            A, B = Feature.edge(r[0], r[1]), Feature.edge(r[2], r[3])
        out.append((A, B, feature_distance(A, B, pos)))
    return out


def _threshold(threshold, threshold2):
    if threshold2 is None:
        t = exact(threshold)
        threshold2 = t * t
    else:
        threshold2 = exact(threshold2)
    tf = math.sqrt(float(threshold2))
    return threshold2, math.nextafter(tf * (1 + 1e-12), math.inf)


def _mesh_rows(m: Mesh, pad):
    """Whole-mesh disjoint candidate rows from vertex-in-box and edge-box overlaps."""
    coords, _, tv = m.arrays()
    if len(tv) == 0:
        return np.zeros((0, 4), np.int64), np.zeros((0, 4), np.int64)
    _, lo, hi = m.tri_boxes()
    used = np.unique(tv)
    pb = _fast.point_box_pairs(coords[used], lo, hi, pad)
    v, T = used[pb[:, 0]], tv[pb[:, 1]]
    ok = (v != T[:, 0]) & (v != T[:, 1]) & (v != T[:, 2])
    vt = np.column_stack([v[ok], np.sort(T[ok], axis=1)])
    E = np.array(sorted(m.edges), dtype=np.int64).reshape(-1, 2)
    a, b = coords[E[:, 0]], coords[E[:, 1]]
    elo, ehi = inflate(np.minimum(a, b), np.maximum(a, b))
    ep = _fast.box_pairs(elo, ehi, pad)
    e, f = E[ep[:, 0]], E[ep[:, 1]]
    ok = (e[:, 0] != f[:, 0]) & (e[:, 0] != f[:, 1]) & (e[:, 1] != f[:, 0]) & (e[:, 1] != f[:, 1])
    ee = np.column_stack([e[ok], f[ok]])
    return unique_rows(vt), unique_rows(ee)


def candidate_triangle_pairs(m: Mesh, index: Octree, pad: float, tids=None):
    if tids is None:
        ids, lo, hi = m.tri_boxes()
        return [tuple(r) for r in ids[_fast.box_pairs(lo, hi, pad)].tolist()]
    out = set()
    source = m.tris if tids is None else [t for t in tids if t in m.tris]
    for t in source:
        lo, hi = index.boxes[t] if t in index.boxes else m.tri_box(t)
        lo = [x - pad for x in lo]
        hi = [x + pad for x in hi]
        for s in index.query(lo, hi):
            if s != t and s in m.tris:
                out.add((t, s) if t < s else (s, t))
    return sorted(out)


def close_pairs(m: Mesh, index: Octree = None, threshold=None, *, threshold2=None,
                inclusive=False, tids=None, skip_touching=False):
    """Every disjoint vertex-triangle / edge-edge pair closer than the threshold.

    Pass either ``threshold`` (a length) or ``threshold2`` (its exact square).
    ``tids`` restricts the search to pairs involving those triangles.  Results
    are deduplicated and sorted by feature ids.  Touching pairs have no frame
    and raise CoincidentPoints unless ``skip_touching`` drops them.
    """
    t2, tf = _threshold(threshold, threshold2)
    coords = m.arrays()[0]
    if tids is None:
        vt, ee = _mesh_rows(m, tf)
        lb_vt, lb_ee = _lower_bounds(coords, vt, ee, tf)
        vt, ee = vt[lb_vt <= tf], ee[lb_ee <= tf]
    else:
        if index is None:
            index = build_octree(m)
        tri_pairs = candidate_triangle_pairs(m, index, tf, tids)
        if not tri_pairs:
            return []
        P = np.array(tri_pairs, dtype=np.int64)
        TA = np.array([m.tris[t] for t in P[:, 0].tolist()], dtype=np.int64)
        TB = np.array([m.tris[t] for t in P[:, 1].tolist()], dtype=np.int64)
        vt, ee = _subpairs(TA, TB, unique=False)
        lb_vt, lb_ee = _lower_bounds(coords, vt, ee, tf)
        vt, ee = unique_rows(vt[lb_vt <= tf]), unique_rows(ee[lb_ee <= tf])
    found = (_rows_to_pairs(m, vt, "vt", slice(None))
             + _rows_to_pairs(m, ee, "ee", slice(None)))
    out = []
    for A, B, (d2, p, q) in found:
        if d2 == 0 and skip_touching:
            continue
        if d2 < t2 or (inclusive and d2 == t2):
            out.append(FeaturePair(A, B, d2, p, q, closest_frame(p, q)))
    out.sort(key=lambda fp: (fp.A.kind != "vertex", fp.key))
    return out


# ---------------------------------------------------------------------------
# exhaustive scans (small meshes, tests and certification)

def _all_rows(m: Mesh):
    tris = np.array([sorted(t) for t in m.tris.values()], dtype=np.int64).reshape(-1, 3)
    verts = np.array(sorted(m.used_vertices()), dtype=np.int64)
    vt = np.column_stack([np.repeat(verts, len(tris)), np.tile(tris, (len(verts), 1))])
    ok = (vt[:, 0] != vt[:, 1]) & (vt[:, 0] != vt[:, 2]) & (vt[:, 0] != vt[:, 3])
    vt = vt[ok]
    edges = np.array(sorted(m.edges), dtype=np.int64).reshape(-1, 2)
    i, j = np.triu_indices(len(edges), k=1)
    ee = np.column_stack([edges[i], edges[j]])
    ok = ((ee[:, 0] != ee[:, 2]) & (ee[:, 0] != ee[:, 3])
          & (ee[:, 1] != ee[:, 2]) & (ee[:, 1] != ee[:, 3]))
    return vt, ee[ok]


def all_feature_pairs(m: Mesh, threshold2=None):
    """Brute force: every disjoint pair (optionally only those with dist2 < threshold2)."""
    vt, ee = _all_rows(m)
    everything = np.ones(len(vt), bool), np.ones(len(ee), bool)
    found = _rows_to_pairs(m, vt, "vt", everything[0]) + _rows_to_pairs(m, ee, "ee", everything[1])
    out = []
    for A, B, (d2, p, q) in found:
        if threshold2 is None or d2 < threshold2:
            out.append(FeaturePair(A, B, d2, p, q, closest_frame(p, q)))
    return out


def exhaustive_min_separation(m: Mesh):
    """Exact minimum squared distance over all disjoint pairs.

    Every pair is considered; exact evaluation is skipped only for pairs whose
    certified float lower bound already exceeds the best exact value found.
    """
    vt, ee = _all_rows(m)
    coords = m.arrays()[0]
    lb_vt, lb_ee = _lower_bounds(coords, vt, ee)
    rows = [("vt", r, b) for r, b in zip(vt.tolist(), lb_vt.tolist())]
    rows += [("ee", r, b) for r, b in zip(ee.tolist(), lb_ee.tolist())]
    rows.sort(key=lambda x: x[2])
    best = math.inf
    best_f = math.inf
    for kind, r, lb in rows:
        if lb * lb > best_f * (1 + 1e-9) + 1e-300:
            break
        if kind == "vt":
            A, B = Feature.vertex(r[0]), Feature.triangle(*r[1:])
        else:
            A, B = Feature.edge(r[0], r[1]), Feature.edge(r[2], r[3])
        d2 = feature_distance(A, B, m.points)[0]
        if d2 < best:
            best = d2
            best_f = float(d2)
    return best
