"""Modification stage: short-edge contraction, skinny-triangle flips, and
removal of small components."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .kernel import (EPS, exact, is_degenerate, norm2, sub, triangles_intersect,
                     vertex_edge_projection)
from .mesh import Mesh, edge_key, shared_pairs, triangle_components, vertex_star_boundary
from .octree import Octree, inflate
from .proximity import build_octree, close_pairs, index_insert, index_remove
from .report import StageReport, displacement_stats

log = logging.getLogger(__name__)


class Reason(enum.Enum):
    INCIDENCE = "incidence"
    LINK_CONDITION = "link-condition"
    EXISTING_EDGE = "existing-edge"
    STILL_SKINNY = "still-skinny"
    DEGENERATE = "degenerate"
    DUPLICATE = "duplicate"
    INTERSECTION = "intersection"


@dataclass(frozen=True)
class EditResult:
    applied: bool
    reason: Reason | None = None
    new_vertex: int | None = None
    new_triangles: tuple = ()

    def __bool__(self):
        return self.applied


APPLIED = EditResult(True)


def _rejected(reason):
    return EditResult(False, reason)


# ---------------------------------------------------------------------------
# detection

def find_short_edges(m: Mesh, d):
    """Edges with exact length < d as ((i, j), length^2), shortest first."""
    d2 = exact(d) ** 2
    out = []
    for (i, j) in m.edges:
        l2 = norm2(sub(m.points[j], m.points[i]))
        if l2 < d2:
            out.append(((i, j), l2))
    out.sort(key=lambda x: (x[1], x[0]))
    return out


def _skinny_apexes(pts, d2):
    """(base index k, height^2) for apexes of the triangle that are within d of the base."""
    out = []
    for k in range(3):
        v, t, h = pts[k], pts[(k + 1) % 3], pts[(k + 2) % 3]
        r = vertex_edge_projection(v, t, h)
        if r is not None and r[1] < d2:
            out.append((k, r[1]))
    return out


def is_skinny(pts, d) -> bool:
    return bool(_skinny_apexes(pts, exact(d) ** 2))


def find_skinny_triangles(m: Mesh, d, tids=None):
    """(tid, base edge (t, h), apex v, height^2) with interior projection and height < d."""
    d2 = exact(d) ** 2
    coords = m.arrays()[0]
    ids = sorted(m.tris) if tids is None else sorted(t for t in tids if t in m.tris)
    if not ids:
        return []
    # float prefilter: a triangle with every altitude clearly >= d is not skinny
    tv = np.array([m.tris[t] for t in ids], dtype=np.int64)
    P = coords[tv]
    df = float(d2) ** 0.5
    keep = np.zeros(len(ids), dtype=bool)
    for k in range(3):
        v, t, h = P[:, k], P[:, (k + 1) % 3], P[:, (k + 2) % 3]
        e = h - t
        cr = np.cross(e, v - t)
        area = np.sqrt(np.einsum("ij,ij->i", cr, cr))
        le = np.sqrt(np.einsum("ij,ij->i", e, e))
        with np.errstate(divide="ignore", invalid="ignore"):
            height = area / le
        keep |= ~(height > df * (1 + 1e-6) + 1e-300)
    out = []
    for idx in np.nonzero(keep)[0].tolist():
        tid = ids[idx]
        tri = m.tris[tid]
        pts = [m.points[x] for x in tri]
        for k, h2 in _skinny_apexes(pts, d2):
            out.append((tid, (tri[(k + 1) % 3], tri[(k + 2) % 3]), tri[k], h2))
    out.sort(key=lambda x: (x[3], x[0]))
    return out


# ---------------------------------------------------------------------------
# intersection screening for proposed triangles

def _box_of(pts):
    f = np.array([[float(c) for c in p] for p in pts])
    return inflate(f.min(axis=0), f.max(axis=0))


def _proposal_intersects(m: Mesh, index: Octree, new_tris, removed, pos):
    """True if any proposed triangle hits another proposed or surviving triangle.

    ``new_tris`` are vertex-id triples, ``pos`` resolves ids (including a
    not-yet-created vertex), ``removed`` are triangle ids the edit deletes.
    """
    pts = [[pos(v) for v in t] for t in new_tris]
    for i in range(len(new_tris)):
        for j in range(i + 1, len(new_tris)):
            sh = shared_pairs(new_tris[i], new_tris[j])
            if triangles_intersect(pts[i], pts[j], sh, check=False):
                return True
    for t, P in zip(new_tris, pts):
        lo, hi = _box_of(P)
        for s in index.query(lo, hi):
            if s in removed or s not in m.tris:
                continue
            other = m.tris[s]
            sh = shared_pairs(t, other)
            if triangles_intersect(P, [m.points[x] for x in other], sh, check=False):
                return True
    return False


def _incident_pair(m: Mesh, i, j):
    ts = m.edges.get(edge_key(i, j))
    if ts is None or len(ts) != 2:
        return None
    return sorted(ts)


def _third(tri, i, j):
    for x in tri:
        if x != i and x != j:
            return x


# ---------------------------------------------------------------------------
# edits

def contract_edge(m: Mesh, th, index: Octree, origins=None) -> EditResult:
    """Contract edge th to its midpoint if the link condition and safety hold."""
    t, h = th
    pair = _incident_pair(m, t, h)
    if pair is None:
        return _rejected(Reason.INCIDENCE)
    T1, T2 = pair
    v, w = _third(m.tris[T1], t, h), _third(m.tris[T2], t, h)
    lt, lh = vertex_star_boundary(m, t), vertex_star_boundary(m, h)
    if lt is None or lh is None or v == w:
        return _rejected(Reason.LINK_CONDITION)
    ti = set(lt) - {h, v, w}
    hj = set(lh) - {t, v, w}
    if ti & hj or (not ti and not hj):
        return _rejected(Reason.LINK_CONDITION)
    mid = tuple((a + b) / 2 for a, b in zip(m.points[t], m.points[h]))
    NEW = -1

    def pos(x):
        return mid if x == NEW else m.points[x]

    removed = set(m.vtris[t]) | set(m.vtris[h])
    rewired = []
    for tid in sorted(removed - {T1, T2}):
        rewired.append(tuple(NEW if x in (t, h) else x for x in m.tris[tid]))
    keys = set()
    for tri in rewired:
        if is_degenerate(*(pos(x) for x in tri)):
            return _rejected(Reason.DEGENERATE)
        k = tuple(sorted(tri))
        if k in keys:
            return _rejected(Reason.DUPLICATE)
        keys.add(k)
    if _proposal_intersects(m, index, rewired, removed, pos):
        return _rejected(Reason.INTERSECTION)
    # apply
    for tid in sorted(removed):
        m.remove_triangle(tid)
    index_remove(index, removed)
    nv = m.add_vertex(mid)
    new_tids = [m.add_triangle(*(nv if x == NEW else x for x in tri)) for tri in rewired]
    m.remove_vertex(t)
    m.remove_vertex(h)
    index_insert(index, m, new_tids)
    if origins is not None:
        origins[nv] = origins.pop(t, (t,)) + origins.pop(h, (h,))
    return EditResult(True, None, nv, tuple(new_tids))


def flip_edge(m: Mesh, th, d, index: Octree) -> EditResult:
    """Replace edge th by vw when both new triangles are fat and nothing collides."""
    t, h = th
    pair = _incident_pair(m, t, h)
    if pair is None:
        return _rejected(Reason.INCIDENCE)
    T1, T2 = pair
    tri1 = m.tris[T1]
    v = _third(tri1, t, h)
    w = _third(m.tris[T2], t, h)
    if v == w:
        return _rejected(Reason.DEGENERATE)
    # orient so that T1 reads (t, h, v) cyclically
    k = tri1.index(v)
    t, h = tri1[(k + 1) % 3], tri1[(k + 2) % 3]
    if m.has_edge(v, w):
        return _rejected(Reason.EXISTING_EDGE)
    new = [(v, w, h), (w, v, t)]
    pts = [[m.points[x] for x in tri] for tri in new]
    if any(is_degenerate(*P) for P in pts):
        return _rejected(Reason.DEGENERATE)
    if any(is_skinny(P, d) for P in pts):
        return _rejected(Reason.STILL_SKINNY)
    if _proposal_intersects(m, index, new, {T1, T2}, lambda x: m.points[x]):
        return _rejected(Reason.INTERSECTION)
    m.remove_triangle(T1)
    m.remove_triangle(T2)
    index_remove(index, (T1, T2))
    new_tids = [m.add_triangle(*tri) for tri in new]
    index_insert(index, m, new_tids)
    return EditResult(True, None, None, tuple(new_tids))


# ---------------------------------------------------------------------------
# small components

def _component_edges(m, tids):
    edges = {}
    for tid in tids:
        a, b, c = m.tris[tid]
        for i, j in ((a, b), (b, c), (c, a)):
            edges.setdefault(edge_key(i, j), []).append((i, j))
    return edges


def _oriented_closed(m: Mesh, tids):
    edges = _component_edges(m, tids)
    return all(len(uses) == 2 and uses[0] != uses[1] for uses in edges.values())


def component_volume(m: Mesh, tids):
    """Enclosed volume of a consistently oriented closed component, else None."""
    if not _oriented_closed(m, tids):
        return None
    total = exact(0)
    a0 = m.points[m.tris[tids[0]][0]]
    for tid in tids:
        a, b, c = (sub(m.points[x], a0) for x in m.tris[tid])
        total += (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                  + a[2] * (b[0] * c[1] - b[1] * c[0]))
    return abs(total) / 6


def _volume_below(m: Mesh, tids, bound):
    """component_volume(m, tids) < bound, deciding in floats when the error bound allows."""
    if not _oriented_closed(m, tids):
        return False
    coords, _, _ = m.arrays()
    tv = np.array([m.tris[t] for t in tids], dtype=np.int64)
    P = coords[tv]
    mx = float(np.abs(P).max())
    a0 = P[0, 0]
    a, b, c = P[:, 0] - a0, P[:, 1] - a0, P[:, 2] - a0
    terms = np.einsum("ij,ij->i", a, np.cross(b, c))
    vol = abs(float(terms.sum())) / 6
    # input rounding plus subtraction, per coordinate, summed over three axes
    delta = 9 * EPS * mx
    A, B, C = (np.abs(x).sum(axis=1) + delta for x in (a, b, c))
    prod = A * B * C
    err = float(np.sum(prod - (A - delta) * (B - delta) * (C - delta))
                + (6 + len(tids)) * EPS * np.sum(prod)) / 6 * 2 + 1e-300
    b = float(bound)
    if vol - err > b:
        return False
    if vol + err < b:
        return True
    return component_volume(m, tids) < bound


def _extent(m, tids):
    vs = {x for tid in tids for x in m.tris[tid]}
    lo = [min(m.points[v][k] for v in vs) for k in range(3)]
    hi = [max(m.points[v][k] for v in vs) for k in range(3)]
    return [b - a for a, b in zip(lo, hi)]


def _thin(m, tids, d, index):
    """Some component vertex lies within d of a disjoint triangle of the component."""
    verts = {x for tid in tids for x in m.tris[tid]}
    keys = {tuple(sorted(m.tris[tid])) for tid in tids}
    for fp in close_pairs(m, index, d, tids=tids):
        if fp.A.kind == "vertex" and fp.A.ids[0] in verts and fp.B.ids in keys:
            return True
    return False


def remove_small_components(m: Mesh, d, index: Octree = None):
    """Delete closed components that are tiny or thin and open ones smaller than d.

    Returns the list of removed components, each a sorted list of the
    triangle ids it had.
    """
    d = exact(d)
    if index is None:
        index = build_octree(m)
    removed = []
    for tids in triangle_components(m):
        edges = _component_edges(m, tids)
        closed = all(len(u) >= 2 for u in edges.values())
        ext = _extent(m, tids)
        drop = False
        if closed:
            if _volume_below(m, tids, d ** 3):
                drop = True
            elif min(ext) < 4 * d and _thin(m, tids, d, index):
                drop = True
        else:
            drop = max(ext) < d
        if drop:
            removed.append(tids)
            verts = {x for tid in tids for x in m.tris[tid]}
            for tid in tids:
                m.remove_triangle(tid)
            index_remove(index, tids)
            for v in verts:
                if not m.vtris[v]:
                    m.remove_vertex(v)
    if removed:
        log.info("removed %d small component(s)", len(removed))
    return removed


# ---------------------------------------------------------------------------
# stage driver

@dataclass
class ModifyCounters:
    contractions: int = 0
    flips: int = 0
    rejected: dict = field(default_factory=dict)
    rounds: int = 0
    components_removed: int = 0

    def reject(self, reason):
        self.rejected[reason.value] = self.rejected.get(reason.value, 0) + 1


def _contract_round(m, d, index, origins, counters):
    applied = 0
    for (i, j), _ in find_short_edges(m, d):
        if not m.has_edge(i, j):
            continue
        # the edge may have grown since it was listed
        if norm2(sub(m.points[j], m.points[i])) >= exact(d) ** 2:
            continue
        r = contract_edge(m, (i, j), index, origins)
        if r:
            applied += 1
        else:
            counters.reject(r.reason)
    counters.contractions += applied
    return applied


def _flip_round(m, d, index, counters):
    applied = 0
    d2 = exact(d) ** 2
    for tid, (t, h), v, _ in find_skinny_triangles(m, d):
        if tid not in m.tris:
            continue
        tri = m.tris[tid]
        if v not in tri or t not in tri or h not in tri:
            continue
        if not any(tri[k] == v for k, _ in _skinny_apexes([m.points[x] for x in tri], d2)):
            continue
        r = flip_edge(m, (t, h), d, index)
        if r:
            applied += 1
        else:
            counters.reject(r.reason)
    counters.flips += applied
    return applied


def modification_stage(m: Mesh, d, index: Octree = None, origins=None, max_rounds=1000):
    """Apply every admissible edit (contractions first) until none applies.

    ``origins`` maps current vertex ids to the tuples of input vertex ids they
    replace; it is updated in place when given.  Returns (report, index).
    """
    start = time.perf_counter()
    d = exact(d)
    if index is None:
        index = build_octree(m)
    before = dict(m.points)
    if origins is None:
        origins = {v: (v,) for v in m.points}
    n0 = len(m.used_vertices())
    c0 = len(close_pairs(m, index, d))
    counters = ModifyCounters()
    counters.components_removed += len(remove_small_components(m, d, index))
    for _ in range(max_rounds):
        counters.rounds += 1
        a = _contract_round(m, d, index, origins, counters)
        b = _flip_round(m, d, index, counters)
        if a + b == 0:
            break
    counters.components_removed += len(remove_small_components(m, d, index))
    moves = []
    for v, src in origins.items():
        if v in m.points and m.vtris.get(v):
            for o in src:
                if o in before:
                    moves.append((before[o], m.points[v]))
    pct, med, mx = displacement_stats(moves, d, total=n0)
    rep = StageReport("modify", close_pairs=c0, displaced_pct=pct, median=med, max=mx,
                      seconds=time.perf_counter() - start, iterations=counters.rounds,
                      extra={"contractions": counters.contractions, "flips": counters.flips,
                             "rejected": counters.rejected,
                             "components_removed": counters.components_removed})
    log.info("modify: %d contractions, %d flips, %d rounds", counters.contractions,
             counters.flips, counters.rounds)
    return rep, index
