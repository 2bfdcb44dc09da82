"""Triangle mesh with exact vertex coordinates and adjacency tables."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _fast
from ._tritri import _P, classify
from .errors import DegenerateTriangle, DuplicateTriangle, IndexOutOfRange
from .kernel import exact, fpoint, is_degenerate, triangles_intersect
from .octree import Octree, inflate


def edge_key(i, j):
    return (i, j) if i < j else (j, i)


class Mesh:
    """Indexed triangle set.

    Vertex and triangle ids are stable integers; edits delete and create ids
    rather than renumbering, so callers can hold on to them.  ``fpoints``
    caches the nearest binary64 coordinates used by the float filters.
    """

    def __init__(self):
        self.points = {}
        self.fpoints = {}
        self.fexact = {}
        self.tris = {}
        self.edges = {}
        self.vtris = {}
        self._next_vid = 0
        self._next_tid = 0
        self.version = 0
        self._arrays = None
        self._xarr = None

    # -- mutation ---------------------------------------------------------
    def add_vertex(self, p):
        vid = self._next_vid
        self._next_vid += 1
        self.points[vid] = p
        self._set_float(vid, p)
        self.vtris[vid] = set()
        self._touch()
        return vid

    def move_vertex(self, vid, p):
        self.points[vid] = p
        self._set_float(vid, p)
        self._touch()

    def _set_float(self, vid, p):
        f = fpoint(p)
        self.fpoints[vid] = f
        self.fexact[vid] = all(x.denominator == 1 or x == y for x, y in zip(p, f))

    def remove_vertex(self, vid):
        if self.vtris[vid]:
            raise ValueError(f"vertex {vid} still has triangles")
        del self.points[vid], self.fpoints[vid], self.fexact[vid], self.vtris[vid]
        self._touch()

    def add_triangle(self, a, b, c):
        tid = self._next_tid
        self._next_tid += 1
        self.tris[tid] = (a, b, c)
        for v in (a, b, c):
            self.vtris[v].add(tid)
        for i, j in ((a, b), (b, c), (c, a)):
            self.edges.setdefault(edge_key(i, j), set()).add(tid)
        self._touch()
        return tid

    def remove_triangle(self, tid):
        a, b, c = self.tris.pop(tid)
        for v in (a, b, c):
            self.vtris[v].discard(tid)
        for i, j in ((a, b), (b, c), (c, a)):
            k = edge_key(i, j)
            s = self.edges[k]
            s.discard(tid)
            if not s:
                del self.edges[k]
        self._touch()

    def _touch(self):
        self.version += 1
        self._arrays = None

    def copy(self):
        m = Mesh()
        m.points = dict(self.points)
        m.fpoints = dict(self.fpoints)
        m.fexact = dict(self.fexact)
        m.tris = dict(self.tris)
        m.edges = {k: set(v) for k, v in self.edges.items()}
        m.vtris = {k: set(v) for k, v in self.vtris.items()}
        m._next_vid = self._next_vid
        m._next_tid = self._next_tid
        return m

    # -- queries ----------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.points)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_triangles(self):
        return len(self.tris)

    def tri_points(self, tid):
        a, b, c = self.tris[tid]
        return (self.points[a], self.points[b], self.points[c])

    def tri_box(self, tid):
        a, b, c = self.tris[tid]
        f = np.array([self.fpoints[a], self.fpoints[b], self.fpoints[c]])
        return inflate(f.min(axis=0), f.max(axis=0))

    def edge_triangles(self, i, j):
        return self.edges.get(edge_key(i, j), set())

    def has_edge(self, i, j):
        return edge_key(i, j) in self.edges

    def used_vertices(self):
        return [v for v, ts in self.vtris.items() if ts]

    def arrays(self):
        """Dense float views: (coords indexed by vid, tids, tri vertex ids).

        ``exact_flags()`` gives the matching per-vertex flag telling whether
        the float coordinates equal the exact ones.
        """
        if self._arrays is None:
            coords = np.full((max(self._next_vid, 1), 3), np.nan)
            flags = np.zeros(max(self._next_vid, 1), dtype=bool)
            if self.fpoints:
                ids = np.fromiter(self.fpoints.keys(), dtype=np.int64, count=len(self.fpoints))
                coords[ids] = np.array(list(self.fpoints.values()), dtype=float)
                flags[ids] = np.fromiter(self.fexact.values(), dtype=bool, count=len(ids))
            self._flags = flags
            tids = np.array(sorted(self.tris), dtype=np.int64)
            tv = np.array([self.tris[t] for t in tids.tolist()], dtype=np.int64).reshape(-1, 3)
            self._arrays = (coords, tids, tv)
        return self._arrays

    def exact_flags(self):
        self.arrays()
        return self._flags

    def exact_array(self):
        """Object array of exact coordinates indexed by vid (cached per version)."""
        if self._xarr is None or self._xarr[0] != self.version:
            x = np.empty((max(self._next_vid, 1), 3), dtype=object)
            for v, p in self.points.items():
                x[v] = p
            self._xarr = (self.version, x)
        return self._xarr[1]

    def tri_boxes(self):
        coords, tids, tv = self.arrays()
        f = coords[tv]
        lo, hi = inflate(f.min(axis=1), f.max(axis=1))
        return tids, lo, hi

    def max_abs_coordinate(self):
        best = exact(0)
        for p in self.points.values():
            for c in p:
                a = abs(c)
                if a > best:
                    best = a
        return best

    def compact(self, keep_unused=False):
        """(points, triangles) with vertices renumbered in id order.

        Unused vertices are dropped unless ``keep_unused`` is set.
        """
        if keep_unused:
            used = sorted(self.points)
        else:
            used = sorted(set(v for t in self.tris.values() for v in t))
        remap = {v: i for i, v in enumerate(used)}
        pts = [self.points[v] for v in used]
        tris = [tuple(remap[v] for v in self.tris[t]) for t in sorted(self.tris)]
        return pts, tris

    def check_consistency(self):
        """Rebuild adjacency from the triangle list and compare (test audit)."""
        edges = {}
        vtris = {v: set() for v in self.points}
        for tid, (a, b, c) in self.tris.items():
            for v in (a, b, c):
                vtris[v].add(tid)
            for i, j in ((a, b), (b, c), (c, a)):
                edges.setdefault(edge_key(i, j), set()).add(tid)
        return edges == self.edges and vtris == self.vtris


def build_mesh(points, tris, check=True) -> Mesh:
    """Mesh from exact points and 0-based vertex-index triples."""
    m = Mesh()
    pts = [tuple(exact(c) for c in p) for p in points]
    for p in pts:
        m.add_vertex(p)
    seen = set()
    n = len(pts)
    for k, t in enumerate(tris):
        t = tuple(int(i) for i in t)
        if len(t) != 3:
            raise IndexOutOfRange(f"triangle {k} does not have 3 indices")
        if any(i < 0 or i >= n for i in t):
            raise IndexOutOfRange(f"triangle {k} references a vertex outside 0..{n - 1}")
        if len(set(t)) != 3:
            raise DegenerateTriangle(f"triangle {k} repeats a vertex")
        key = tuple(sorted(t))
        if key in seen:
            raise DuplicateTriangle(f"triangle {k} duplicates {key}")
        seen.add(key)
        if check and is_degenerate(pts[t[0]], pts[t[1]], pts[t[2]]):
            raise DegenerateTriangle(f"triangle {k} has collinear vertices")
        m.add_triangle(*t)
    return m


# ---------------------------------------------------------------------------
# topology

@dataclass(frozen=True)
class ComponentSignature:
    vertices: int
    edges: int
    triangles: int
    euler: int
    boundary_loops: int


@dataclass(frozen=True)
class TopologySignature:
    components: tuple = field(default_factory=tuple)

    @property
    def n_components(self):
        return len(self.components)

    def invariant(self):
        """The part edits must preserve: per-component Euler characteristic and holes."""
        return tuple(sorted((c.euler, c.boundary_loops) for c in self.components))


def triangle_components(m: Mesh):
    """Triangle ids grouped by edge-connectivity, each group sorted, groups by min id."""
    parent = {t: t for t in m.tris}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ts in m.edges.values():
        it = iter(ts)
        first = find(next(it))
        for t in it:
            r = find(t)
            if r != first:
                parent[r] = first
    groups = {}
    for t in m.tris:
        groups.setdefault(find(t), []).append(t)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def _boundary_loops(boundary_edges):
    adj = {}
    for i, j in boundary_edges:
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    seen = set()
    loops = 0
    for v in adj:
        if v in seen:
            continue
        loops += 1
        stack = [v]
        seen.add(v)
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
    return loops


def component_signature(m: Mesh, tids) -> ComponentSignature:
    verts = set()
    edges = {}
    for t in tids:
        a, b, c = m.tris[t]
        verts.update((a, b, c))
        for i, j in ((a, b), (b, c), (c, a)):
            k = edge_key(i, j)
            edges[k] = edges.get(k, 0) + 1
    boundary = [k for k, n in edges.items() if n == 1]
    V, E, F = len(verts), len(edges), len(tids)
    return ComponentSignature(V, E, F, V - E + F, _boundary_loops(boundary))


def topology_signature(m: Mesh) -> TopologySignature:
    return TopologySignature(tuple(component_signature(m, g) for g in triangle_components(m)))


def vertex_star_boundary(m: Mesh, t):
    """Link of vertex t as an ordered cycle, or None unless its star is a closed disk."""
    tids = m.vtris.get(t)
    if not tids or len(tids) < 3:
        return None
    adj = {}
    for tid in tids:
        a, b = [v for v in m.tris[tid] if v != t]
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if len(adj) != len(tids) or any(len(n) != 2 or n[0] == n[1] for n in adj.values()):
        return None
    start = min(adj)
    prev, cur = start, min(adj[start])
    loop = [start]
    while cur != start:
        loop.append(cur)
        n0, n1 = adj[cur]
        prev, cur = cur, (n1 if n0 == prev else n0)
        if len(loop) > len(adj):
            return None
    if len(loop) != len(adj):
        return None
    return loop


# ---------------------------------------------------------------------------
# global validity

def build_index(m: Mesh, max_leaf=16, max_depth=20) -> Octree:
    tids, lo, hi = m.tri_boxes()
    return Octree.from_boxes(tids, lo, hi, max_leaf=max_leaf, max_depth=max_depth)


def shared_pairs(ta, tb):
    return [(i, j) for i in range(3) for j in range(3) if ta[i] == tb[j]]


def mesh_triangles_intersect(m: Mesh, t1, t2) -> bool:
    ta, tb = m.tris[t1], m.tris[t2]
    return triangles_intersect(m.tri_points(t1), m.tri_points(t2), shared_pairs(ta, tb), check=False)


def candidate_pairs(m: Mesh, index: Octree, tids=None, pad=0.0):
    """Triangle id pairs (i, j) whose boxes, grown by ``pad``, overlap."""
    if tids is None:
        ids, lo, hi = m.tri_boxes()
        return sorted(tuple(r) for r in ids[_fast.box_pairs(lo, hi, pad)].tolist())
    out = set()
    for t in tids:
        if t not in m.tris:
            continue
        lo, hi = index.boxes[t] if t in index.boxes else m.tri_box(t)
        if pad:
            lo = np.nextafter(np.asarray(lo, dtype=float) - pad, -np.inf)
            hi = np.nextafter(np.asarray(hi, dtype=float) + pad, np.inf)
        for s in index.query(lo, hi):
            if s != t and s in m.tris:
                out.add((t, s) if t < s else (s, t))
    return sorted(out)


def _classify(m: Mesh, pairs):
    """Split triangle pairs into (certain hits, pairs needing the exact test)."""
    if not pairs:
        return [], []
    coords = m.arrays()[0]
    flags = m.exact_flags()
    X = m.exact_array()
    P = np.array(pairs, dtype=np.int64)
    A = np.array([m.tris[t] for t in P[:, 0].tolist()], dtype=np.int64)
    B = np.array([m.tris[t] for t in P[:, 1].tolist()], dtype=np.int64)
    ex = flags[A].all(axis=1) & flags[B].all(axis=1)
    known, hit = classify(_P(coords[A], X[A]), _P(coords[B], X[B]), A, B, ex)
    hits = [pairs[i] for i in np.nonzero(known & hit)[0].tolist()]
    rest = [pairs[i] for i in np.nonzero(~known)[0].tolist()]
    return hits, rest


def intersecting_pairs(m: Mesh, index: Octree = None, tids=None):
    """All triangle pairs that intersect beyond their shared features."""
    if index is None:
        index = build_index(m)
    hits, rest = _classify(m, candidate_pairs(m, index, tids))
    hits += [(a, b) for a, b in rest if mesh_triangles_intersect(m, a, b)]
    return sorted(hits)


def local_intersections(m: Mesh, index: Octree, tids) -> bool:
    """True if any triangle in ``tids`` intersects another triangle."""
    pairs = set()
    for t in tids:
        if t not in m.tris:
            continue
        lo, hi = m.tri_box(t)
        for s in index.query(lo, hi):
            if s != t and s in m.tris:
                pairs.add((t, s) if t < s else (s, t))
    hits, rest = _classify(m, sorted(pairs))
    if hits:
        return True
    return any(mesh_triangles_intersect(m, a, b) for a, b in rest)


def certify_no_intersections(m: Mesh, index: Octree = None) -> bool:
    return not intersecting_pairs(m, index)


def min_separation(m: Mesh, pairs=None, exhaustive=False):
    """Minimum squared distance over feature pairs (math.inf when there are none)."""
    if exhaustive:
        from .proximity import exhaustive_min_separation
        return exhaustive_min_separation(m)
    best = math.inf
    for fp in pairs or ():
        if fp.dist2 < best:
            best = fp.dist2
    return best
