"""Deterministic synthetic meshes with planted close features.

Every generator returns ``(mesh, truth)`` where ``truth`` is a JSON-ready
dict describing what was planted.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from gmpy2 import mpq

from .kernel import Feature, exact, feature_distance
from .mesh import (build_index, build_mesh, certify_no_intersections, local_intersections,
                   vertex_star_boundary)
from .proximity import close_pairs

KINDS = ("planted-pairs", "parallel-sheets", "sliver-band", "tetra-soup", "high-precision")


@dataclass
class SyntheticSpec:
    kind: str
    size: int = 2000
    d: float = 1e-6
    seed: int = 0
    k: int = 10
    gap: float = 0.5     # in units of d (parallel-sheets)
    bits: int = 600      # high-precision denominators

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; choose from {', '.join(KINDS)}")


# ---------------------------------------------------------------------------
# building blocks

def icosphere(level: int):
    """Unit icosphere: (float vertices (n,3), outward-oriented triangles)."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}
        new = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), faces


def _level_for(tris_per_sphere):
    level = 0
    while 20 * 4 ** (level + 1) <= tris_per_sphere and level < 5:
        level += 1
    return level


def _lift(P):
    return [tuple(mpq(float(c)) for c in p) for p in np.asarray(P, dtype=float)]


def _face_normal(P, f):
    a, b, c = P[f[0]], P[f[1]], P[f[2]]
    n = np.cross(b - a, c - a)
    return n / np.linalg.norm(n)


# ---------------------------------------------------------------------------
# generators

def planted_pairs(size=2000, k=10, d=1e-6, seed=0):
    """Chain of icospheres; k neighbor gaps hold a spike tip 0.3d-0.9d above a face."""
    rng = np.random.default_rng(seed)
    level = _level_for(max(size // max(k + 1, 2), 20))
    n_spheres = max(k + 1, 2, int(round(size / (20 * 4 ** level))))
    base_P, base_F = icosphere(level)
    P_all, F_all, planted = [], [], []
    offset = 0
    prev = None   # (points, faces) of the previous sphere in world coordinates
    cursor = 0.0
    for i in range(n_spheres):
        P = base_P * (1.0 + 0.05 * rng.random())
        P = P + rng.normal(scale=1e-3, size=P.shape)
        if i == 0:
            P = P + np.array([cursor, 0.0, 0.0])
        elif i <= k:
            # face of the previous sphere that looks most along +x
            PP, FF, off_prev = prev
            normals = np.array([_face_normal(PP, f) for f in FF])
            order = np.argsort(-normals[:, 0])
            fi = int(order[rng.integers(0, 3)])
            f = FF[fi]
            n_f = normals[fi]
            center = PP[list(f)].mean(axis=0)
            # vertex of this sphere that looks most along -n_f, raised into a spike
            vi = int(np.argmax(P @ (-n_f)))
            P[vi] = P[vi] + 0.15 * (-n_f)
            g = float(rng.uniform(0.3, 0.9)) * d
            P = P + (center + g * n_f - P[vi])
            planted.append({"vertex": offset + vi, "triangle": [off_prev + x for x in f],
                            "gap_d": g / d})
        else:
            P = P + np.array([cursor + 3.0, 0.0, 0.0])
        cursor = float(P[:, 0].max()) + 1.0
        P_all.append(P)
        F_all += [tuple(offset + x for x in f) for f in base_F]
        prev = (P, base_F, offset)
        offset += len(P)
    m = build_mesh(_lift(np.vstack(P_all)), F_all)
    for rec in planted:
        d2 = feature_distance(Feature.vertex(rec["vertex"]), Feature.triangle(*rec["triangle"]),
                              m.points)[0]
        rec["dist_d"] = math.sqrt(float(d2)) / d
    return m, {"kind": "planted-pairs", "pairs": planted, "count": len(planted)}


def _grid(n, z_of=None, spacing=1.0):
    pts, tris = [], []
    for j in range(n + 1):
        for i in range(n + 1):
            x, y = i * spacing, j * spacing
            pts.append((x, y, z_of(x, y) if z_of else 0.0))
    idx = lambda i, j: j * (n + 1) + i  # noqa: E731
    for j in range(n):
        for i in range(n):
            a, b, c, e = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, e)]
            else:
                tris += [(a, b, e), (b, c, e)]
    return pts, tris


def parallel_sheets(size=2000, gap=0.5, d=1e-6, seed=0):
    """Two flat grids; the upper one sits exactly gap*d above the lower one."""
    n = max(1, int(math.sqrt(size / 4)))
    pts, tris = _grid(n, spacing=mpq(1, n))
    h = exact(gap) * exact(d)
    lower = [tuple(mpq(c) for c in p) for p in pts]
    upper = [(p[0], p[1], p[2] + h) for p in lower]
    off = len(lower)
    m = build_mesh(lower + upper, tris + [tuple(off + x for x in t) for t in tris])
    return m, {"kind": "parallel-sheets", "gap_d": float(gap), "min_separation": str(h)}


def _split_vertex(m, p, rng, length):
    """Split interior vertex p into p and a new vertex joined by a short edge."""
    loop = vertex_star_boundary(m, p)
    if loop is None or len(loop) < 6:
        return None
    k = len(loop)
    i = int(rng.integers(0, k))
    j = (i + k // 2) % k
    a, b = loop[i], loop[j]
    # triangles on the a -> b side of the loop (walking forward) move to the new vertex
    side = set()
    walk = i
    while walk != j:
        x, y = loop[walk], loop[(walk + 1) % k]
        side |= {t for t in m.vtris[p] if x in m.tris[t] and y in m.tris[t]}
        walk = (walk + 1) % k
    pp = m.points[p]
    mid_side = np.mean([[float(c) for c in m.points[loop[(i + s) % k]]] for s in range(1, k // 2)],
                       axis=0)
    direc = mid_side - np.array([float(c) for c in pp])
    direc[2] = 0.0
    direc /= np.linalg.norm(direc)
    q = tuple(pp[c] + mpq(float(direc[c] * length)) for c in range(3))
    tris = {t: m.tris[t] for t in side}
    for t in side:
        m.remove_triangle(t)
    nv = m.add_vertex(q)
    for t, tri in tris.items():
        m.add_triangle(*(nv if x == p else x for x in tri))
    # orientation of the two sliver triangles follows the neighbours
    m.add_triangle(*_oriented(m, (p, nv, a)))
    m.add_triangle(*_oriented(m, (nv, p, b)))
    return nv


def _oriented(m, tri):
    """Flip tri if any of its edges is already used in the same direction."""
    a, b, c = tri
    for i, j in ((a, b), (b, c), (c, a)):
        for t in m.edge_triangles(i, j):
            T = m.tris[t]
            for s in range(3):
                if T[s] == i and T[(s + 1) % 3] == j:
                    return (a, c, b)
    return tri


def sliver_band(size=2000, k=10, d=1e-6, seed=0):
    """Height-field sheet with k short edges (vertex splits) and k near-edge apexes."""
    rng = np.random.default_rng(seed)
    n = max(6, int(math.sqrt(size / 2)))
    spacing = 1.0 / n
    amp = 0.05 * rng.random() + 0.02
    fx, fy = rng.uniform(1, 3, size=2)
    pts, tris = _grid(n, lambda x, y: amp * math.sin(fx * x * 3.1) * math.cos(fy * y * 2.7),
                      spacing)
    m = build_mesh(_lift(pts), tris)
    interior = [j * (n + 1) + i for j in range(2, n - 1) for i in range(2, n - 1)]
    rng.shuffle(interior)
    used = set()
    splits, apexes = [], []

    def free(v):
        ring = {v} | set(vertex_star_boundary(m, v) or ())
        if ring & used:
            return None
        return ring

    for v in interior:
        if len(splits) >= k:
            break
        ring = free(v)
        if ring is None:
            continue
        length = float(rng.uniform(0.2, 0.8)) * d
        nv = _split_vertex(m, v, rng, length)
        if nv is None:
            continue
        used |= ring | {nv} | set(vertex_star_boundary(m, nv) or ())
        splits.append({"edge": [v, nv], "length_d": length / d})
    for v in interior:
        if len(apexes) >= k:
            break
        ring = free(v)
        if ring is None:
            continue
        loop = vertex_star_boundary(m, v)
        i = int(rng.integers(0, len(loop)))
        t, h = loop[i], loop[(i + 1) % len(loop)]
        T = [x for x in m.vtris[v] if t in m.tris[x] and h in m.tris[x]]
        if len(T) != 1 or len(m.edge_triangles(t, h)) != 2:
            continue
        lam = float(rng.uniform(0.35, 0.65))
        hgt = float(rng.uniform(0.2, 0.8)) * d
        tp = np.array([float(c) for c in m.points[t]])
        hp = np.array([float(c) for c in m.points[h]])
        vp = np.array([float(c) for c in m.points[v]])
        e = hp - tp
        side = np.cross(np.array([0.0, 0.0, 1.0]), e)
        side /= np.linalg.norm(side)
        if side @ (vp - tp) < 0:
            side = -side
        base = tuple(m.points[t][c] + mpq(lam) * (m.points[h][c] - m.points[t][c]) for c in range(3))
        newp = tuple(base[c] + mpq(float(side[c] * hgt)) for c in range(3))
        old = m.points[v]
        m.move_vertex(v, newp)
        w = [x for x in m.tris[[s for s in m.edge_triangles(t, h) if s not in T][0]]
             if x not in (t, h)][0]
        if w in used:
            m.move_vertex(v, old)
            continue
        used |= ring | {w}
        apexes.append({"apex": v, "edge": [t, h], "height_d": hgt / d})
    assert certify_no_intersections(m)
    return m, {"kind": "sliver-band", "short_edges": splits, "skinny": apexes,
               "count": len(splits) + len(apexes)}


def _kuhn(n):
    pts = [(i, j, k) for k in range(n + 1) for j in range(n + 1) for i in range(n + 1)]
    idx = lambda i, j, k: (k * (n + 1) + j) * (n + 1) + i  # noqa: E731
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    tets = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                for perm in perms:
                    c = [i, j, k]
                    tet = [idx(*c)]
                    for axis in perm:
                        c[axis] += 1
                        tet.append(idx(*c))
                    tets.append(tet)
    return pts, tets


def _plant_near_face(m, index, v, face, rng, d):
    """Move v just above the centroid of face; undo unless exactly one pair lands below d."""
    a, b, c = (np.array([float(x) for x in m.points[f]]) for f in face)
    nrm = np.cross(b - a, c - a)
    nrm /= np.linalg.norm(nrm)
    vp = np.array([float(x) for x in m.points[v]])
    if nrm @ (vp - a) < 0:
        nrm = -nrm
    g = float(rng.uniform(0.3, 0.9)) * d
    target = (a + b + c) / 3 + g * nrm
    old = m.points[v]
    m.move_vertex(v, tuple(mpq(float(x)) for x in target))
    for t in m.vtris[v]:
        index.update(t, *m.tri_box(t))
    near = [fp for fp in close_pairs(m, index, threshold=d, tids=m.vtris[v])
            if fp.dist2 < exact(d) ** 2]
    if local_intersections(m, index, m.vtris[v]) or len(near) != 1:
        m.move_vertex(v, old)
        for t in m.vtris[v]:
            index.update(t, *m.tri_box(t))
        return None
    d2 = feature_distance(Feature.vertex(v), Feature.triangle(*face), m.points)[0]
    return {"vertex": v, "triangle": sorted(face), "dist_d": math.sqrt(float(d2)) / d}


def tetra_soup(size=2000, k=10, d=1e-6, seed=0):
    """All faces of a jittered Kuhn tetrahedralization; k vertices pushed near an opposite face.

    The jitter keeps face planes from containing other grid vertices, which
    would otherwise put extra edges within d of every planted pair.
    """
    rng = np.random.default_rng(seed)
    # an n-cell grid has 12n^3 + 6n^2 faces; take the count nearest size
    n = min(range(2, 64), key=lambda n: abs(12 * n ** 3 + 6 * n ** 2 - size))
    pts, tets = _kuhn(n)
    faces = set()
    for t in tets:
        for s in range(4):
            faces.add(tuple(sorted(t[:s] + t[s + 1:])))
    faces = sorted(faces)
    jit = rng.uniform(-0.05, 0.05, size=(len(pts), 3))
    P = [tuple(mpq(float(c + j)) for c, j in zip(p, dj)) for p, dj in zip(pts, jit)]
    m = build_mesh(P, faces)
    index = build_index(m)
    interior = [v for v, p in enumerate(pts) if all(0 < c < n for c in p)]
    rng.shuffle(interior)
    planted, used = [], set()
    for v in interior:
        if len(planted) >= k:
            break
        nbrs = {x for t in m.vtris[v] for x in m.tris[t]}
        if v in used:
            continue
        inc = [t for t in tets if v in t]
        for ti in rng.permutation(len(inc)).tolist():
            rec = _plant_near_face(m, index, v, [x for x in inc[ti] if x != v], rng, d)
            if rec is not None:
                used |= nbrs
                planted.append(rec)
                break
    return m, {"kind": "tetra-soup", "pairs": planted, "count": len(planted)}


def high_precision(size=2000, k=10, d=1e-6, seed=0, bits=600):
    """Planted-pairs mesh whose coordinates carry tiny rationals with bits-bit denominators."""
    m, truth = planted_pairs(size=size, k=k, d=d, seed=seed)
    rng = np.random.default_rng(seed + 7919)
    scale = mpq(1, 10 ** 12)
    for v in sorted(m.points):
        p = m.points[v]
        q = []
        for c in p:
            den = (int(rng.integers(1, 2 ** 62)) << (bits - 61)) | 1
            num = int(rng.integers(-2 ** 40, 2 ** 40))
            q.append(c + scale * mpq(num, 2 ** 40) * mpq(den >> 1, den))
        m.move_vertex(v, tuple(q))
    for rec in truth["pairs"]:
        d2 = feature_distance(Feature.vertex(rec["vertex"]), Feature.triangle(*rec["triangle"]),
                              m.points)[0]
        rec["dist_d"] = math.sqrt(float(d2)) / d
    truth.update(kind="high-precision", bits=bits)
    return m, truth


def generate_synthetic(spec: SyntheticSpec):
    """Dispatch on ``spec.kind``; returns (mesh, truth)."""
    if spec.kind == "planted-pairs":
        m, truth = planted_pairs(spec.size, spec.k, spec.d, spec.seed)
    elif spec.kind == "parallel-sheets":
        m, truth = parallel_sheets(spec.size, spec.gap, spec.d, spec.seed)
    elif spec.kind == "sliver-band":
        m, truth = sliver_band(spec.size, spec.k, spec.d, spec.seed)
    elif spec.kind == "tetra-soup":
        m, truth = tetra_soup(spec.size, spec.k, spec.d, spec.seed)
    else:
        m, truth = high_precision(spec.size, spec.k, spec.d, spec.seed, spec.bits)
    truth["spec"] = asdict(spec)
    truth["triangles"] = m.n_triangles
    truth["vertices"] = m.n_vertices
    return m, truth


def max_bit_length(m):
    """Largest numerator/denominator bit length over all coordinates."""
    best = 0
    for p in m.points.values():
        for c in p:
            best = max(best, int(c.numerator).bit_length(), int(c.denominator).bit_length())
    return best
