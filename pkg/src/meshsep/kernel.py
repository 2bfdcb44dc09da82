"""Exact geometric primitives over rational coordinates.

Points are 3-tuples of ``gmpy2.mpq``.  Sign predicates first try a
floating-point evaluation guarded by a magnitude-based error bound and fall
back to rational arithmetic when the bound cannot certify the sign, so every
answer is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from gmpy2 import mpq

from .errors import (
    CoincidentPoints,
    DegenerateEdge,
    DegenerateTriangle,
    SharedVertex,
    UnsupportedPair,
)

EPS = 2.0 ** -53
_O3_BOUND = 32.0 * EPS
_O2_BOUND = 16.0 * EPS
_TINY = 1e-280
ZERO = mpq(0)
ONE = mpq(1)


def exact(x) -> mpq:
    """Lift an int, float, Fraction, mpq or decimal/rational string to mpq."""
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


def point(x, y, z) -> tuple:
    return (exact(x), exact(y), exact(z))


def fpoint(p) -> tuple:
    return (float(p[0]), float(p[1]), float(p[2]))


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


def dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def norm2(a):
    return dot(a, a)


def _sgn(x) -> int:
    return (x > 0) - (x < 0)


# ---------------------------------------------------------------------------
# orientation predicates

def _orient3d_float(fa, fb, fc, fd):
    adx, ady, adz = fa[0] - fd[0], fa[1] - fd[1], fa[2] - fd[2]
    bdx, bdy, bdz = fb[0] - fd[0], fb[1] - fd[1], fb[2] - fd[2]
    cdx, cdy, cdz = fc[0] - fd[0], fc[1] - fd[1], fc[2] - fd[2]
    det = (adx * (bdy * cdz - bdz * cdy)
           + bdx * (cdy * adz - cdz * ady)
           + cdx * (ady * bdz - adz * bdy))
    # magnitudes of the un-cancelled inputs bound conversion and rounding error
    ax, ay, az = abs(fa[0]) + abs(fd[0]), abs(fa[1]) + abs(fd[1]), abs(fa[2]) + abs(fd[2])
    bx, by, bz = abs(fb[0]) + abs(fd[0]), abs(fb[1]) + abs(fd[1]), abs(fb[2]) + abs(fd[2])
    cx, cy, cz = abs(fc[0]) + abs(fd[0]), abs(fc[1]) + abs(fd[1]), abs(fc[2]) + abs(fd[2])
    perm = ax * (by * cz + bz * cy) + bx * (cy * az + cz * ay) + cx * (ay * bz + az * by)
    if not (_TINY < perm < 1e280):
        return None
    if det > _O3_BOUND * perm:
        return 1
    if det < -_O3_BOUND * perm:
        return -1
    return None


def orient3d_exact(a, b, c, d) -> int:
    ad, bd, cd = sub(a, d), sub(b, d), sub(c, d)
    return _sgn(dot(ad, cross(bd, cd)))


def orient3d(a, b, c, d) -> int:
    """Sign of det[a-d, b-d, c-d]; zero iff the four points are coplanar."""
    s = _orient3d_float(fpoint(a), fpoint(b), fpoint(c), fpoint(d))
    if s is not None:
        return s
    return orient3d_exact(a, b, c, d)


def _orient2d_float(a, b, c):
    acx, acy = a[0] - c[0], a[1] - c[1]
    bcx, bcy = b[0] - c[0], b[1] - c[1]
    det = acx * bcy - acy * bcx
    perm = (abs(a[0]) + abs(c[0])) * (abs(b[1]) + abs(c[1])) + \
        (abs(a[1]) + abs(c[1])) * (abs(b[0]) + abs(c[0]))
    if not (_TINY < perm < 1e280):
        return None
    if det > _O2_BOUND * perm:
        return 1
    if det < -_O2_BOUND * perm:
        return -1
    return None


def orient2d(a, b, c) -> int:
    s = _orient2d_float((float(a[0]), float(a[1])), (float(b[0]), float(b[1])),
                        (float(c[0]), float(c[1])))
    if s is not None:
        return s
    return _sgn((a[0] - c[0]) * (b[1] - c[1]) - (a[1] - c[1]) * (b[0] - c[0]))


def _drop_axis(n) -> int:
    ax = [abs(n[0]), abs(n[1]), abs(n[2])]
    return ax.index(max(ax))


def _project(p, axis):
    if axis == 0:
        return (p[1], p[2])
    if axis == 1:
        return (p[0], p[2])
    return (p[0], p[1])


def is_degenerate(a, b, c) -> bool:
    n = cross(sub(b, a), sub(c, a))
    return n[0] == 0 and n[1] == 0 and n[2] == 0


def _check_triangle(t):
    if is_degenerate(*t):
        raise DegenerateTriangle(f"collinear triangle {t!r}")


# ---------------------------------------------------------------------------
# 2D helpers (coplanar configurations, already projected)

def _on_segment_2d(a, b, p) -> bool:
    # p collinear with ab
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _seg_seg_2d(a, b, c, d) -> bool:
    d1 = orient2d(c, d, a)
    d2 = orient2d(c, d, b)
    d3 = orient2d(a, b, c)
    d4 = orient2d(a, b, d)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    if d1 == 0 and _on_segment_2d(c, d, a):
        return True
    if d2 == 0 and _on_segment_2d(c, d, b):
        return True
    if d3 == 0 and _on_segment_2d(a, b, c):
        return True
    if d4 == 0 and _on_segment_2d(a, b, d):
        return True
    return False


def _point_in_tri_2d(p, t) -> bool:
    o1 = orient2d(t[0], t[1], p)
    o2 = orient2d(t[1], t[2], p)
    o3 = orient2d(t[2], t[0], p)
    has_pos = o1 > 0 or o2 > 0 or o3 > 0
    has_neg = o1 < 0 or o2 < 0 or o3 < 0
    return not (has_pos and has_neg)


def _seg_tri_2d(p, q, t) -> bool:
    if _point_in_tri_2d(p, t) or _point_in_tri_2d(q, t):
        return True
    return any(_seg_seg_2d(p, q, t[i], t[(i + 1) % 3]) for i in range(3))


def _tri_tri_2d(t1, t2) -> bool:
    for i in range(3):
        for j in range(3):
            if _seg_seg_2d(t1[i], t1[(i + 1) % 3], t2[j], t2[(j + 1) % 3]):
                return True
    return _point_in_tri_2d(t1[0], t2) or _point_in_tri_2d(t2[0], t1)


# ---------------------------------------------------------------------------
# triangle intersection

def segment_triangle_intersect(p, q, t) -> bool:
    """Closed segment pq against closed triangle t."""
    op = orient3d(t[0], t[1], t[2], p)
    oq = orient3d(t[0], t[1], t[2], q)
    if op * oq > 0:
        return False
    if op == 0 and oq == 0:
        axis = _drop_axis(cross(sub(t[1], t[0]), sub(t[2], t[0])))
        return _seg_tri_2d(_project(p, axis), _project(q, axis), [_project(x, axis) for x in t])
    s1 = orient3d(p, q, t[0], t[1])
    s2 = orient3d(p, q, t[1], t[2])
    s3 = orient3d(p, q, t[2], t[0])
    return not ((s1 > 0 or s2 > 0 or s3 > 0) and (s1 < 0 or s2 < 0 or s3 < 0))


def _closed_tri_tri(t1, t2) -> bool:
    o2 = [orient3d(t1[0], t1[1], t1[2], x) for x in t2]
    if all(o > 0 for o in o2) or all(o < 0 for o in o2):
        return False
    o1 = [orient3d(t2[0], t2[1], t2[2], x) for x in t1]
    if all(o > 0 for o in o1) or all(o < 0 for o in o1):
        return False
    if all(o == 0 for o in o2):
        axis = _drop_axis(cross(sub(t1[1], t1[0]), sub(t1[2], t1[0])))
        return _tri_tri_2d([_project(x, axis) for x in t1], [_project(x, axis) for x in t2])
    for i in range(3):
        if segment_triangle_intersect(t1[i], t1[(i + 1) % 3], t2):
            return True
        if segment_triangle_intersect(t2[i], t2[(i + 1) % 3], t1):
            return True
    return False


def _edge_from_apex_enters(s, b, t, j) -> bool:
    """Does segment [s, b] meet triangle t (whose vertex j is s) beyond s?"""
    t1, t2 = t[(j + 1) % 3], t[(j + 2) % 3]
    if orient3d(s, t1, t2, b) != 0:
        return False
    axis = _drop_axis(cross(sub(t1, s), sub(t2, s)))
    s2, a2, c2, b2 = (_project(x, axis) for x in (s, t1, t2, b))
    o = orient2d(s2, a2, c2)
    return orient2d(s2, a2, b2) * o >= 0 and orient2d(s2, b2, c2) * o >= 0


def _shared_vertex_tri_tri(t1, t2, i, j) -> bool:
    for (ta, tb, ia, ib) in ((t1, t2, i, j), (t2, t1, j, i)):
        s = ta[ia]
        opp = (ta[(ia + 1) % 3], ta[(ia + 2) % 3])
        if segment_triangle_intersect(opp[0], opp[1], tb):
            return True
        for b in opp:
            if _edge_from_apex_enters(s, b, tb, ib):
                return True
    return False


def _shared_edge_tri_tri(t1, t2, shared) -> bool:
    (i0, j0), (i1, j1) = shared
    a = t1[3 - i0 - i1]
    b = t2[3 - j0 - j1]
    s0, s1 = t1[i0], t1[i1]
    if orient3d(s0, s1, a, b) != 0:
        return False
    axis = _drop_axis(cross(sub(s1, s0), sub(a, s0)))
    p0, p1, pa, pb = (_project(x, axis) for x in (s0, s1, a, b))
    return orient2d(p0, p1, pa) == orient2d(p0, p1, pb)


def triangles_intersect(t1, t2, shared=(), check=True) -> bool:
    """Exact triangle-triangle intersection test.

    ``shared`` lists index pairs ``(i, j)`` meaning ``t1[i]`` and ``t2[j]`` are
    the same mesh vertex; contact confined to the shared vertex or edge does
    not count.  Without ``shared`` the closed triangles are tested.
    """
    if check:
        _check_triangle(t1)
        _check_triangle(t2)
    shared = list(shared)
    if not shared:
        return _closed_tri_tri(t1, t2)
    if len(shared) == 1:
        return _shared_vertex_tri_tri(t1, t2, *shared[0])
    if len(shared) == 2:
        return _shared_edge_tri_tri(t1, t2, shared)
    return True


# ---------------------------------------------------------------------------
# features and distances

VERTEX, EDGE, TRIANGLE = "vertex", "edge", "triangle"
_ARITY = {VERTEX: 1, EDGE: 2, TRIANGLE: 3}


@dataclass(frozen=True)
class Feature:
    kind: str
    ids: tuple

    def __post_init__(self):
        if _ARITY.get(self.kind) != len(self.ids):
            raise ValueError(f"{self.kind} needs {_ARITY.get(self.kind)} ids, got {self.ids}")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f"repeated vertex ids in {self.ids}")

    @classmethod
    def vertex(cls, i):
        return cls(VERTEX, (i,))

    @classmethod
    def edge(cls, i, j):
        return cls(EDGE, tuple(sorted((i, j))))

    @classmethod
    def triangle(cls, i, j, k):
        return cls(TRIANGLE, tuple(sorted((i, j, k))))

    def disjoint(self, other) -> bool:
        return not set(self.ids) & set(other.ids)


def closest_point_triangle(p, a, b, c):
    """Closest point of the closed triangle abc to p (unique)."""
    ab, ac, ap = sub(b, a), sub(c, a), sub(p, a)
    d1, d2 = dot(ab, ap), dot(ac, ap)
    if d1 <= 0 and d2 <= 0:
        return a
    bp = sub(p, b)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    if d3 >= 0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        return add(a, scale(ab, d1 / (d1 - d3)))
    cp = sub(p, c)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    if d6 >= 0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        return add(a, scale(ac, d2 / (d2 - d6)))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        return add(b, scale(sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6))))
    denom = va + vb + vc
    return add(a, add(scale(ab, vb / denom), scale(ac, vc / denom)))


def _clamp01(x):
    return ZERO if x < 0 else ONE if x > 1 else x


def closest_points_segments(a0, a1, b0, b1):
    """Closest points (p on a0a1, q on b0b1), lexicographically smallest on ties."""
    ea, eb, r = sub(a1, a0), sub(b1, b0), sub(a0, b0)
    aa, bb, ab = dot(ea, ea), dot(eb, eb), dot(ea, eb)
    if aa == 0 or bb == 0:
        raise DegenerateEdge("edge endpoints coincide")
    ar, br = dot(ea, r), dot(eb, r)
    cands = []
    denom = aa * bb - ab * ab
    if denom != 0:
        s = (ab * br - bb * ar) / denom
        t = (aa * br - ab * ar) / denom
        if 0 <= s <= 1 and 0 <= t <= 1:
            cands.append((s, t))
    for s in (ZERO, ONE):
        cands.append((s, _clamp01((ab * s + br) / bb)))
    for t in (ZERO, ONE):
        cands.append((_clamp01((ab * t - ar) / aa), t))
    best = None
    for s, t in cands:
        p = add(a0, scale(ea, s))
        q = add(b0, scale(eb, t))
        key = (norm2(sub(q, p)), p, q)
        if best is None or key < best:
            best = key
    return best[1], best[2]


def _feature_points(f, positions):
    return [positions[i] for i in f.ids]


def feature_distance(A: Feature, B: Feature, positions):
    """Exact squared distance and closest points ``(dist2, p, q)``, p in A, q in B.

    The distance itself is ``sqrt(dist2)``; it is usually irrational, so the
    squared value is what stays exact.
    """
    if not A.disjoint(B):
        raise SharedVertex(f"{A} and {B} share a vertex")
    kinds = (A.kind, B.kind)
    if kinds == (VERTEX, TRIANGLE):
        p = positions[A.ids[0]]
        q = closest_point_triangle(p, *_feature_points(B, positions))
    elif kinds == (TRIANGLE, VERTEX):
        q = positions[B.ids[0]]
        p = closest_point_triangle(q, *_feature_points(A, positions))
    elif kinds == (EDGE, EDGE):
        a0, a1 = _feature_points(A, positions)
        b0, b1 = _feature_points(B, positions)
        if (a0, a1) > (a1, a0):
            a0, a1 = a1, a0
        if (b0, b1) > (b1, b0):
            b0, b1 = b1, b0
        p, q = closest_points_segments(a0, a1, b0, b1)
        # symmetric tie-breaking: same (p, q) set whichever side is first
        p2, q2 = closest_points_segments(b0, b1, a0, a1)
        if (q2, p2) < (p, q):
            p, q = q2, p2
    else:
        raise UnsupportedPair(f"unsupported feature pair {kinds}")
    return norm2(sub(q, p)), p, q


def vertex_edge_projection(v, t, h):
    """Projection of v onto segment th when it falls strictly inside, else None."""
    e = sub(h, t)
    ee = norm2(e)
    if ee == 0:
        raise DegenerateEdge("edge endpoints coincide")
    lam = dot(sub(v, t), e) / ee
    if not (0 < lam < 1):
        return None
    p = add(t, scale(e, lam))
    return p, norm2(sub(v, p))


# ---------------------------------------------------------------------------
# frames

@dataclass(frozen=True)
class Frame:
    u: tuple
    v: tuple
    w: tuple


def _fnorm(x):
    return math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])


def _fcross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def closest_frame(p, q) -> Frame:
    """Orthonormal right-handed frame with u along q - p (binary64)."""
    diff = sub(q, p)
    big = max(abs(diff[0]), abs(diff[1]), abs(diff[2]))
    if big == 0:
        raise CoincidentPoints("closest points coincide; features intersect")
    d = tuple(float(c / big) for c in diff)
    n = _fnorm(d)
    u = (d[0] / n, d[1] / n, d[2] / n)
    k = min(range(3), key=lambda i: abs(u[i]))
    axis = [0.0, 0.0, 0.0]
    axis[k] = 1.0
    v = _fcross(u, axis)
    nv = _fnorm(v)
    v = (v[0] / nv, v[1] / nv, v[2] / nv)
    w = _fcross(u, v)
    nw = _fnorm(w)
    w = (w[0] / nw, w[1] / nw, w[2] / nw)
    return Frame(u, v, w)
