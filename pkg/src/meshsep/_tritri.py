"""Batched triangle-pair intersection with float filters and exact fallback.

Points travel as ``_P`` objects carrying binary64 coordinates and, when
available, the exact rationals in an object array.  Every orientation sign
is first filtered in floats; rows the filter cannot certify are re-evaluated
exactly.  Without exact coordinates such rows stay undecided.
"""
from __future__ import annotations

import numpy as np

from ._fast import EPS, orient3d_batch

_O2 = 8.0 * EPS
_INT3 = 2.0 ** 16
_INT2 = 2.0 ** 25


class _P:
    """Float coordinates ``f`` with optional exact twin ``x`` (same shape)."""
    __slots__ = ("f", "x")

    def __init__(self, f, x=None):
        self.f = f
        self.x = x

    def __getitem__(self, key):
        return _P(self.f[key], None if self.x is None else self.x[key])

    def take(self, idx):
        """Per-row vertex selection from an (N, 3, k) stack."""
        r = np.arange(len(self.f))
        return _P(self.f[r, idx], None if self.x is None else self.x[r, idx])

    def where(self, mask, other):
        f = np.where(mask[:, None], self.f, other.f)
        x = None if self.x is None else np.where(mask[:, None], self.x, other.x)
        return _P(f, x)


def _exact_sign(v):
    return ((v > 0).astype(np.int8) - (v < 0).astype(np.int8)).astype(np.int8)


def _small_int(diffs, limit):
    return np.all((np.abs(diffs) < limit) & (diffs == np.round(diffs)), axis=1)


def orient3(a, b, c, d, ex=None, skip=None):
    """Certified signs of det[a-d, b-d, c-d] over rows of ``_P`` points.

    Rows flagged in ``skip`` are never evaluated exactly; their result is
    meaningless and reported as certain.
    """
    s, cert = orient3d_batch(a.f, b.f, c.f, d.f)
    if skip is not None:
        cert = cert | skip
    if ex is not None and not cert.all():
        diffs = np.concatenate([a.f - d.f, b.f - d.f, c.f - d.f], axis=1)
        cert = cert | (ex & _small_int(diffs, _INT3))
    if a.x is not None and not cert.all():
        r = np.nonzero(~cert)[0]
        ad, bd, cd = a.x[r] - d.x[r], b.x[r] - d.x[r], c.x[r] - d.x[r]
        det = (ad[:, 0] * (bd[:, 1] * cd[:, 2] - bd[:, 2] * cd[:, 1])
               + bd[:, 0] * (cd[:, 1] * ad[:, 2] - cd[:, 2] * ad[:, 1])
               + cd[:, 0] * (ad[:, 1] * bd[:, 2] - ad[:, 2] * bd[:, 1]))
        s = s.copy()
        s[r] = _exact_sign(det)
        cert = np.ones_like(cert)
    return s, cert


def orient2(a, b, c, ex=None):
    """Certified signs of det[a-c, b-c] for projected (N, 2) points."""
    ac, bc = a.f - c.f, b.f - c.f
    det = ac[:, 0] * bc[:, 1] - ac[:, 1] * bc[:, 0]
    ma, mb = np.abs(a.f) + np.abs(c.f), np.abs(b.f) + np.abs(c.f)
    perm = ma[:, 0] * mb[:, 1] + ma[:, 1] * mb[:, 0]
    ok = np.isfinite(det) & (perm > 1e-280) & (perm < 1e280)
    cert = ok & (np.abs(det) > _O2 * perm)
    s = np.sign(det).astype(np.int8)
    if ex is not None and not cert.all():
        cert = cert | (ex & _small_int(np.concatenate([ac, bc], axis=1), _INT2))
    if a.x is not None and not cert.all():
        r = np.nonzero(~cert)[0]
        acx, bcx = a.x[r] - c.x[r], b.x[r] - c.x[r]
        s[r] = _exact_sign(acx[:, 0] * bcx[:, 1] - acx[:, 1] * bcx[:, 0])
        cert = np.ones_like(cert)
    return s, cert


def classify(PA, PB, A, B, ex=None):
    """Decide intersection beyond shared vertices for rows of triangle pairs.

    ``PA``/``PB`` are ``_P`` stacks of shape (n, 3, 3), ``A``/``B`` vertex
    ids, ``ex`` an optional per-row flag saying the floats are exact.
    Returns (known, hit); undecided rows need the scalar kernel.
    """
    n = len(A)
    known = np.zeros(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    if n == 0:
        return known, hit
    eq = A[:, :, None] == B[:, None, :]
    inA, inB = eq.any(axis=2), eq.any(axis=1)
    k = eq.sum(axis=(1, 2))

    sB = np.zeros((n, 3), np.int8)
    cB = np.zeros((n, 3), bool)
    sA = np.zeros((n, 3), np.int8)
    cA = np.zeros((n, 3), bool)
    a0, a1, a2 = PA[:, 0], PA[:, 1], PA[:, 2]
    b0, b1, b2 = PB[:, 0], PB[:, 1], PB[:, 2]
    for j in range(3):
        sB[:, j], cB[:, j] = orient3(a0, a1, a2, PB[:, j], ex, skip=inB[:, j])
        sA[:, j], cA[:, j] = orient3(b0, b1, b2, PA[:, j], ex, skip=inA[:, j])
    # shared vertices lie on both planes
    sB[inB] = 0
    cB[inB] = True
    sA[inA] = 0
    cA[inA] = True

    def one_side(s, c, free):
        pos = np.all(~free | (c & (s > 0)), axis=1)
        neg = np.all(~free | (c & (s < 0)), axis=1)
        return (pos | neg) & free.any(axis=1)

    known |= (one_side(sB, cB, ~inB) | one_side(sA, cA, ~inA)) & (k < 3)
    known |= k == 3
    hit |= k == 3

    # shared edge, apex off the other plane
    known |= (k == 2) & np.all(cB, axis=1) & np.any(~inB & (sB != 0), axis=1)

    allc = cA.all(axis=1) & cB.all(axis=1)
    strict = np.all(sA != 0, axis=1) & np.all(sB != 0, axis=1)
    coplanar = allc & np.all(sB == 0, axis=1)
    rows = np.nonzero((k == 0) & ~known & allc & strict)[0]
    if len(rows):
        kn, ht = _general(PA[rows], PB[rows], sA[rows], sB[rows], _sel(ex, rows))
        known[rows] = kn
        hit[rows] = ht

    rows = np.nonzero((k < 2) & ~known & allc & ~coplanar)[0]
    if len(rows):
        kn, ht = _edges(PA[rows], PB[rows], inA[rows], inB[rows], sA[rows], sB[rows],
                        k[rows], _sel(ex, rows))
        known[rows] = kn
        hit[rows] = ht

    rows = np.nonzero(~known & (k < 3) & coplanar)[0]
    if len(rows):
        kn, ht = _coplanar(PA[rows], PB[rows], A[rows], B[rows], _sel(ex, rows))
        known[rows] = kn
        hit[rows] = ht
    return known, hit


def _sel(ex, rows):
    return None if ex is None else ex[rows]


def _general(PA, PB, sA, sB, ex):
    """Vertex-disjoint pairs where each triangle straddles the other's plane."""
    sa, sb = sA.astype(int), sB.astype(int)
    # rotate so the vertex alone on its side comes first
    la = np.where(sa[:, 0] == sa[:, 1], 2, np.where(sa[:, 0] == sa[:, 2], 1, 0))
    lb = np.where(sb[:, 0] == sb[:, 1], 2, np.where(sb[:, 0] == sb[:, 2], 1, 0))
    p1, q1, r1 = PA.take(la), PA.take((la + 1) % 3), PA.take((la + 2) % 3)
    p2, q2, r2 = PB.take(lb), PB.take((lb + 1) % 3), PB.take((lb + 2) % 3)
    r = np.arange(len(la))
    flip2 = sa[r, la] < 0
    flip1 = sb[r, lb] < 0
    q2, r2 = r2.where(flip2, q2), q2.where(flip2, r2)
    q1, r1 = r1.where(flip1, q1), q1.where(flip1, r1)
    s1, c1 = orient3(p1, q1, p2, q2, ex)
    s2, c2 = orient3(p1, r1, r2, p2, ex)
    return c1 & c2, (s1 <= 0) & (s2 <= 0)


def _seg_tri(p, q, op, oq, T, ex):
    """Closed test of segment pq against triangle T, pq not inside T's plane.

    ``op``/``oq`` are the endpoint signs against T's plane.  Segments lying in
    the plane report no hit; callers rely on neighbouring edges instead.
    """
    op, oq = op.astype(int), oq.astype(int)
    cross = (op * oq <= 0) & ~((op == 0) & (oq == 0))
    s1, k1 = orient3(p, q, T[:, 0], T[:, 1], ex)
    s2, k2 = orient3(p, q, T[:, 1], T[:, 2], ex)
    s3, k3 = orient3(p, q, T[:, 2], T[:, 0], ex)
    s1, s2, s3 = s1.astype(int), s2.astype(int), s3.astype(int)
    same = ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))
    return cross & same, ~cross | (k1 & k2 & k3)


def _edges(PA, PB, inA, inB, sA, sB, k, ex):
    """Non-coplanar pairs: an intersection beyond shared vertices meets an edge.

    With one shared vertex only the two opposite edges can carry it; with
    none every edge is tested.
    """
    n = len(k)
    r = np.arange(n)
    hit = np.zeros(n, bool)
    ok = np.ones(n, bool)
    one = k == 1
    ia = np.argmax(inA, axis=1)
    ib = np.argmax(inB, axis=1)
    for X, Y, sX, iX in ((PA, PB, sA, ia), (PB, PA, sB, ib)):
        for e in range(3):
            # for a shared vertex at index iX, the opposite edge starts at iX + 1
            i = np.where(one, (iX + 1) % 3, e)
            j = (i + 1) % 3
            use = ~one | (e == 0)
            h, c = _seg_tri(X.take(i), X.take(j), sX[r, i], sX[r, j], Y, ex)
            hit |= use & h
            ok &= ~use | c
    return ok, hit


def _project(PA, PB):
    nrm = np.cross(PA.f[:, 1] - PA.f[:, 0], PA.f[:, 2] - PA.f[:, 0])
    drop = np.argmax(np.abs(nrm), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[drop][:, None, :].repeat(3, axis=1)

    def proj(P):
        f = np.take_along_axis(P.f, keep, axis=2)
        x = None if P.x is None else np.take_along_axis(P.x, keep, axis=2)
        return _P(f, x)
    return proj(PA), proj(PB)


def _in_wedge(s, a, b, r, ex):
    """The closed convex wedge at s spanned by a, b contains the ray s->r."""
    w, c1 = orient2(s, a, b, ex)
    x, c2 = orient2(s, a, r, ex)
    y, c3 = orient2(s, r, b, ex)
    w, x, y = w.astype(int), x.astype(int), y.astype(int)
    return (x * w >= 0) & (y * w >= 0), c1 & c2 & c3


def _segments_cross(p, q, r, s, ex):
    """Closed segment intersection; collinear pairs are left undecided."""
    o1, k1 = orient2(p, q, r, ex)
    o2, k2 = orient2(p, q, s, ex)
    o3, k3 = orient2(r, s, p, ex)
    o4, k4 = orient2(r, s, q, ex)
    o1, o2, o3, o4 = (x.astype(int) for x in (o1, o2, o3, o4))
    cert = k1 & k2 & k3 & k4 & ~((o1 == 0) & (o2 == 0))
    return (o1 * o2 <= 0) & (o3 * o4 <= 0), cert


def _in_triangle(p, a, b, c, ex):
    s1, k1 = orient2(a, b, p, ex)
    s2, k2 = orient2(b, c, p, ex)
    s3, k3 = orient2(c, a, p, ex)
    s1, s2, s3 = (x.astype(int) for x in (s1, s2, s3))
    pos = (s1 >= 0) & (s2 >= 0) & (s3 >= 0)
    neg = (s1 <= 0) & (s2 <= 0) & (s3 <= 0)
    return pos | neg, k1 & k2 & k3


def _coplanar(PA, PB, A, B, ex):
    """Coplanar pairs, decided in the projection that drops the normal's largest axis."""
    n = len(A)
    QA, QB = _project(PA, PB)
    known = np.zeros(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    eq = A[:, :, None] == B[:, None, :]
    inA, inB = eq.any(axis=2), eq.any(axis=1)
    k = eq.sum(axis=(1, 2))

    rows = np.nonzero(k == 2)[0]
    if len(rows):
        e = _sel(ex, rows)
        a, b = QA[rows], QB[rows]
        ia = np.argmin(inA[rows], axis=1)
        ib = np.argmin(inB[rows], axis=1)
        u, v = a.take((ia + 1) % 3), a.take((ia + 2) % 3)
        s1, k1 = orient2(u, v, a.take(ia), e)
        s2, k2 = orient2(u, v, b.take(ib), e)
        ok = k1 & k2
        known[rows[ok]] = True
        hit[rows[ok]] = (s1 == s2)[ok]

    rows = np.nonzero(k == 1)[0]
    if len(rows):
        e = _sel(ex, rows)
        a, b = QA[rows], QB[rows]
        ia = np.argmax(inA[rows], axis=1)
        ib = np.argmax(inB[rows], axis=1)
        s = a.take(ia)
        a1, b1 = a.take((ia + 1) % 3), a.take((ia + 2) % 3)
        a2, b2 = b.take((ib + 1) % 3), b.take((ib + 2) % 3)
        ok = np.ones(len(rows), bool)
        res = np.zeros(len(rows), bool)
        for w1, w2, r in ((a1, b1, a2), (a1, b1, b2), (a2, b2, a1), (a2, b2, b1)):
            h, c = _in_wedge(s, w1, w2, r, e)
            ok &= c
            res |= h
        known[rows[ok]] = True
        hit[rows[ok]] = res[ok]

    rows = np.nonzero(k == 0)[0]
    if len(rows):
        e = _sel(ex, rows)
        a, b = QA[rows], QB[rows]
        ok = np.ones(len(rows), bool)
        res = np.zeros(len(rows), bool)
        for i in range(3):
            for j in range(3):
                h, c = _segments_cross(a[:, i], a[:, (i + 1) % 3], b[:, j], b[:, (j + 1) % 3], e)
                ok &= c
                res |= h
        for p, t in ((a[:, 0], b), (b[:, 0], a)):
            h, c = _in_triangle(p, t[:, 0], t[:, 1], t[:, 2], e)
            ok &= c
            res |= h
        known[rows[ok]] = True
        hit[rows[ok]] = res[ok]
    return known, hit
