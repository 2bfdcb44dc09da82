"""Vectorized binary64 filters.

Every routine here is a *filter*: it either certifies an answer with a
rigorous rounding-error bound or reports that exact evaluation is needed.
"""
from __future__ import annotations

import numpy as np

EPS = 2.0 ** -53
_O3 = 32.0 * EPS


def orient3d_batch(a, b, c, d):
    """Signs of det[a-d, b-d, c-d] for (N, 3) arrays; ``certain`` marks trusted signs."""
    ad = a - d
    bd = b - d
    cd = c - d
    det = (ad[:, 0] * (bd[:, 1] * cd[:, 2] - bd[:, 2] * cd[:, 1])
           + bd[:, 0] * (cd[:, 1] * ad[:, 2] - cd[:, 2] * ad[:, 1])
           + cd[:, 0] * (ad[:, 1] * bd[:, 2] - ad[:, 2] * bd[:, 1]))
    ma = np.abs(a) + np.abs(d)
    mb = np.abs(b) + np.abs(d)
    mc = np.abs(c) + np.abs(d)
    perm = (ma[:, 0] * (mb[:, 1] * mc[:, 2] + mb[:, 2] * mc[:, 1])
            + mb[:, 0] * (mc[:, 1] * ma[:, 2] + mc[:, 2] * ma[:, 1])
            + mc[:, 0] * (ma[:, 1] * mb[:, 2] + ma[:, 2] * mb[:, 1]))
    ok = np.isfinite(det) & (perm > 1e-280) & (perm < 1e280)
    certain = ok & (np.abs(det) > _O3 * perm)
    return np.sign(det).astype(np.int8), certain


def _dot(x, y):
    return np.einsum("ij,ij->i", x, y)


def closest_point_triangle(p, a, b, c):
    """Approximate closest points on triangles (used only to pick directions)."""
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.nan_to_num(d1 / (d1 - d3))
        t_ac = np.nan_to_num(d2 / (d2 - d6))
        t_bc = np.nan_to_num((d4 - d3) / ((d4 - d3) + (d5 - d6)))
        denom = va + vb + vc
        v = np.nan_to_num(vb / denom)
        w = np.nan_to_num(vc / denom)
    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [a, b, a + ab * t_ab[:, None], c, a + ac * t_ac[:, None],
               b + (c - b) * t_bc[:, None]]
    face = a + ab * v[:, None] + ac * w[:, None]
    out = face.copy()
    taken = np.zeros(len(p), dtype=bool)
    for cond, ch in zip(conds, choices):
        m = cond & ~taken
        out[m] = ch[m]
        taken |= m
    return out


def closest_points_segments(p1, q1, p2, q2):
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e = _dot(d1, d1), _dot(d2, d2)
    f, c, b = _dot(d2, r), _dot(d1, r), _dot(d1, d2)
    denom = a * e - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-300, np.clip((b * f - c * e) / denom, 0, 1), 0.0)
        t = (b * s + f) / e
        lo = t < 0
        hi = t > 1
        s = np.where(lo, np.clip(-c / a, 0, 1), s)
        s = np.where(hi, np.clip((b - c) / a, 0, 1), s)
        t = np.clip(t, 0, 1)
    s = np.nan_to_num(s)
    t = np.nan_to_num(t)
    return p1 + d1 * s[:, None], p2 + d2 * t[:, None]


def distance_lower_bound(A, B, cutoff=None):
    """Certified lower bounds on the distance between convex hulls.

    ``A`` and ``B`` are lists of (N, 3) arrays holding each feature's
    vertices.  The bound is the larger of the bounding-box gap and the
    projection gap along the approximate closest-point direction, minus a
    rounding margin.  Any unit direction yields a valid bound.  Rows whose
    box bound already exceeds ``cutoff`` skip the projection step.
    """
    def bounds(F):
        lo, hi = F[0], F[0]
        for f in F[1:]:
            lo = np.minimum(lo, f)
            hi = np.maximum(hi, f)
        return lo, hi

    alo, ahi = bounds(A)
    blo, bhi = bounds(B)
    mag = np.maximum(np.maximum(-alo, ahi), np.maximum(-blo, bhi)).max(axis=1)
    margin = 64.0 * EPS * mag + 1e-300
    box_gap = np.maximum(np.maximum(blo - ahi, alo - bhi), 0.0)
    box_gap = np.sqrt(np.einsum("ij,ij->i", box_gap, box_gap))
    out = np.maximum(box_gap * (1.0 - 1e-12) - margin, 0.0)
    rows = np.arange(len(out)) if cutoff is None else np.nonzero(out <= cutoff)[0]
    if len(rows) == 0:
        return out
    A = [a[rows] for a in A]
    B = [b[rows] for b in B]
    if len(A) == 1 and len(B) == 3:
        p = A[0]
        q = closest_point_triangle(p, *B)
    elif len(A) == 2 and len(B) == 2:
        p, q = closest_points_segments(A[0], A[1], B[0], B[1])
    else:
        raise ValueError("unsupported feature shapes")
    n = q - p
    nn = np.sqrt(_dot(n, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        n = n / nn[:, None]
    proj_a = np.max([_dot(a, n) for a in A], axis=0)
    proj_b = np.min([_dot(b, n) for b in B], axis=0)
    gap = np.nan_to_num((proj_b - proj_a) * (1.0 - 1e-12), nan=0.0)
    gap = np.where(nn > 0, gap, 0.0)
    out[rows] = np.maximum(np.maximum(gap - margin[rows], 0.0), out[rows])
    return out


def box_pairs(lo, hi, pad=0.0):
    """All index pairs (i < j) whose boxes overlap after growing one by ``pad``.

    Sweep-and-prune along the axis of largest spread, fully vectorized.
    """
    n = len(lo)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    axis = int(np.argmax(hi.max(axis=0) - lo.min(axis=0)))
    order = np.argsort(lo[:, axis], kind="stable")
    L, H = lo[order], hi[order]
    Hp = np.nextafter(H + pad, np.inf)
    end = np.searchsorted(L[:, axis], Hp[:, axis], side="right")
    start = np.arange(n) + 1
    counts = np.maximum(end - start, 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((0, 2), dtype=np.int64)
    i = np.repeat(np.arange(n), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    j = i + 1 + offs
    ok = np.all((L[j] <= Hp[i]) & (L[i] <= Hp[j]), axis=1)
    a, b = order[i[ok]], order[j[ok]]
    return np.column_stack([np.minimum(a, b), np.maximum(a, b)])


def point_box_pairs(pts, lo, hi, pad=0.0):
    """(point index, box index) pairs with the point inside the box grown by ``pad``."""
    if len(pts) == 0 or len(lo) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    axis = int(np.argmax(hi.max(axis=0) - lo.min(axis=0)))
    order = np.argsort(pts[:, axis], kind="stable")
    key = pts[order, axis]
    lp = np.nextafter(lo - pad, -np.inf)
    hp = np.nextafter(hi + pad, np.inf)
    start = np.searchsorted(key, lp[:, axis], side="left")
    end = np.searchsorted(key, hp[:, axis], side="right")
    counts = np.maximum(end - start, 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((0, 2), dtype=np.int64)
    b = np.repeat(np.arange(len(lo)), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    p = order[np.repeat(start, counts) + offs]
    ok = np.all((pts[p] >= lp[b]) & (pts[p] <= hp[b]), axis=1)
    return np.column_stack([p[ok], b[ok]])
