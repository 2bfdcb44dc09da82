"""Exact measurement of the first-order distance error for a random step."""
import itertools
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np

from meshsep.kernel import Feature
from meshsep.mesh import build_mesh
from meshsep.proximity import make_pair
from oracles import point_triangle_d2, segment_segment_d2

getcontext().prec = 60
D = 1e-6


def _maxmin(rows):
    """max over (l, m) of min_k (c_k + l p_k + m q_k), by vertex enumeration."""
    best = None
    for tri in itertools.combinations(rows, 3):
        # t = c + l p + m q for the three rows
        M = [[Fraction(1), -p, -q] for _, p, q in tri]
        rhs = [c for c, _, _ in tri]
        det = _det(M)
        if det == 0:
            continue
        sol = []
        for k in range(3):
            Mk = [r[:k] + [rhs[i]] + r[k + 1:] for i, r in enumerate(M)]
            sol.append(_det(Mk) / det)
        t, l, mm = sol
        if all(c + l * p + mm * q >= t for c, p, q in rows):
            best = t if best is None else max(best, t)
    return best


def _det(M):
    (a, b, c), (d, e, f), (g, h, i) = M
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def lin_error(rng, kind, delta):
    """|true distance - linearized distance| after a random displacement of size delta.

    The pair is a vertex over a unit triangle ("vt") or two crossing edges
    ("ee") at distance d; the linearized value maximizes the minimum of the
    per-vertex-pair rows over the frame variables l, m, solved exactly.
    """
    s = Fraction(D)
    if kind == "vt":
        A = [(Fraction(1, 4) + Fraction(int(rng.integers(-50, 50)), 1000),
              Fraction(1, 4) + Fraction(int(rng.integers(-50, 50)), 1000), s)]
        B = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
    else:
        A = [(-1, Fraction(int(rng.integers(-100, 100)), 1000), s), (1, Fraction(int(rng.integers(-100, 100)), 1000), s)]
        B = [(Fraction(int(rng.integers(-100, 100)), 1000), -1, 0), (Fraction(int(rng.integers(-100, 100)), 1000), 1, 0)]
    A = [tuple(Fraction(c) for c in p) for p in A]
    B = [tuple(Fraction(c) for c in p) for p in B]
    dirs = rng.normal(size=(len(A) + len(B), 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    vel = [tuple(Fraction(float(c)) for c in x) for x in dirs]
    if kind == "vt":
        pts = A + B
        m = build_mesh(pts + [(5, 5, 5), (5, 6, 5)], [(1, 2, 3), (0, 4, 5)])
        fp_ = make_pair(Feature("vertex", (0,)), Feature("triangle", (1, 2, 3)), m.points)
    else:
        pts = A + B
        m = build_mesh(pts + [(9, 9, 9), (9, 8, 9)], [(0, 1, 4), (2, 3, 5)])
        fp_ = make_pair(Feature("edge", (0, 1)), Feature("edge", (2, 3)), m.points)
    u, v, w = ([Fraction(x) for x in f] for f in (fp_.frame.u, fp_.frame.v, fp_.frame.w))
    rows = []
    na = len(A)
    for ia, ib in itertools.product(range(na), range(len(B))):
        a, b = A[ia], B[ib]
        da, db = vel[ia], vel[na + ib]
        diff = [y - x for x, y in zip(a, b)]
        c = sum(p * q for p, q in zip(u, diff)) + delta * sum(p * (y - x) for p, x, y in zip(u, da, db))
        rows.append((c, sum(p * q for p, q in zip(v, diff)), sum(p * q for p, q in zip(w, diff))))
    lin = _maxmin(rows)
    A2 = [tuple(x + delta * y for x, y in zip(p, dv)) for p, dv in zip(A, vel[:na])]
    B2 = [tuple(x + delta * y for x, y in zip(p, dv)) for p, dv in zip(B, vel[na:])]
    true2 = point_triangle_d2(A2[0], *B2) if kind == "vt" else segment_segment_d2(*A2, *B2)
    true = Decimal(true2.numerator) / Decimal(true2.denominator)
    return abs(float(true.sqrt() - Decimal(lin.numerator) / Decimal(lin.denominator)))
