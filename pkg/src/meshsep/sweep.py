"""Exact continuous contact test for linearly moving feature pairs.

Each vertex moves as ``x + t * x'`` for ``t`` in [0, 1].  Two disjoint
features can first touch only when their four defining points become
coplanar, i.e. at a real root of a cubic in ``t``.  Roots are isolated with
Sturm sequences over the rationals and the touching condition is evaluated
by exact sign determination at each (possibly irrational) root.
"""
from __future__ import annotations

from gmpy2 import mpq

ZERO = mpq(0)
_MAX_REFINE = 400


def _trim(p):
    p = list(p)
    while p and p[-1] == 0:
        p.pop()
    return p


def padd(a, b):
    n = max(len(a), len(b))
    return _trim([(a[i] if i < len(a) else ZERO) + (b[i] if i < len(b) else ZERO) for i in range(n)])


def pneg(a):
    return [-c for c in a]


def psub(a, b):
    return padd(a, pneg(b))


def pmul(a, b):
    if not a or not b:
        return []
    out = [ZERO] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return _trim(out)


def peval(p, x):
    r = ZERO
    for c in reversed(p):
        r = r * x + c
    return r


def deg(p):
    return len(p) - 1


def pderiv(p):
    return _trim([p[i] * i for i in range(1, len(p))])


def pdivmod(a, b):
    a = _trim(a)
    b = _trim(b)
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    if len(a) < len(b):
        return [], a
    q = [ZERO] * (len(a) - len(b) + 1)
    r = list(a)
    lead = b[-1]
    for k in range(len(q) - 1, -1, -1):
        c = r[k + len(b) - 1] / lead
        q[k] = c
        if c != 0:
            for j, y in enumerate(b):
                r[k + j] -= c * y
    return _trim(q), _trim(r[:len(b) - 1])


def pgcd(a, b):
    a, b = _trim(a), _trim(b)
    while b:
        a, b = b, pdivmod(a, b)[1]
    if not a:
        return []
    return [c / a[-1] for c in a]


def squarefree(p):
    p = _trim(p)
    if deg(p) < 1:
        return p
    g = pgcd(p, pderiv(p))
    return pdivmod(p, g)[0] if deg(g) >= 1 else p


def sturm_sequence(p):
    seq = [p, pderiv(p)]
    while deg(seq[-1]) >= 1:
        r = pdivmod(seq[-2], seq[-1])[1]
        if not r:
            break
        seq.append(pneg(r))
    return seq


def _variations(seq, x):
    signs = []
    for s in seq:
        v = peval(s, x)
        if v != 0:
            signs.append(v > 0)
    return sum(1 for i in range(1, len(signs)) if signs[i] != signs[i - 1])


def count_roots(seq, a, b):
    """Distinct roots in (a, b); requires seq[0](a) and seq[0](b) nonzero."""
    return _variations(seq, a) - _variations(seq, b)


def real_roots(p, lo, hi):
    """Roots of p in [lo, hi] as ('exact', r) or ('interval', a, b) records.

    Interval records bracket exactly one root of the returned square-free
    polynomial, which is attached as the last element.
    """
    p = squarefree(p)
    out = []
    if deg(p) < 1:
        return out
    for x in (lo, hi):
        while deg(p) >= 1 and peval(p, x) == 0:
            out.append(("exact", x))
            p = pdivmod(p, [-x, mpq(1)])[0]
    if deg(p) < 1:
        return out
    seq = sturm_sequence(p)
    stack = [(lo, hi)]
    found = []
    while stack:
        a, b = stack.pop()
        n = count_roots(seq, a, b)
        if n == 0:
            continue
        if n == 1:
            found.append(("interval", a, b, p))
            continue
        m = (a + b) / 2
        if peval(p, m) == 0:
            rest = pdivmod(p, [-m, mpq(1)])[0]
            return out + [("exact", m)] + real_roots(rest, lo, hi)
        stack.append((a, m))
        stack.append((m, b))
    return out + found


def _sign(x):
    return (x > 0) - (x < 0)


def sign_at_root(g, root):
    """Exact sign of polynomial g at a root record from ``real_roots``.

    Returns None if refinement gives up (caller treats as unknown).
    """
    g = _trim(g)
    if not g:
        return 0
    if root[0] == "exact":
        return _sign(peval(g, root[1]))
    _, a, b, p = root
    h = pgcd(p, g)
    if deg(h) >= 1 and _sign(peval(h, a)) * _sign(peval(h, b)) < 0:
        return 0
    gs = squarefree(g)
    gseq = sturm_sequence(gs) if deg(gs) >= 1 else None
    pa = _sign(peval(p, a))
    for _ in range(_MAX_REFINE):
        ga, gb = peval(gs, a), peval(gs, b)
        if ga != 0 and gb != 0 and (gseq is None or count_roots(gseq, a, b) == 0):
            return _sign(peval(g, a)) if peval(g, a) != 0 else _sign(peval(g, b))
        m = (a + b) / 2
        pm = _sign(peval(p, m))
        if pm == 0:
            return _sign(peval(g, m))
        if pm == pa:
            a = m
        else:
            b = m
    return None


# ---------------------------------------------------------------------------
# contact conditions

def _lin(x, v):
    return [[x[k], v[k]] for k in range(3)]


def _vsub(a, b):
    return [psub(a[k], b[k]) for k in range(3)]


def _vcross(a, b):
    return [psub(pmul(a[1], b[2]), pmul(a[2], b[1])),
            psub(pmul(a[2], b[0]), pmul(a[0], b[2])),
            psub(pmul(a[0], b[1]), pmul(a[1], b[0]))]


def _vdot(a, b):
    return padd(padd(pmul(a[0], b[0]), pmul(a[1], b[1])), pmul(a[2], b[2]))


def _coplanarity(p0, p1, p2, p3):
    return _vdot(_vsub(p1, p0), _vcross(_vsub(p2, p0), _vsub(p3, p0)))


def _all_nonneg(polys, root):
    for g in polys:
        s = sign_at_root(g, root)
        if s is None:
            return None
        if s < 0:
            return False
    return True


def _vertex_triangle_touch(P, T, root):
    a, b, c = T
    n = _vcross(_vsub(b, a), _vsub(c, a))
    nn = _vdot(n, n)
    s = sign_at_root(nn, root)
    if s is None or s == 0:
        return True
    conds = []
    for i in range(3):
        e = _vsub(T[(i + 1) % 3], T[i])
        conds.append(_vdot(_vcross(e, _vsub(P, T[i])), n))
    r = _all_nonneg(conds, root)
    return True if r is None else r


def _edge_edge_touch(A0, A1, B0, B1, root):
    ea, eb = _vsub(A1, A0), _vsub(B1, B0)
    n = _vcross(ea, eb)
    nn = _vdot(n, n)
    s = sign_at_root(nn, root)
    if s is None or s == 0:
        return True
    w = _vsub(B0, A0)
    sa = _vdot(_vcross(w, eb), n)
    sb = _vdot(_vcross(w, ea), n)
    r = _all_nonneg([sa, psub(nn, sa), sb, psub(nn, sb)], root)
    return True if r is None else r


def swept_contact(A_pts, A_vel, B_pts, B_vel) -> bool:
    """True if the moving features touch for some t in [0, 1].

    Supports vertex-triangle (1 + 3 points, either order) and edge-edge
    (2 + 2 points).  Degenerate motions where the four points stay coplanar
    for all t are reported as contact, which is the conservative answer.
    """
    A = [_lin(x, v) for x, v in zip(A_pts, A_vel)]
    B = [_lin(x, v) for x, v in zip(B_pts, B_vel)]
    if len(A) == 3 and len(B) == 1:
        A, B = B, A
    pts = A + B
    if len(pts) != 4 or len(A) == 4 or len(A) == 0:
        raise ValueError("swept_contact needs vertex-triangle or edge-edge features")
    f = _coplanarity(*pts)
    if not f:
        return True
    for root in real_roots(f, ZERO, mpq(1)):
        if len(A) == 1:
            touch = _vertex_triangle_touch(A[0], B, root)
        else:
            touch = _edge_edge_touch(A[0], A[1], B[0], B[1], root)
        if touch:
            return True
    return False
