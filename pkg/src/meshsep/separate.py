"""Expansion and optimization: LP-driven vertex displacement.

Every close pair contributes one linear inequality per (vertex of A, vertex
of B) combination: the first-order distance along the pair's frame

    u.(b - a) + u.(b' - a') + (l v + m w).(b - a)

must reach the target.  Displacements a' live in units of d.  Positions
stay exact rationals; the binary64 LP solution is added exactly.
"""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field

from gmpy2 import mpq

from . import lp as lpmod
from .errors import InsufficientSeparation, MaxIterations
from .kernel import exact, sub
from .lp import GE, LpBuilder, ScalingConfig
from .mesh import Mesh, local_intersections
from .proximity import build_octree, close_pairs
from .report import StageReport, displacement_stats
from .sweep import swept_contact

log = logging.getLogger(__name__)

B_CONST = 1e3
MARGIN = 1e-2
OPT_MARGIN = 1e-3
TIE_BREAK = 0.1
LM_BOUND = 1e-3
MAX_ITER = 64
CLOSE_FACTOR2 = 12  # (2 sqrt 3)^2


def close_threshold2(d):
    d = exact(d)
    return CLOSE_FACTOR2 * d * d


@dataclass(frozen=True)
class SeparationConstraint:
    """One linearized inequality for the vertex pair (a, b) of a close pair.

    ``const``, ``cl`` and ``cm`` are exact and already divided by d:
    u.(b-a)/d, v.(b-a)/d, w.(b-a)/d.
    """
    pair: object
    a: int
    b: int
    const: object
    cl: object
    cm: object

    def lhs(self, disp, l, m):
        """Exact left side for displacements ``disp`` (vid -> d-unit floats)."""
        u = self.pair.frame.u
        zero = (0.0, 0.0, 0.0)
        da, db = disp.get(self.a, zero), disp.get(self.b, zero)
        val = self.const + self.cl * mpq(l) + self.cm * mpq(m)
        for k in range(3):
            val += mpq(u[k]) * (mpq(db[k]) - mpq(da[k]))
        return val


def build_constraints(pairs, d, positions, s_variable=True):
    """Expand each pair's minimum into its per-vertex-pair inequalities."""
    d = exact(d)
    out = []
    for fp in pairs:
        u, v, w = (tuple(mpq(c) for c in x) for x in (fp.frame.u, fp.frame.v, fp.frame.w))
        for a in fp.A.ids:
            for b in fp.B.ids:
                diff = sub(positions[b], positions[a])
                diff = tuple(c / d for c in diff)
                const = sum((x * y for x, y in zip(u, diff)), mpq(0))
                cl = sum((x * y for x, y in zip(v, diff)), mpq(0))
                cm = sum((x * y for x, y in zip(w, diff)), mpq(0))
                out.append(SeparationConstraint(fp, a, b, const, cl, cm))
    return out


def pair_blocks(pairs):
    """Group pairs that share a vertex (their LPs are coupled)."""
    parent = list(range(len(pairs)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner = {}
    for k, fp in enumerate(pairs):
        for v in fp.A.ids + fp.B.ids:
            if v in owner:
                ra, rb = find(owner[v]), find(k)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                owner[v] = k
    groups = {}
    for k in range(len(pairs)):
        groups.setdefault(find(k), []).append(pairs[k])
    return [groups[k] for k in sorted(groups)]


# ---------------------------------------------------------------------------
# LP assembly

@dataclass
class _Assembled:
    problem: object
    rows: list            # SeparationConstraint per Eq.-1 row, aligned with row index
    verts: list
    pcol: dict            # vid -> (3 plus columns)
    ncol: dict            # vid -> (3 minus columns)
    lmcol: dict           # pair key -> (l column, m column)
    scol: int | None
    rhs_factor: float
    targets: list = None   # per-row targets (d units) when s is not a variable


def _assemble(pairs, cons, bound, objective="expand", s_var=True, fixed_s=None,
              offsets=None, b_const=B_CONST, margin=MARGIN, targets=None, tie_break=TIE_BREAK):
    """Build the LP for one block.

    objective "expand": maximize s - sum(a^m) / (b n).
    objective "minimal": minimize sum(a^m) with s fixed (second LP).
    objective "first": maximize s only.
    objective "optimize": minimize sum |a + a' - a0| with the target fixed at d.
    """
    bld = LpBuilder()
    verts = sorted({v for fp in pairs for v in fp.A.ids + fp.B.ids}
                   | (set(offsets) if offsets else set()))
    n = max(len(verts), 1)
    weight = 1.0 / (b_const * n)
    pcol, ncol = {}, {}
    for v in verts:
        if objective == "expand":
            cost = -weight
        elif objective == "minimal":
            cost = -1.0
        else:
            cost = 0.0
        pcol[v] = tuple(bld.var(f"p{v}_{k}", 0.0, bound, cost) for k in range(3))
        ncol[v] = tuple(bld.var(f"n{v}_{k}", 0.0, bound, cost) for k in range(3))
    lmcol = {}
    for i, fp in enumerate(pairs):
        lmcol[fp.key] = (bld.var(f"l{i}", -LM_BOUND, LM_BOUND, scaled=True),
                         bld.var(f"m{i}", -LM_BOUND, LM_BOUND, scaled=True))
    scol = None
    if s_var and fixed_s is None:
        scol = bld.var("s", 0.0, 1.0, 1.0 if objective in ("expand", "first") else 0.0)
    factor = 1.0 + margin
    rows = []
    if scol is None and targets is None:
        targets = [factor * (1.0 if fixed_s is None else fixed_s)] * len(cons)
    for i, c in enumerate(cons):
        u = c.pair.frame.u
        coeffs = {}
        for k in range(3):
            coeffs[pcol[c.b][k]] = coeffs.get(pcol[c.b][k], 0.0) + u[k]
            coeffs[ncol[c.b][k]] = coeffs.get(ncol[c.b][k], 0.0) - u[k]
            coeffs[pcol[c.a][k]] = coeffs.get(pcol[c.a][k], 0.0) - u[k]
            coeffs[ncol[c.a][k]] = coeffs.get(ncol[c.a][k], 0.0) + u[k]
        lcol, mcol = lmcol[c.pair.key]
        coeffs[lcol] = float(c.cl)
        coeffs[mcol] = float(c.cm)
        if scol is not None:
            coeffs[scol] = -factor
            rhs = -float(c.const)
        else:
            rhs = targets[i] - float(c.const)
        bld.row(coeffs, GE, rhs)
        rows.append(c)
    if objective in ("expand", "minimal") and tie_break and verts:
        # small max-norm term: among equal l1 totals prefer spreading the motion
        tcol = bld.var("t", 0.0, bound, -tie_break * (weight if objective == "expand" else 1.0))
        for v in verts:
            for k in range(3):
                bld.row({pcol[v][k]: 1.0, ncol[v][k]: 1.0, tcol: -1.0}, "<=", 0.0)
    if objective == "optimize":
        for v in verts:
            off = offsets.get(v, (0.0, 0.0, 0.0)) if offsets else (0.0, 0.0, 0.0)
            for k in range(3):
                dcol = bld.var(f"ad{v}_{k}", 0.0, math.inf, -1.0)
                # ad >= +/- (off + p - n)
                bld.row({dcol: 1.0, pcol[v][k]: -1.0, ncol[v][k]: 1.0}, GE, off[k])
                bld.row({dcol: 1.0, pcol[v][k]: 1.0, ncol[v][k]: -1.0}, GE, -off[k])
    return _Assembled(bld.build(), rows, verts, pcol, ncol, lmcol, scol, factor,
                      None if scol is not None else list(targets))


def _extract(asm, x):
    disp = {}
    for v in asm.verts:
        p, n = asm.pcol[v], asm.ncol[v]
        disp[v] = tuple(float(x[p[k]] - x[n[k]]) for k in range(3))
    lm = {key: (float(x[c[0]]), float(x[c[1]])) for key, c in asm.lmcol.items()}
    s = float(x[asm.scol]) if asm.scol is not None else None
    return disp, lm, s


def _exact_violation(asm):
    """Closure returning the worst exact separation-row violation (d units)."""
    def check(x):
        disp, lm, s = _extract(asm, x)
        if asm.targets is None:
            needs = [mpq(asm.rhs_factor) * mpq(s)] * len(asm.rows)
        else:
            needs = [mpq(t) for t in asm.targets]
        worst = 0.0
        for c, need in zip(asm.rows, needs):
            l, m = lm[c.pair.key]
            gap = float(need - c.lhs(disp, l, m))
            if gap > worst:
                worst = gap
        return worst
    return check


@dataclass
class StepResult:
    disp: dict
    s: float
    lm: dict
    lp_stats: list = field(default_factory=list)


def _solve_block(asm, cfg, solver, lp_hook):
    if lp_hook is not None:
        lp_hook(asm.problem)
    sol = lpmod.solve_scaled(asm.problem, cfg, _exact_violation(asm), solver)
    if not sol.optimal:
        raise RuntimeError(f"expansion LP returned {sol.status.value}")
    return sol


def expansion_step(m: Mesh, pairs, d, delta, b_const=B_CONST, cfg: ScalingConfig = None,
                   solver="auto", two_lp=False, lp_hook=None, margin=MARGIN) -> StepResult:
    """Solve the displacement LPs (one per independent block of pairs).

    Returns displacements in units of d, the smallest block s, and the
    per-pair l, m values.  ``delta`` is the coordinate bound (length).
    """
    d = exact(d)
    cfg = cfg or ScalingConfig(d=float(d))
    bound = float(exact(delta) / d)
    disp, lms, svals, stats = {}, {}, [], []
    for block in pair_blocks(pairs):
        cons = build_constraints(block, d, m.points)
        if two_lp:
            first = _assemble(block, cons, bound, "first", margin=margin)
            sol = _solve_block(first, cfg, solver, lp_hook)
            s1 = _extract(first, sol.x)[2]
            stats.append(sol)
            second = _assemble(block, cons, bound, "minimal", fixed_s=s1 * (1 - 1e-9),
                               margin=margin)
            sol = _solve_block(second, cfg, solver, lp_hook)
            d_, lm_, _ = _extract(second, sol.x)
            s = s1
        else:
            asm = _assemble(block, cons, bound, "expand", b_const=b_const, margin=margin)
            sol = _solve_block(asm, cfg, solver, lp_hook)
            d_, lm_, s = _extract(asm, sol.x)
        stats.append(sol)
        disp.update(d_)
        lms.update(lm_)
        svals.append(s)
    return StepResult(disp, min(svals) if svals else 1.0, lms, stats)


# ---------------------------------------------------------------------------
# verification

class Verdict(enum.Enum):
    ACCEPT = "accept"
    SWEPT_CONTACT = "swept-contact"
    INTERSECTION = "intersection"
    NO_IMPROVEMENT = "no-improvement"


def _exact_disp(disp, d):
    """d-unit floats -> exact length displacements."""
    return {v: tuple(mpq(c) * d for c in x) for v, x in disp.items() if any(x)}


def conservative_separated(fp, lm, old, new):
    """Direction u + l v + m w strictly separates the features at both ends of the step."""
    l, mm = (mpq(x) for x in lm)
    n = tuple(mpq(fp.frame.u[k]) + l * mpq(fp.frame.v[k]) + mm * mpq(fp.frame.w[k])
              for k in range(3))
    for pos in (old, new):
        for a in fp.A.ids:
            for b in fp.B.ids:
                diff = sub(pos(b), pos(a))
                if n[0] * diff[0] + n[1] * diff[1] + n[2] * diff[2] <= 0:
                    return False
    return True


def _pair_swept(fp, old, vel):
    zero = (mpq(0), mpq(0), mpq(0))
    A_pts = [old(x) for x in fp.A.ids]
    B_pts = [old(x) for x in fp.B.ids]
    A_vel = [vel.get(x, zero) for x in fp.A.ids]
    B_vel = [vel.get(x, zero) for x in fp.B.ids]
    return swept_contact(A_pts, A_vel, B_pts, B_vel)


def _incident_tris(m, verts):
    out = set()
    for v in verts:
        out |= m.vtris.get(v, set())
    return out


@dataclass
class _Move:
    old: dict
    moved: list
    tids: set


def apply_displacements(m: Mesh, index, vel) -> _Move:
    old = {v: m.points[v] for v in vel}
    for v, dv in vel.items():
        m.move_vertex(v, tuple(a + b for a, b in zip(m.points[v], dv)))
    tids = _incident_tris(m, vel)
    for t in tids:
        index.update(t, *m.tri_box(t))
    return _Move(old, sorted(vel), tids)


def revert(m: Mesh, index, mv: _Move):
    for v, p in mv.old.items():
        m.move_vertex(v, p)
    for t in mv.tids:
        index.update(t, *m.tri_box(t))


def verify_step(m: Mesh, index, disp, pairs, d, lm=None, old_delta2=None, require_gain=True):
    """Apply a candidate step and keep it only if it is safe and improves separation.

    Returns (verdict, move record or None, fresh pair list after the move).
    The mesh is left unchanged on rejection.
    """
    d = exact(d)
    vel = _exact_disp(disp, d)
    if not vel:
        return Verdict.NO_IMPROVEMENT, None, None
    lm = lm or {}
    old_pos = dict(m.points)

    def before(v):
        return old_pos[v]

    def after(v):
        if v in vel:
            return tuple(a + b for a, b in zip(old_pos[v], vel[v]))
        return old_pos[v]

    moved = set(vel)
    for fp in pairs:
        if not (moved & set(fp.A.ids + fp.B.ids)):
            continue
        # positions move linearly, so a direction that separates at both ends
        # separates throughout; the untilted frame direction is tried as well
        if (conservative_separated(fp, lm.get(fp.key, (0.0, 0.0)), before, after)
                or conservative_separated(fp, (0.0, 0.0), before, after)):
            continue
        if _pair_swept(fp, before, vel):
            return Verdict.SWEPT_CONTACT, None, None
    mv = apply_displacements(m, index, vel)
    if local_intersections(m, index, mv.tids):
        revert(m, index, mv)
        return Verdict.INTERSECTION, None, None
    fresh = refresh_pairs(m, index, pairs, moved, d)
    if require_gain:
        new2 = min((fp.dist2 for fp in fresh), default=math.inf)
        if old_delta2 is None:
            old_delta2 = min((fp.dist2 for fp in pairs), default=math.inf)
        if not new2 > old_delta2:
            revert(m, index, mv)
            return Verdict.NO_IMPROVEMENT, None, None
    return Verdict.ACCEPT, mv, fresh


def refresh_pairs(m: Mesh, index, pairs, moved, d):
    """Close pairs after moving ``moved``: untouched pairs kept, the rest recomputed."""
    moved = set(moved)
    keep = [fp for fp in pairs if not (moved & set(fp.A.ids + fp.B.ids))]
    tids = _incident_tris(m, moved)
    new = [fp for fp in close_pairs(m, index, threshold2=close_threshold2(d), inclusive=True,
                                    tids=tids)
           if moved & set(fp.A.ids + fp.B.ids)]
    out = {fp.key: fp for fp in keep}
    for fp in new:
        out[fp.key] = fp
    return sorted(out.values(), key=lambda fp: (fp.A.kind != "vertex", fp.key))


# ---------------------------------------------------------------------------
# expansion loop

@dataclass
class ExpandState:
    delta: object
    iterations: int = 0
    accepted: int = 0
    halvings: int = 0
    delta2: object = math.inf
    lp_rounds: list = field(default_factory=list)
    violations: list = field(default_factory=list)


def _below(pairs, d2):
    return [fp for fp in pairs if fp.dist2 <= d2]


def expand(m: Mesh, d, index=None, pairs=None, max_iter=MAX_ITER, b_const=B_CONST,
           cfg: ScalingConfig = None, solver="auto", two_lp=False, lp_hook=None,
           state: ExpandState = None, originals=None, report=True):
    """Displace vertices until every close pair is farther apart than d.

    Returns (StageReport, index, pairs).  Raises MaxIterations when the loop
    does not converge.
    """
    start = time.perf_counter()
    d = exact(d)
    d2 = d * d
    if index is None:
        index = build_octree(m)
    if pairs is None:
        pairs = close_pairs(m, index, threshold2=close_threshold2(d), inclusive=True)
    before = dict(m.points) if originals is None else originals
    c0 = len(_below(pairs, d2))
    st = state or ExpandState(delta=d)
    st.delta = d
    prev_close = {fp.key for fp in _below(pairs, d2)}
    while True:
        close = _below(pairs, d2)
        if not close:
            break
        if st.iterations >= max_iter:
            raise MaxIterations(f"expansion did not converge in {max_iter} iterations")
        st.iterations += 1
        delta2 = min(fp.dist2 for fp in pairs)
        step = expansion_step(m, pairs, d, st.delta, b_const, cfg, solver, two_lp, lp_hook)
        for sol in step.lp_stats:
            st.lp_rounds.append(sol.rounds)
            st.violations.append(sol.violation)
        verdict, mv, fresh = verify_step(m, index, step.disp, pairs, d, step.lm, delta2)
        if verdict is Verdict.ACCEPT:
            st.accepted += 1
            st.delta = d
            pairs = fresh
            now = {fp.key for fp in _below(pairs, d2)}
            back = now - prev_close
            if back:
                log.warning("%d previously separated pair(s) re-entered the close set", len(back))
            prev_close = now
            log.debug("expansion step %d accepted, s=%.4f", st.iterations, step.s)
        else:
            st.halvings += 1
            st.delta = st.delta / 2
            log.debug("expansion step %d rejected (%s), delta -> %s", st.iterations,
                      verdict.value, float(st.delta))
    rep = None
    if report:
        moves = [(before[v], m.points[v]) for v in m.points if v in before and m.vtris.get(v)]
        pct, med, mx = displacement_stats(moves, d, total=len(m.used_vertices()))
        rep = StageReport("expand", close_pairs=c0, displaced_pct=pct, median=med, max=mx,
                          seconds=time.perf_counter() - start, iterations=st.iterations,
                          extra={"accepted": st.accepted, "halvings": st.halvings,
                                 "max_violation": max(st.violations, default=0.0),
                                 "alpha_rounds": max(st.lp_rounds, default=0)})
    return rep, index, pairs


def exact_min_separation2(pairs):
    return min((fp.dist2 for fp in pairs), default=math.inf)


# ---------------------------------------------------------------------------
# optimization

def l1_displacement(m: Mesh, originals):
    total = mpq(0)
    for v, p0 in originals.items():
        if v in m.points:
            p = m.points[v]
            total += abs(p[0] - p0[0]) + abs(p[1] - p0[1]) + abs(p[2] - p0[2])
    return total


def _snapshot(m):
    return dict(m.points)


def _restore(m, index, snap):
    changed = [v for v, p in snap.items() if m.points.get(v) != p]
    for v in changed:
        m.move_vertex(v, snap[v])
    for t in _incident_tris(m, changed):
        index.update(t, *m.tri_box(t))


def optimization_step(m, index, pairs, originals, d, beta, cfg=None, solver="auto",
                      lp_hook=None):
    """One LP descent step toward the original positions; returns d-unit displacements."""
    d = exact(d)
    displaced = {v for v, p0 in originals.items() if v in m.points and m.points[v] != p0}
    cons = build_constraints(pairs, d, m.points)
    offsets = {}
    for v in displaced | {x for fp in pairs for x in fp.A.ids + fp.B.ids}:
        p, p0 = m.points[v], originals.get(v, m.points[v])
        offsets[v] = tuple(float((a - b) / d) for a, b in zip(p, p0))
    # target d (with headroom), relaxed to the current value for rows already in between
    targets = [max(1.0, min(1.0 + OPT_MARGIN, float(c.const))) for c in cons]
    asm = _assemble(pairs, cons, float(exact(beta) / d), "optimize", s_var=False,
                    offsets=offsets, targets=targets)
    cfg = cfg or ScalingConfig(d=float(d))
    if lp_hook is not None:
        lp_hook(asm.problem)
    sol = lpmod.solve_scaled(asm.problem, cfg, _exact_violation(asm), solver)
    if not sol.optimal:
        return None, None, sol
    disp, lm, _ = _extract(asm, sol.x)
    return disp, lm, sol


def optimize(m: Mesh, originals, d, index=None, pairs=None, max_rounds=200, cfg=None,
             solver="auto", lp_hook=None, min_rel=1e-3, floor_div=256, on_round=None):
    """Descend on total displacement from ``originals`` while keeping d-separation.

    ``on_round(mesh, l1)`` is called after each accepted round.  Returns
    (StageReport, index, pairs).
    """
    start = time.perf_counter()
    d = exact(d)
    d2 = d * d
    if index is None:
        index = build_octree(m)
    if pairs is None:
        pairs = close_pairs(m, index, threshold2=close_threshold2(d), inclusive=True)
    if _below(pairs, d2):
        raise InsufficientSeparation("optimization needs a d-separated mesh")
    beta = d
    floor = d / floor_div
    best = l1_displacement(m, originals)
    streak = 0
    rounds = accepted = 0
    while beta >= floor and rounds < max_rounds and best > 0:
        rounds += 1
        snap = _snapshot(m)
        disp, lm, sol = optimization_step(m, index, pairs, originals, d, beta, cfg, solver, lp_hook)
        ok = disp is not None
        new_pairs = pairs
        if ok:
            verdict, mv, fresh = verify_step(m, index, disp, pairs, d, lm, require_gain=False)
            ok = verdict is Verdict.ACCEPT
            if ok:
                new_pairs = fresh
        if ok and _below(new_pairs, d2):
            try:
                _, index, new_pairs = expand(m, d, index, new_pairs, cfg=cfg, solver=solver,
                                             report=False)
            except (MaxIterations, RuntimeError):
                ok = False
        total = l1_displacement(m, originals) if ok else None
        if not ok or total >= best:
            _restore(m, index, snap)
            beta = beta / 2
            streak = 0
            continue
        rel = (best - total) / best
        best = total
        pairs = new_pairs
        accepted += 1
        streak += 1
        if on_round is not None:
            on_round(m, best)
        if streak >= 4:
            beta = beta * 2
            streak = 0
        if rel < min_rel:
            break
    moves = [(originals[v], m.points[v]) for v in m.points if v in originals and m.vtris.get(v)]
    pct, med, mx = displacement_stats(moves, d, total=len(m.used_vertices()))
    rep = StageReport("optimize", close_pairs=len(_below(pairs, d2)), displaced_pct=pct,
                      median=med, max=mx, seconds=time.perf_counter() - start,
                      iterations=rounds, extra={"accepted": accepted, "l1": float(best / d)})
    return rep, index, pairs
