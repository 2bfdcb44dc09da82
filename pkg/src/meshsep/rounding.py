"""Rounding exact coordinates to binary64 with a certified outcome.

Rounding moves a vertex by at most e = sqrt(3) M eps, where M bounds the
coordinate magnitudes and eps = 2**-53.  A mesh whose features are all
farther than 2e apart therefore cannot acquire intersections.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

from gmpy2 import mpq

from .errors import CertificationFailure, ConfigError, InsufficientSeparation
from .kernel import exact, norm2, sub
from .mesh import Mesh, certify_no_intersections, topology_signature
from .proximity import close_pairs
from .report import StageReport, displacement_stats

log = logging.getLogger(__name__)

EPS = mpq(1, 2 ** 53)


@dataclass(frozen=True)
class RoundingBudget:
    M: object
    eps: object
    e: float
    e2: object

    @property
    def snap_threshold2(self):
        """Squared separation that must be exceeded before snapping: (2e)^2."""
        return 4 * self.e2


def _upper_sqrt(x) -> float:
    """Smallest-ish float whose square is at least the exact value x."""
    r = math.sqrt(float(x))
    while mpq(r) * mpq(r) < x:
        r = math.nextafter(r, math.inf)
    return r


def rounding_budget(m: Mesh) -> RoundingBudget:
    M = max((abs(c) for p in m.points.values() for c in p), default=mpq(0))
    e2 = 3 * M * M * EPS * EPS
    return RoundingBudget(M=M, eps=EPS, e=_upper_sqrt(e2), e2=e2)


def is_binary64(m: Mesh) -> bool:
    return all(mpq(float(c)) == c for p in m.points.values() for c in p)


def snap(m: Mesh, budget: RoundingBudget = None, check_separation=True):
    """Round every coordinate to the nearest binary64 and certify the result.

    Returns (snapped mesh, max squared movement).  Raises
    InsufficientSeparation when some feature pair is within 2e and
    CertificationFailure if a post-check fails.
    """
    budget = budget or rounding_budget(m)
    if check_separation and budget.e2 > 0:
        bad = close_pairs(m, threshold2=budget.snap_threshold2, inclusive=True)
        if bad:
            raise InsufficientSeparation(
                f"{len(bad)} feature pair(s) within 2e = {2 * budget.e:.3g}")
    out = m.copy()
    worst = mpq(0)
    changed = 0
    for v, p in m.points.items():
        q = tuple(mpq(float(c)) for c in p)
        if q != p:
            out.move_vertex(v, q)
            changed += 1
            worst = max(worst, norm2(sub(q, p)))
    if worst > budget.e2:
        raise CertificationFailure("a vertex moved farther than the rounding budget")
    if changed:
        if not certify_no_intersections(out):
            raise CertificationFailure("snapped mesh has intersecting triangles")
        if topology_signature(out).invariant() != topology_signature(m).invariant():
            raise CertificationFailure("snapping changed the topology")
    log.info("snap moved %d vertices, max %.3g", changed, math.sqrt(float(worst)))
    return out, worst


def geometric_round(m: Mesh, d, cfg=None):
    """Separate to d, then snap.  Returns (mesh, reports, pipeline result)."""
    from .pipeline import PipelineConfig, separate_mesh

    cfg = cfg or PipelineConfig(d=d)
    cfg.d = d
    cfg.snap = True
    budget = rounding_budget(m)
    if exact(d) < 2 * exact(budget.e):
        raise ConfigError(f"d = {d:g} is below twice the rounding budget e = {budget.e:.3g}")
    res = separate_mesh(m, cfg)
    if not res.separated:
        raise InsufficientSeparation("separation stage did not reach d")
    start = time.perf_counter()
    before = res.mesh
    snapped, _ = snap(before)
    moves = [(before.points[v], snapped.points[v]) for v in before.points if before.vtris[v]]
    pct, med, mx = displacement_stats(moves, d, total=len(before.used_vertices()))
    rep = StageReport("snap", displaced_pct=pct, median=med, max=mx,
                      seconds=time.perf_counter() - start)
    res.reports.append(rep)
    res.mesh = snapped
    return snapped, res.reports, res
