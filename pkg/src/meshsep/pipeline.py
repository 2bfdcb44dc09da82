"""Stage orchestration: modification, expansion, optional optimization."""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

from .errors import ConfigError
from .kernel import exact
from .lp import ScalingConfig, to_lp_text
from .mesh import Mesh, certify_no_intersections
from .modify import modification_stage
from .proximity import build_octree, close_pairs
from .separate import B_CONST, LM_BOUND, MAX_ITER, close_threshold2, expand, optimize

log = logging.getLogger(__name__)

# certification is skipped by default for `separate` above this size
CERTIFY_LIMIT = 100_000


@dataclass
class PipelineConfig:
    """Knobs shared by the separate and round commands."""
    d: float = 1e-6
    modify: bool = True
    expand: bool = True
    optimize: bool = False
    snap: bool = False
    max_iter: int = MAX_ITER
    b_const: float = B_CONST
    scaling: ScalingConfig = None
    certify: bool = None
    seed: int = 0
    fmt: str = "json"
    solver: str = "auto"
    threads: int = 1
    dump_lp: str = None

    def validate(self):
        if not self.d > 0:
            raise ConfigError(f"d must be positive, got {self.d}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.b_const <= 0:
            raise ConfigError("b_const must be positive")
        return self

    def scaling_config(self):
        return self.scaling or ScalingConfig(d=float(self.d), lm_bound=LM_BOUND)

    def wants_certify(self, n_triangles):
        if self.certify is not None:
            return self.certify
        return self.snap or n_triangles <= CERTIFY_LIMIT


@dataclass
class PipelineResult:
    mesh: Mesh
    reports: list
    separated: bool
    delta2: object
    certified: bool = None
    seconds: float = 0.0
    originals: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    @property
    def ok(self):
        return self.separated and self.certified is not False


class LpDumper:
    """Writes every LP handed to the solver as numbered CPLEX-LP files."""

    def __init__(self, directory):
        self.directory = directory
        self.count = 0
        os.makedirs(directory, exist_ok=True)

    def __call__(self, problem):
        self.count += 1
        path = os.path.join(self.directory, f"lp_{self.count:05d}.lp")
        with open(path, "w") as fh:
            fh.write(to_lp_text(problem, name=f"lp_{self.count}"))


def separate_mesh(m: Mesh, cfg: PipelineConfig = None) -> PipelineResult:
    """Run the enabled stages on a copy of ``m`` and report exact separation."""
    cfg = (cfg or PipelineConfig()).validate()
    if cfg.threads and cfg.threads > 1:
        log.info("--threads %d requested; stages run on one thread", cfg.threads)
    start = time.perf_counter()
    d = exact(cfg.d)
    out = m.copy()
    index = build_octree(out)
    reports = []
    hook = LpDumper(cfg.dump_lp) if cfg.dump_lp else None
    scfg = cfg.scaling_config()

    if cfg.modify:
        rep, index = modification_stage(out, d, index)
        reports.append(rep)
    originals = dict(out.points)
    pairs = close_pairs(out, index, threshold2=close_threshold2(d), inclusive=True)
    if cfg.expand:
        rep, index, pairs = expand(out, d, index, pairs, max_iter=cfg.max_iter,
                                   b_const=cfg.b_const, cfg=scfg, solver=cfg.solver,
                                   lp_hook=hook, originals=originals)
        reports.append(rep)
    if cfg.optimize and cfg.expand:
        rep, index, pairs = optimize(out, originals, d, index, pairs, cfg=scfg,
                                     solver=cfg.solver, lp_hook=hook)
        reports.append(rep)

    delta2 = min((fp.dist2 for fp in pairs), default=None)
    separated = delta2 is None or delta2 > d * d
    certified = None
    if cfg.wants_certify(out.n_triangles):
        # recompute from scratch rather than trusting the incremental state
        fresh = close_pairs(out, build_octree(out), threshold2=d * d, inclusive=True)
        certified = not fresh and certify_no_intersections(out)
        separated = separated and not fresh
    seconds = time.perf_counter() - start
    log.info("pipeline finished in %.2fs, separated=%s certified=%s", seconds, separated, certified)
    return PipelineResult(out, reports, separated, delta2, certified, seconds, originals, pairs)

