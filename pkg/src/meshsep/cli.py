"""Command-line front end: ``meshsep {separate,round,check,gen}``.

Exit codes: 0 success, 1 pipeline failure, 2 check found violations,
64 usage error.  Set MESHSEP_LOG to a logging level name for diagnostics.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from . import __version__
from .errors import ConfigError, MeshsepError
from .kernel import exact
from .lp import SOLVERS
from .mesh import intersecting_pairs, topology_signature
from .meshio import FORMATS, annotate_close_features, read_mesh, write_mesh
from .pipeline import PipelineConfig, separate_mesh
from .proximity import build_octree, close_pairs
from .report import emit_report
from .rounding import geometric_round
from .separate import MAX_ITER, close_threshold2
from .synthetic import KINDS, SyntheticSpec, generate_synthetic

log = logging.getLogger("meshsep")

EXIT_OK, EXIT_FAIL, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _pipeline_flags(p, optimize_default=False):
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("-d", type=_positive, default=1e-6, help="separation distance (default 1e-6)")
    p.add_argument("--no-modify", dest="modify", action="store_false",
                   help="skip edge contraction and flips")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--optimize", dest="optimize", action="store_true",
                   help="run the displacement-reducing optimization stage")
    g.add_argument("--no-optimize", dest="optimize", action="store_false", help="(default)")
    p.set_defaults(optimize=optimize_default)
    p.add_argument("--max-iter", type=int, default=MAX_ITER)
    p.add_argument("--threads", type=int, default=1, help="accepted for compatibility; work runs on one thread")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "table"), default="json", help="report format on stdout")
    p.add_argument("--certify", action=argparse.BooleanOptionalAction, default=None,
                   help="exact post-hoc validation")
    p.add_argument("--report", metavar="PATH", help="also write the JSON report here")
    p.add_argument("--annotate", metavar="PATH", help="write a copy with close features flagged")
    p.add_argument("--dump-lp", metavar="DIR", help="write every LP in CPLEX LP format")
    p.add_argument("--figures", metavar="DIR", help="write diagnostic PNG figures")
    p.add_argument("--lp-solver", choices=SOLVERS, default="auto")
    p.add_argument("--in-format", choices=FORMATS)
    p.add_argument("--out-format", choices=FORMATS)
    p.add_argument("--binary", action="store_true", help="binary little-endian PLY output")


def build_parser():
    p = _Parser(prog="meshsep", description="Separate close features of triangle meshes and round them safely.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("separate", help="modify and expand until the mesh is d-separated")
    _pipeline_flags(s)
    s.add_argument("--lossy", action="store_true", help="allow rounding when writing binary64 formats")

    r = sub.add_parser("round", help="separate, then snap coordinates to binary64")
    _pipeline_flags(r)

    c = sub.add_parser("check", help="report close pairs, intersections and topology")
    c.add_argument("input")
    c.add_argument("-d", type=_positive, default=1e-6)
    c.add_argument("--in-format", choices=FORMATS)
    c.add_argument("--limit", type=int, default=100, help="max findings listed per category")

    g = sub.add_parser("gen", help="generate a synthetic test mesh")
    g.add_argument("kind", choices=KINDS)
    g.add_argument("output")
    g.add_argument("--size", type=int, default=2000, help="approximate triangle count")
    g.add_argument("-k", type=int, default=10, help="planted close pairs")
    g.add_argument("-d", type=_positive, default=1e-6)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gap", type=float, default=0.5, help="sheet gap in units of d")
    g.add_argument("--bits", type=int, default=600)
    g.add_argument("--out-format", choices=FORMATS)
    return p


def _config(args, snap=False):
    return PipelineConfig(d=args.d, modify=args.modify, optimize=args.optimize, snap=snap,
                          max_iter=args.max_iter, certify=args.certify, seed=args.seed,
                          fmt=args.format, solver=args.lp_solver, threads=args.threads,
                          dump_lp=args.dump_lp)


def _emit(args, reports, n_tris, seconds, extra):
    text = emit_report(reports, args.format, n_tris, seconds)
    print(text)
    if args.report:
        obj = json.loads(emit_report(reports, "json", n_tris, seconds, stages=True))
        obj.update(extra)
        with open(args.report, "w") as fh:
            json.dump(obj, fh, indent=2, default=str)


def _finish(args, m_in, res, d):
    if args.annotate:
        pairs = close_pairs(res.mesh, build_octree(res.mesh), threshold2=close_threshold2(d),
                            inclusive=True)
        write_mesh(res.mesh, args.annotate, args.out_format,
                   lossy=True, flags=annotate_close_features(res.mesh, pairs))
    if args.figures:
        from .plots import write_figures
        before = close_pairs(m_in, threshold2=close_threshold2(d), inclusive=True)
        after = close_pairs(res.mesh, threshold2=close_threshold2(d), inclusive=True)
        write_figures(args.figures, res.reports, d, before, after, m_in.points, res.mesh)


def cmd_separate(args):
    m = read_mesh(args.input, args.in_format)
    cfg = _config(args)
    res = separate_mesh(m, cfg)
    write_mesh(res.mesh, args.output, args.out_format, lossy=args.lossy, binary=args.binary)
    delta = None if res.delta2 is None else math.sqrt(float(res.delta2))
    _emit(args, res.reports, res.mesh.n_triangles, res.seconds,
          {"separated": res.separated, "certified": res.certified, "delta": delta})
    _finish(args, m, res, exact(args.d))
    if not res.ok:
        log.error("output is not certified d-separated")
        return EXIT_FAIL
    return EXIT_OK


def cmd_round(args):
    m = read_mesh(args.input, args.in_format)
    cfg = _config(args, snap=True)
    out, reports, res = geometric_round(m, args.d, cfg)
    fmt = args.out_format
    write_mesh(out, args.output, fmt, binary=args.binary)
    _emit(args, reports, out.n_triangles, sum(r.seconds for r in reports),
          {"separated": res.separated, "certified": res.certified})
    _finish(args, m, res, exact(args.d))
    return EXIT_OK if res.ok else EXIT_FAIL


def check_findings(m, d, limit=100):
    d = exact(d)
    index = build_octree(m)
    hits = intersecting_pairs(m, index)
    close = close_pairs(m, index, threshold2=d * d, inclusive=True, skip_touching=True)
    sig = topology_signature(m)
    return {
        "d": float(d),
        "close_pairs": len(close),
        "intersections": len(hits),
        "close": [{"a": {"kind": fp.A.kind, "ids": list(fp.A.ids)},
                   "b": {"kind": fp.B.kind, "ids": list(fp.B.ids)},
                   "dist2": str(fp.dist2), "dist": math.sqrt(float(fp.dist2)),
                   "dist_d": math.sqrt(float(fp.dist2)) / float(d)} for fp in close[:limit]],
        "intersecting": [list(p) for p in hits[:limit]],
        "topology": [c.__dict__ for c in sig.components],
    }


def cmd_check(args):
    m = read_mesh(args.input, args.in_format)
    f = check_findings(m, args.d, args.limit)
    print(json.dumps(f, indent=2, default=str))
    return EXIT_OK if f["close_pairs"] == 0 and f["intersections"] == 0 else EXIT_VIOLATION


def cmd_gen(args):
    spec = SyntheticSpec(args.kind, size=args.size, d=args.d, seed=args.seed, k=args.k,
                         gap=args.gap, bits=args.bits)
    m, truth = generate_synthetic(spec)
    fmt = args.out_format or os.path.splitext(args.output)[1].lstrip(".") or "xmesh"
    write_mesh(m, args.output, fmt, lossy=False)
    # ids in the file follow sorted vertex ids
    remap = {v: i for i, v in enumerate(sorted(m.points))}
    for rec in truth.get("pairs", []):
        for key in ("vertex",):
            if key in rec:
                rec[key] = remap[rec[key]]
        for key in ("triangle", "edge"):
            if key in rec:
                rec[key] = [remap[v] for v in rec[key]]
    with open(args.output + ".truth.json", "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True, default=str)
    return EXIT_OK


COMMANDS = {"separate": cmd_separate, "round": cmd_round, "check": cmd_check, "gen": cmd_gen}


def main(argv=None):
    level = os.environ.get("MESHSEP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"meshsep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(json.dumps({"error": "ConfigError", "message": str(exc)}), file=sys.stderr)
        return EXIT_USAGE
    except (MeshsepError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
