"""Stage statistics and the summary table/JSON emitter."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernel import norm2, sub

REPORT_KEYS = ("f", "c_m", "v_m", "a_m", "m_m", "c_e", "v_e", "a_e", "m_e",
               "v_o", "a_o", "m_o", "t")


@dataclass
class StageReport:
    """Per-stage statistics.

    ``close_pairs`` counts d-close pairs when the stage starts.  Displacement
    figures are percentages of vertices and distances in units of d; the
    median is taken over displaced vertices only.
    """
    stage: str
    close_pairs: int = 0
    displaced_pct: float = 0.0
    median: float = 0.0
    max: float = 0.0
    seconds: float = 0.0
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def displacement_stats(pairs, d, total=None):
    """(percent displaced, median, max) from (before, after) exact point pairs.

    ``total`` is the vertex count the percentage refers to (defaults to the
    number of pairs).
    """
    d = float(d)
    moved = []
    n = 0
    for a, b in pairs:
        n += 1
        d2 = norm2(sub(b, a))
        if d2 != 0:
            moved.append(math.sqrt(float(d2)) / d)
    total = n if total is None else total
    if not moved or total == 0:
        return 0.0, 0.0, 0.0
    return 100.0 * len(moved) / total, float(np.median(moved)), max(moved)


def summary_row(reports, n_triangles, seconds=None):
    """Flatten stage reports into the fixed-key summary row."""
    by = {r.stage: r for r in reports}
    row = {"f": int(n_triangles)}
    for tag, name in (("m", "modify"), ("e", "expand"), ("o", "optimize")):
        r = by.get(name)
        if tag != "o":
            row[f"c_{tag}"] = r.close_pairs if r else 0
        row[f"v_{tag}"] = round(r.displaced_pct, 2) if r else 0.0
        row[f"a_{tag}"] = round(r.median, 2) if r else 0.0
        row[f"m_{tag}"] = round(r.max, 2) if r else 0.0
    t = sum(r.seconds for r in reports) if seconds is None else seconds
    row["t"] = round(t, 3)
    return {k: row[k] for k in REPORT_KEYS}


def emit_report(reports, fmt="json", n_triangles=0, seconds=None, stages=False):
    """Render the summary row as JSON or an aligned text table."""
    row = summary_row(reports, n_triangles, seconds)
    if fmt == "json":
        obj = dict(row)
        if stages:
            obj["stages"] = [r.to_dict() for r in reports]
        return json.dumps(obj, indent=2, sort_keys=False, default=str)
    if fmt == "table":
        cells = []
        for k in REPORT_KEYS:
            v = row[k]
            cells.append(f"{v:.2f}" if isinstance(v, float) and k != "t" else str(v))
        widths = [max(len(k), len(c)) for k, c in zip(REPORT_KEYS, cells)]
        head = "  ".join(k.rjust(w) for k, w in zip(REPORT_KEYS, widths))
        body = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return head + "\n" + body
    raise ValueError(f"unknown report format {fmt!r}")
