"""Diagnostic figures for a pipeline run (matplotlib, headless)."""
from __future__ import annotations

import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .kernel import norm2, sub  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _distances(pairs, d):
    return np.array([math.sqrt(float(fp.dist2)) / float(d) for fp in pairs])


def separation_histogram(before, after, d, path):
    """Pair distances in units of d, before and after separation."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        b, a = _distances(before, d), _distances(after, d)
        hi = max([2 * math.sqrt(3)] + [x.max() for x in (a, b) if x.size])
        bins = np.linspace(0, hi, 40)
        if b.size:
            ax.hist(b, bins=bins, alpha=0.6, label=f"input ({b.size})", color="tab:red")
        if a.size:
            ax.hist(a, bins=bins, alpha=0.6, label=f"output ({a.size})", color="tab:blue")
        ax.axvline(1.0, color="k", lw=0.8, ls="--")
        ax.set_xlabel("feature-pair distance / d")
        ax.set_ylabel("pairs")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def displacement_histogram(before_points, mesh, d, path):
    """Per-vertex displacement from ``before_points`` in units of d (moved vertices only)."""
    moved = []
    for v, p0 in before_points.items():
        if v in mesh.points and mesh.vtris.get(v):
            d2 = norm2(sub(mesh.points[v], p0))
            if d2:
                moved.append(math.sqrt(float(d2)) / float(d))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if moved:
            ax.hist(moved, bins=30, color="tab:green")
            ax.axvline(float(np.median(moved)), color="k", lw=0.8, label="median")
            ax.legend(frameon=False)
        else:
            ax.text(0.5, 0.5, "no vertex moved", ha="center", va="center", transform=ax.transAxes)
        ax.set_xlabel("displacement / d")
        ax.set_ylabel("vertices")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def stage_bars(reports, path):
    """Displaced percentage, median and max displacement per stage."""
    names = [r.stage for r in reports] or ["none"]
    vals = np.array([[r.displaced_pct, r.median, r.max] for r in reports] or [[0, 0, 0]])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(names))
        w = 0.27
        for k, (lab, col) in enumerate((("% displaced", "tab:gray"), ("median / d", "tab:blue"),
                                        ("max / d", "tab:orange"))):
            ax.bar(x + (k - 1) * w, vals[:, k], w, label=lab, color=col)
        ax.set_xticks(x)
        ax.set_xticklabels(names)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def write_figures(directory, reports, d, input_pairs, output_pairs, before_points, mesh):
    os.makedirs(directory, exist_ok=True)
    return [
        separation_histogram(input_pairs, output_pairs, d, os.path.join(directory, "separation.png")),
        displacement_histogram(before_points, mesh, d, os.path.join(directory, "displacement.png")),
        stage_bars(reports, os.path.join(directory, "stages.png")),
    ]
