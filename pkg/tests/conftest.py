import os
import sys
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from meshsep.mesh import build_mesh  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

D = 1e-6

TETRA_POINTS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
TETRA_TRIS = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]


def regular_tetra(scale=1):
    """Regular tetrahedron on alternate cube corners; edge length 2*sqrt(2)*scale."""
    s = Fraction(scale)
    pts = [(s, s, s), (s, -s, -s), (-s, s, -s), (-s, -s, s)]
    return build_mesh(pts, TETRA_TRIS)


def parallel_triangles(h, shift=(0, 0)):
    """Two unit right triangles, the second lifted by h (and shifted in xy)."""
    h = Fraction(h)
    sx, sy = (Fraction(x) for x in shift)
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0),
           (sx, sy, h), (1 + sx, sy, h), (sx, 1 + sy, h)]
    return build_mesh(pts, [(0, 1, 2), (3, 4, 5)])


@pytest.fixture
def tetra():
    return build_mesh(TETRA_POINTS, TETRA_TRIS)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
