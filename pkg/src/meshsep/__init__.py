"""Exact separation of close features in triangle meshes and safe rounding to binary64."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .mesh import Mesh, build_mesh, topology_signature  # noqa: E402,F401
from .meshio import read_mesh, write_mesh  # noqa: E402,F401
from .pipeline import PipelineConfig, PipelineResult, separate_mesh  # noqa: E402,F401
from .proximity import close_pairs  # noqa: E402,F401
from .rounding import geometric_round, rounding_budget, snap  # noqa: E402,F401
from .synthetic import SyntheticSpec, generate_synthetic  # noqa: E402,F401
