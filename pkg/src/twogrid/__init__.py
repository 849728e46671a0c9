"""Two-grid poroelasticity: finite-volume flow coupled to P1 tetrahedral
mechanics through volume-weighted transfer operators and fixed-stress
iterations."""
from .errors import *  # noqa: F401,F403
from .material import PoroelasticMaterial
from .mesh import TetMesh, box_tet_mesh, build_fv_grid, load_mesh, dump_mesh, read_mesh, write_mesh
from .geometry import ElementPair, ProjectionOperator, detect_pairs, build_projection, apply_projection
from .coupling import CouplingConfig, TwoGridProblem, run_simulation

__version__ = "0.1.0"
