"""Optimal control of elliptic equations on triangulated surfaces."""

from .geometry import UnitSphere, Torus, GraphSurface, make_surface, jacobian_ratio
from .mesh import SurfaceMesh, macro_mesh, refine, mesh_hierarchy
from .fem import NodalFunction, assemble_stiffness, assemble_mass, load_vector
from .linsolve import cg_solve, solve_state
from .control import (ProblemSpec, ClampedControl, solve_optimal, compute_m,
                      newton_step, residual, adjoint_state, project_admissible,
                      integrate_clamped)
from .manufactured import Benchmark, build_example, exact_control
from .harness import StudyConfig, ConvergenceRow, run_study, eoc

__all__ = [
    "UnitSphere", "Torus", "GraphSurface", "make_surface", "jacobian_ratio",
    "SurfaceMesh", "macro_mesh", "refine", "mesh_hierarchy",
    "NodalFunction", "assemble_stiffness", "assemble_mass", "load_vector",
    "cg_solve", "solve_state",
    "ProblemSpec", "ClampedControl", "solve_optimal", "compute_m",
    "newton_step", "residual", "adjoint_state", "project_admissible",
    "integrate_clamped",
    "Benchmark", "build_example", "exact_control",
    "StudyConfig", "ConvergenceRow", "run_study", "eoc",
]
