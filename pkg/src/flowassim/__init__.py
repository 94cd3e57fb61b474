"""Stabilized finite element reconstruction of incompressible flow from
interior velocity measurements, with convergence-study tooling."""

from .analysis import ConvergenceRecord, eoc, error_l2, residual_quantity
from .assembly import SaddleSystem, StabilizationParams, assemble_full
from .cases import NoiseRecipe, ProblemCase, case_by_id, make_noise, poiseuille_case, stokes_case
from .fem import FeSystem, Orders, build_fe_system, interpolate
from .mesh import Mesh, Region, build_rect_mesh, build_unit_square_mesh
from .runner import RunConfig, run_convergence, run_single
from .solver import SolveReport, SolverError, solve

__all__ = [
    "ConvergenceRecord",
    "FeSystem",
    "Mesh",
    "NoiseRecipe",
    "Orders",
    "ProblemCase",
    "Region",
    "RunConfig",
    "SaddleSystem",
    "SolveReport",
    "SolverError",
    "StabilizationParams",
    "assemble_full",
    "build_fe_system",
    "build_rect_mesh",
    "build_unit_square_mesh",
    "case_by_id",
    "eoc",
    "error_l2",
    "interpolate",
    "make_noise",
    "poiseuille_case",
    "residual_quantity",
    "run_convergence",
    "run_single",
    "solve",
    "stokes_case",
]

__version__ = "0.1.0"
