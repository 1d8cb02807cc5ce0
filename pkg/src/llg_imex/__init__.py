"""Finite element LLG solver: implicit midpoint rule with explicit lower-order terms."""

from .contributions import ContributionSet, PiStrategy, UniaxialAnisotropy, ZhangLi
from .demag import StrayFieldSolver
from .fem import FESpace
from .integrator import IntegratorConfig, Trajectory, fixed_point_step, integrate, reconstruct
from .mesh import TetMesh, build_box_mesh, load_mesh, save_mesh

__all__ = [
    "ContributionSet", "PiStrategy", "UniaxialAnisotropy", "ZhangLi", "StrayFieldSolver",
    "FESpace", "IntegratorConfig", "Trajectory", "fixed_point_step", "integrate",
    "reconstruct", "TetMesh", "build_box_mesh", "load_mesh", "save_mesh",
]
