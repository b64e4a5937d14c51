"""Nodally bound-preserving finite elements for time-dependent convection-diffusion."""

from .bounds import BoundSpec, clip, is_admissible, split
from .fe_space import FeFunction, FeSpace, build_space, evaluate, interpolate
from .forms import FormAssembler, assemble_cip, assemble_galerkin, assemble_stab_diag, rhs_fn
from .mesh import Mesh, MeshFunction, build_mesh, compute_mesh_function
from .problems import ProblemSpec, preset
from .stepper import NonConvergenceError, SchemeConfig, StepError, run, step_bp, step_cip

__all__ = [
    "BoundSpec", "clip", "is_admissible", "split",
    "FeFunction", "FeSpace", "build_space", "evaluate", "interpolate",
    "FormAssembler", "assemble_cip", "assemble_galerkin", "assemble_stab_diag", "rhs_fn",
    "Mesh", "MeshFunction", "build_mesh", "compute_mesh_function",
    "ProblemSpec", "preset",
    "NonConvergenceError", "SchemeConfig", "StepError", "run", "step_bp", "step_cip",
]
__version__ = "0.1.0"
