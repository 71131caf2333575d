"""Cauchy problem for the Laplacian as iterative regularization on P1 finite elements."""
from . import _backend
from .mesh import Mesh, build_parabola_domain, build_unit_square, load_mesh, save_mesh, validate
from .fem import StiffnessSystem, Trace, VolumeLoad, assemble, solve_mixed

__version__ = "0.1.0"
BACKEND = _backend.name

__all__ = [
    "BACKEND", "Mesh", "StiffnessSystem", "Trace", "VolumeLoad", "assemble", "build_parabola_domain",
    "build_unit_square", "load_mesh", "save_mesh", "solve_mixed", "validate",
]
