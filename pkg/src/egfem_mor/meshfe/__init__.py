"""Meshes, Lagrange spaces and interpolation operators."""

from .mesh import Mesh, generate_mesh, unit_disk, unit_square
from .msh import load_msh, parse_msh, write_msh
from .quadrature import triangle_rule
from .space import (
    ElementGeometry,
    FeSpace,
    InterpolationOps,
    basis_values,
    build_interpolation,
    build_space,
)

__all__ = [
    "ElementGeometry",
    "FeSpace",
    "InterpolationOps",
    "Mesh",
    "basis_values",
    "build_interpolation",
    "build_space",
    "generate_mesh",
    "load_msh",
    "parse_msh",
    "triangle_rule",
    "unit_disk",
    "unit_square",
    "write_msh",
]
