"""Staggered DG Navier-Stokes solver coupled to an elastic immersed boundary."""
__version__ = "0.1.0"

from .errors import (AssemblyFailure, InvalidEvaluation, InvalidGeometry, InvalidParameter,
                     MarkerEscaped, PicardNotConverged, PointOutsideDomain, PostprocessFailure,
                     SDGError, SingularSystem, SolveDiverged, UnsupportedDegree)
from .mesh import build_mesh, build_unit_square_mesh, staggered_subdivide
from .spaces import build_layouts

__all__ = [
    "__version__", "build_mesh", "build_unit_square_mesh", "staggered_subdivide", "build_layouts",
    "SDGError", "InvalidParameter", "UnsupportedDegree", "PointOutsideDomain", "InvalidEvaluation",
    "InvalidGeometry", "AssemblyFailure", "PostprocessFailure", "SingularSystem", "SolveDiverged",
    "MarkerEscaped", "PicardNotConverged",
]
