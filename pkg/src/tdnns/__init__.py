"""Mixed finite elements for 3D linear elasticity: tangentially continuous
displacements paired with normal-normal continuous symmetric stresses."""
from .assembly import MaterialError, MaterialLaw, SparseSymSystem, assemble_system
from .interpolation import FieldFunction, interpolate, interpolate_sigma, interpolate_v, interpolate_w
from .mesh import Mesh, MeshError, build_structured_cube, read_mesh
from .norms import DualNorm, NormReport, hcurl_norm, sigma_h_norm
from .reference import SIGMA, V, W, UnisolvenceError, build_basis
from .solver import SaddleSolution, StabilityReport, solve_saddle, stability_constants
from .space import FESpace

__version__ = "0.1.0"

__all__ = [
    "SIGMA",
    "V",
    "W",
    "DualNorm",
    "FESpace",
    "FieldFunction",
    "MaterialError",
    "MaterialLaw",
    "Mesh",
    "MeshError",
    "NormReport",
    "SaddleSolution",
    "SparseSymSystem",
    "StabilityReport",
    "UnisolvenceError",
    "assemble_system",
    "build_basis",
    "build_structured_cube",
    "hcurl_norm",
    "interpolate",
    "interpolate_sigma",
    "interpolate_v",
    "interpolate_w",
    "read_mesh",
    "sigma_h_norm",
    "solve_saddle",
    "stability_constants",
]
