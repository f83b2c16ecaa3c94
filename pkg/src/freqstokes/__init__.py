"""Frequency-domain stabilized finite element Stokes solver."""
from .assembly import CaseConfig, ConfigError, assemble, load_case, save_case
from .linsolve import BlockSparseMatrix, conjugate_gradient, jacobi_scale
from .mesh import (BoundaryCondition, Mesh, MeshError, generate_channel, generate_pipe,
                   read_mesh, write_mesh)
from .postproc import SolutionField, error_norm, mass_imbalance, patch_flow_rate
from .solver import solve, traction_driven_case
from .womersley import ChannelReference, WomersleyReference, bessel_j

__version__ = "0.1.0"

__all__ = [
    "BlockSparseMatrix", "BoundaryCondition", "CaseConfig", "ChannelReference", "ConfigError",
    "Mesh", "MeshError", "SolutionField", "WomersleyReference", "assemble", "bessel_j",
    "conjugate_gradient", "error_norm", "generate_channel", "generate_pipe", "jacobi_scale",
    "load_case", "mass_imbalance", "patch_flow_rate", "read_mesh", "save_case", "solve",
    "traction_driven_case", "write_mesh",
]
