"""One frequency mode end to end: assemble, scale, CG, unpack."""
from __future__ import annotations

import logging
import time

import numpy as np

from .assembly import DEFAULT_C_STAB, DEFAULT_TOLERANCE, CaseConfig, assemble, dof_layout
from .linsolve import conjugate_gradient, jacobi_scale
from .mesh import BoundaryCondition, Mesh
from .postproc import SolutionField

log = logging.getLogger(__name__)


def solve(mesh: Mesh, config: CaseConfig, alpha: float | None = None) -> SolutionField:
    """Solve one mode.  The CG tolerance applies to the Jacobi-scaled residual."""
    t0 = time.perf_counter()
    system = assemble(mesh, config)
    A = system.reduced_matrix()
    b = system.reduced_rhs()
    As, s = jacobi_scale(A)
    t1 = time.perf_counter()
    y, report = conjugate_gradient(As, s * b, config.solver_tolerance, config.max_iterations)
    t2 = time.perf_counter()
    log.info("omega=%g: %d CG iterations, converged=%s", config.omega, report.iterations,
             report.converged)

    x = system.expand(s * y).reshape(mesh.n_nodes, -1)
    lay = dof_layout(mesh.dimension)
    return SolutionField(
        mesh=mesh,
        u_r=x[:, lay["u_r"]],
        u_i=x[:, lay["u_i"]],
        p_r=x[:, lay["p_r"]].copy(),
        p_i=x[:, lay["p_i"]].copy(),
        omega=config.omega,
        alpha=alpha,
        report=report,
        metadata={
            "n_unknowns": int(len(b)),
            "nnz": int(A.nnz),
            "timings": {"assembly": t1 - t0, "solve": t2 - t1},
        },
    )


def residual(mesh: Mesh, config: CaseConfig, field: SolutionField) -> np.ndarray:
    """Unscaled residual ``-R - K x`` of a field over the free unknowns."""
    system = assemble(mesh, config)
    lay = dof_layout(mesh.dimension)
    x = np.zeros((mesh.n_nodes, lay["size"]))
    x[:, lay["u_r"]] = field.u_r
    x[:, lay["u_i"]] = field.u_i
    x[:, lay["p_r"]] = field.p_r
    x[:, lay["p_i"]] = field.p_i
    x = x.ravel()
    return system.reduced_rhs() - system.reduced_matrix() @ x[system.free]


def traction_driven_case(dimension: int, omega: float, rho: float = 1.0, mu: float = 1.0,
                         h: float = 1.0, c_stab: float = DEFAULT_C_STAB,
                         tolerance: float = DEFAULT_TOLERANCE,
                         max_iterations: int = 20000) -> CaseConfig:
    """Oscillatory unit-traction benchmark: traction ``h`` pushing into the
    ``inlet``, traction-free ``outlet``, no-slip ``wall``.

    The flow axis is z for pipes (3D) and x for channels (2D).
    """
    axis = 2 if dimension == 3 else 0
    push = [0.0] * dimension
    push[axis] = h
    zero = [0.0] * dimension
    return CaseConfig(
        rho=rho, mu=mu, omega=omega, c_stab=c_stab,
        boundary_conditions=(
            BoundaryCondition("inlet", "neumann", push, zero),
            BoundaryCondition("outlet", "neumann", zero, zero),
            BoundaryCondition("wall", "dirichlet", zero, zero),
        ),
        solver_tolerance=tolerance, max_iterations=max_iterations,
    )
