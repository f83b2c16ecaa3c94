"""Element kernels and global assembly of the real-valued frequency-domain
Stokes system with pressure-Laplacian stabilization.

Unknowns are interleaved per node as ``[u_r (n_sd) | p_r | u_i (n_sd) | p_i]``.
For a node pair (A, B) the 2(n_sd+1) square block is::

    [  mu L d    -G        -rw M d    0     ]
    [  -D        -tr L      0         ti L  ]
    [  -rw M d    0        -mu L d    G     ]
    [  0          ti L      D         tr L  ]

with ``rw = rho*omega``, ``d`` the n_sd identity, ``tr``/``ti`` the
element-wise stabilization weights folded into the pressure Laplacians.
Dirichlet velocities are removed from the unknowns and lifted into the
right-hand side; the system solved is ``K x = -R``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .linsolve import BlockSparseMatrix
from .mesh import BoundaryCondition, Mesh, MeshError

DEFAULT_C_STAB = 2.0**-5
DEFAULT_TOLERANCE = 1e-3
DEFAULT_MAX_ITERATIONS = 20000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CaseConfig:
    rho: float
    mu: float
    omega: float
    c_stab: float = DEFAULT_C_STAB
    boundary_conditions: tuple = ()
    solver_tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        if not self.omega >= 0:
            raise ConfigError(f"omega must be >= 0, got {self.omega}")
        if not self.c_stab > 0:
            raise ConfigError(f"c_stab must be > 0, got {self.c_stab}")
        if not 0 < self.solver_tolerance < 1:
            raise ConfigError(f"tolerance must lie in (0, 1), got {self.solver_tolerance}")
        if int(self.max_iterations) < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        object.__setattr__(self, "boundary_conditions", tuple(self.boundary_conditions))
        seen = set()
        for bc in self.boundary_conditions:
            if bc.patch in seen:
                raise ConfigError(f"patch {bc.patch!r} carries more than one boundary condition")
            seen.add(bc.patch)

    def replace(self, **changes) -> "CaseConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return CaseConfig(**values)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "mu": self.mu,
            "omega": self.omega,
            "c_stab": self.c_stab,
            "tolerance": self.solver_tolerance,
            "max_iterations": self.max_iterations,
            "bcs": [
                {"patch": bc.patch, "kind": bc.kind,
                 "real": list(bc.value_real), "imag": list(bc.value_imag)}
                for bc in self.boundary_conditions
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CaseConfig":
        if not isinstance(doc, dict):
            raise ConfigError("case configuration must be a JSON object")
        for key in ("rho", "mu", "omega"):
            if key not in doc:
                raise ConfigError(f"missing field {key!r}")
        known = {"rho", "mu", "omega", "c_stab", "tolerance", "max_iterations", "bcs"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown field(s): {sorted(unknown)}")
        bcs = []
        for i, b in enumerate(doc.get("bcs", [])):
            try:
                bcs.append(BoundaryCondition(b["patch"], b["kind"], b["real"], b["imag"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bcs[{i}]: {exc}") from exc
        try:
            return cls(
                rho=float(doc["rho"]),
                mu=float(doc["mu"]),
                omega=float(doc["omega"]),
                c_stab=float(doc.get("c_stab", DEFAULT_C_STAB)),
                boundary_conditions=tuple(bcs),
                solver_tolerance=float(doc.get("tolerance", DEFAULT_TOLERANCE)),
                max_iterations=int(doc.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def load_case(path) -> CaseConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return CaseConfig.from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_case(config: CaseConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2))


# ---------------------------------------------------------------------------
# element kernels


def _gradients(coords: np.ndarray):
    """Batched shape gradients: coords (ne, n, d) -> grads (ne, n, d), measure (ne,)."""
    d = coords.shape[2]
    edges = coords[:, 1:, :] - coords[:, :1, :]
    det = np.linalg.det(edges)
    scale = np.max(np.linalg.norm(edges, axis=2), axis=1)
    if np.any(np.abs(det) <= 1e-14 * scale**d):
        raise MeshError("degenerate element (zero measure)")
    inv = np.linalg.inv(edges)
    grads = np.empty_like(coords)
    grads[:, 1:, :] = np.swapaxes(inv, 1, 2)
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return grads, np.abs(det) / math.factorial(d)


def shape_gradients(element_coords):
    """Constant gradients of the linear shape functions and the element measure.

    >>> g, v = shape_gradients([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    >>> g[0].tolist(), round(v * 6, 12)
    ([-1.0, -1.0, -1.0], 1.0)
    """
    coords = np.asarray(element_coords, dtype=float)[None]
    grads, measure = _gradients(coords)
    return grads[0], float(measure[0])


def _metric_from_gradients(grads: np.ndarray):
    # parent coordinates zeta_k are the shape functions of nodes 2..n
    dz = grads[:, 1:, :]
    xi = np.einsum("eki,ekj->eij", dz, dz)
    return xi, np.einsum("eij,eij->e", xi, xi)


def covariant_metric(element_coords):
    """Covariant metric ``xi_ij = sum_k dzeta_k/dx_i dzeta_k/dx_j`` and ``xi:xi``."""
    grads, _ = shape_gradients(element_coords)
    xi, xx = _metric_from_gradients(grads[None])
    return xi[0], float(xx[0])


def stabilization_tau(config: CaseConfig, xi_colon_xi):
    """Real and imaginary parts of the stabilization parameter (time units).

    Works on scalars or arrays of ``xi:xi``.
    """
    xx = np.asarray(xi_colon_xi, dtype=float)
    if np.any(xx <= 0):
        raise ValueError("xi:xi must be positive")
    rw = config.rho * config.omega
    denom = rw**2 + config.mu**2 * xx
    tau_r = config.c_stab * config.mu * np.sqrt(xx) / denom
    tau_i = config.c_stab * rw / denom
    if tau_r.ndim == 0:
        return float(tau_r), float(tau_i)
    return tau_r, tau_i


@dataclass
class ElementMatrices:
    L: np.ndarray
    G: np.ndarray
    D: np.ndarray
    M: np.ndarray
    tau_r: float
    tau_i: float


def _mass_factor(d: int) -> float:
    return 1.0 / ((d + 1) * (d + 2))


def element_matrices(element_coords, config: CaseConfig) -> ElementMatrices:
    """Exact L, G, D, M integrals on one linear simplex plus its tau values.

    ``G[A, B] = grad N_A * |e|/n`` and ``D[A, B] = G[B, A]``.
    """
    grads, vol = shape_gradients(element_coords)
    n, d = grads.shape
    L = vol * grads @ grads.T
    M = vol * _mass_factor(d) * (np.ones((n, n)) + np.eye(n))
    G = np.broadcast_to(grads[:, None, :] * (vol / n), (n, n, d)).copy()
    D = np.swapaxes(G, 0, 1).copy()
    _, xx = _metric_from_gradients(grads[None])
    tau_r, tau_i = stabilization_tau(config, xx[0])
    return ElementMatrices(L=L, G=G, D=D, M=M, tau_r=tau_r, tau_i=tau_i)


def boundary_load(mesh: Mesh, patch: str, h_r, h_i):
    """Consistent nodal loads ``int N_A h dGamma`` for constant traction on a patch.

    Returns ``(load_r, load_i)``, each (n_nodes, n_sd), before any sign
    convention is applied.
    """
    if patch not in mesh.patches:
        raise KeyError(f"unknown patch {patch!r}")
    facets = mesh.patches[patch]
    d = mesh.dimension
    x = mesh.nodes[facets]
    if d == 3:
        measure = 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)
    else:
        measure = np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
    share = np.repeat(measure / d, d)
    weight = np.bincount(facets.ravel(), weights=share, minlength=mesh.n_nodes)
    h_r = np.asarray(h_r, dtype=float)
    h_i = np.asarray(h_i, dtype=float)
    return weight[:, None] * h_r[None, :], weight[:, None] * h_i[None, :]


# ---------------------------------------------------------------------------
# global assembly


def dof_layout(n_sd: int) -> dict:
    """Offsets of each field inside a node's interleaved block."""
    return {
        "u_r": np.arange(n_sd),
        "p_r": n_sd,
        "u_i": np.arange(n_sd + 1, 2 * n_sd + 1),
        "p_i": 2 * n_sd + 1,
        "size": 2 * (n_sd + 1),
    }


def block_pattern(n_sd: int) -> np.ndarray:
    """Structural-nonzero mask of one node-pair block."""
    lay = dof_layout(n_sd)
    b = lay["size"]
    mask = np.zeros((b, b), dtype=bool)
    ur, ui, pr, pi = lay["u_r"], lay["u_i"], lay["p_r"], lay["p_i"]
    mask[ur, ur] = mask[ui, ui] = True
    mask[ur, ui] = mask[ui, ur] = True
    mask[ur, pr] = mask[pr, ur] = True
    mask[ui, pi] = mask[pi, ui] = True
    mask[pr, pr] = mask[pi, pi] = mask[pr, pi] = mask[pi, pr] = True
    return mask


@dataclass
class NodeOperators:
    """Global node-level matrices stored per node pair (CSR pattern)."""

    indptr: np.ndarray
    indices: np.ndarray
    rows: np.ndarray
    transpose: np.ndarray
    L: np.ndarray
    M: np.ndarray
    L_tau_r: np.ndarray
    L_tau_i: np.ndarray
    G: np.ndarray  # (npairs, n_sd)
    D: np.ndarray  # (npairs, n_sd)

    def matrix(self, name: str, component: int | None = None):
        import scipy.sparse as sp

        vals = getattr(self, name)
        if component is not None:
            vals = vals[:, component]
        n = len(self.indptr) - 1
        return sp.csr_matrix((vals, self.indices, self.indptr), shape=(n, n))


def node_operators(mesh: Mesh, config: CaseConfig) -> NodeOperators:
    elements = mesh.elements
    ne, n = elements.shape
    d = mesh.dimension
    nn = mesh.n_nodes
    grads, vol = _gradients(mesh.nodes[elements])
    _, xx = _metric_from_gradients(grads)
    tau_r, tau_i = stabilization_tau(config, xx)

    Le = vol[:, None, None] * np.einsum("eai,ebi->eab", grads, grads)
    Me = (vol * _mass_factor(d))[:, None, None] * (np.ones((n, n)) + np.eye(n))[None]
    Ge = np.broadcast_to((grads * (vol / n)[:, None, None])[:, :, None, :], (ne, n, n, d))

    A = np.repeat(elements, n, axis=1).ravel()
    B = np.tile(elements, (1, n)).ravel()
    key = A * nn + B
    ukey, inverse = np.unique(key, return_inverse=True)
    npairs = len(ukey)
    rows = ukey // nn
    cols = ukey % nn
    indptr = np.zeros(nn + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    transpose = np.searchsorted(ukey, cols * nn + rows)

    def acc(values):
        return np.bincount(inverse, weights=values.ravel(), minlength=npairs)

    def mirror(vals):
        # take the lower-triangle values from their upper twins so K is exactly symmetric
        lower = rows > cols
        vals[lower] = vals[transpose[lower]]
        return vals

    L = mirror(acc(Le))
    M = mirror(acc(Me))
    Ltr = mirror(acc(tau_r[:, None, None] * Le))
    Lti = mirror(acc(tau_i[:, None, None] * Le))
    G = np.stack([acc(Ge[..., k]) for k in range(d)], axis=1)
    D = G[transpose]
    return NodeOperators(indptr=indptr, indices=cols, rows=rows, transpose=transpose,
                         L=L, M=M, L_tau_r=Ltr, L_tau_i=Lti, G=G, D=D)


@dataclass
class BlockSystem:
    """Assembled block system over all mesh nodes plus the free-unknown map.

    ``matrix`` and ``rhs`` cover every node's full block; ``free`` marks the
    scalar unknowns that are actually solved for (Dirichlet velocity slots
    are excluded).  ``free_node_index[k]`` is the reduced slot of scalar
    unknown k, or -1.
    """

    mesh: Mesh
    config: CaseConfig
    matrix: BlockSparseMatrix
    rhs: np.ndarray
    free: np.ndarray
    free_node_index: np.ndarray
    g_r: np.ndarray
    g_i: np.ndarray
    dirichlet_nodes: np.ndarray
    operators: NodeOperators = field(repr=False)

    @property
    def n_sd(self) -> int:
        return self.mesh.dimension

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    def reduced_matrix(self):
        """Masked CSR of the free-unknown system."""
        return self.matrix.to_csr(masked=True, keep=self.free)

    def reduced_rhs(self) -> np.ndarray:
        return self.rhs[self.free]

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Full interleaved vector from a reduced solution, with g re-injected."""
        lay = dof_layout(self.n_sd)
        b = lay["size"]
        x = np.zeros(self.mesh.n_nodes * b)
        x[self.free] = x_free
        X = x.reshape(-1, b)
        dn = self.dirichlet_nodes
        X[dn[:, None], lay["u_r"][None, :]] = self.g_r[dn]
        X[dn[:, None], lay["u_i"][None, :]] = self.g_i[dn]
        return x

    def segment_permutation(self) -> np.ndarray:
        """Indices mapping the interleaved layout to ``[U_r | P_r | U_i | P_i]`` segments."""
        lay = dof_layout(self.n_sd)
        b = lay["size"]
        base = np.arange(self.mesh.n_nodes)[:, None] * b
        return np.concatenate([
            (base + lay["u_r"][None, :]).ravel(),
            (base[:, 0] + lay["p_r"]),
            (base + lay["u_i"][None, :]).ravel(),
            (base[:, 0] + lay["p_i"]),
        ])

    def segment_view(self):
        """Full (unreduced) matrix and rhs reordered into the four-segment layout."""
        perm = self.segment_permutation()
        K = self.matrix.to_csr(masked=True)
        return K[perm][:, perm], self.rhs[perm]


def _dirichlet_data(mesh: Mesh, config: CaseConfig):
    d = mesh.dimension
    g_r = np.zeros((mesh.n_nodes, d))
    g_i = np.zeros((mesh.n_nodes, d))
    is_dir = np.zeros(mesh.n_nodes, dtype=bool)
    for bc in config.boundary_conditions:
        if bc.kind != "dirichlet":
            continue
        facets = mesh.patches[bc.patch]
        if len(facets) == 0:
            raise ConfigError(f"Dirichlet condition on patch {bc.patch!r} which has no facets")
        nodes = np.unique(facets)
        # later conditions override earlier ones on shared nodes
        g_r[nodes] = bc.value_real
        g_i[nodes] = bc.value_imag
        is_dir[nodes] = True
    return g_r, g_i, is_dir


def assemble(mesh: Mesh, config: CaseConfig) -> BlockSystem:
    d = mesh.dimension
    for bc in config.boundary_conditions:
        if bc.patch not in mesh.patches:
            raise ConfigError(f"boundary condition references missing patch {bc.patch!r}")
        if len(bc.value_real) != d:
            raise ConfigError(f"boundary condition on {bc.patch!r}: expected {d} components")

    ops = node_operators(mesh, config)
    lay = dof_layout(d)
    b = lay["size"]
    ur, ui, pr, pi = lay["u_r"], lay["u_i"], lay["p_r"], lay["p_i"]
    mu, rw = config.mu, config.rho * config.omega
    npairs = len(ops.indices)

    blocks = np.zeros((npairs, b, b))
    for k in range(d):
        blocks[:, ur[k], ur[k]] = mu * ops.L
        blocks[:, ui[k], ui[k]] = -mu * ops.L
        blocks[:, ur[k], ui[k]] = -rw * ops.M
        blocks[:, ui[k], ur[k]] = -rw * ops.M
        blocks[:, ur[k], pr] = -ops.G[:, k]
        blocks[:, pr, ur[k]] = -ops.D[:, k]
        blocks[:, ui[k], pi] = ops.G[:, k]
        blocks[:, pi, ui[k]] = ops.D[:, k]
    blocks[:, pr, pr] = -ops.L_tau_r
    blocks[:, pi, pi] = ops.L_tau_r
    blocks[:, pr, pi] = ops.L_tau_i
    blocks[:, pi, pr] = ops.L_tau_i
    matrix = BlockSparseMatrix(ops.indptr, ops.indices, blocks, block_pattern(d))

    # right-hand side -R
    g_r, g_i, is_dir = _dirichlet_data(mesh, config)
    h_r = np.zeros((mesh.n_nodes, d))
    h_i = np.zeros((mesh.n_nodes, d))
    for bc in config.boundary_conditions:
        if bc.kind == "neumann":
            lr, li = boundary_load(mesh, bc.patch, bc.value_real, bc.value_imag)
            h_r += lr
            h_i += li
    Lm = ops.matrix("L")
    Mm = ops.matrix("M")
    Dg_r = sum(ops.matrix("D", k) @ g_r[:, k] for k in range(d))
    Dg_i = sum(ops.matrix("D", k) @ g_i[:, k] for k in range(d))
    R = np.zeros((mesh.n_nodes, b))
    R[:, ur] = -h_r + mu * (Lm @ g_r) - rw * (Mm @ g_i)
    R[:, ui] = h_i - mu * (Lm @ g_i) - rw * (Mm @ g_r)
    R[:, pr] = -Dg_r
    R[:, pi] = Dg_i
    rhs = -R.ravel()

    free = np.ones((mesh.n_nodes, b), dtype=bool)
    free[np.ix_(is_dir, ur)] = False
    free[np.ix_(is_dir, ui)] = False
    free = free.ravel()
    free_index = np.full(free.shape, -1, dtype=np.int64)
    free_index[free] = np.arange(int(free.sum()))
    return BlockSystem(
        mesh=mesh, config=config, matrix=matrix, rhs=rhs, free=free,
        free_node_index=free_index, g_r=g_r, g_i=g_i,
        dirichlet_nodes=np.nonzero(is_dir)[0], operators=ops,
    )
