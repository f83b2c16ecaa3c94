"""Unstructured simplex meshes: containers, generators and the JSON mesh format.

A mesh holds linear triangles (2D) or tetrahedra (3D) plus named boundary
patches made of facets (edges in 2D, triangles in 3D).  Element connectivity
is stored in canonical positive orientation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

DEGENERACY_TOL = 1e-14


class MeshError(ValueError):
    """Invalid mesh data; the message names the offending entity."""


@dataclass(frozen=True)
class BoundaryCondition:
    """Constant boundary data on one patch.

    For ``kind == "dirichlet"`` the values are the prescribed velocity
    (real and imaginary parts); for ``"neumann"`` they are the traction.
    """

    patch: str
    kind: str
    value_real: tuple
    value_imag: tuple

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"boundary condition on {self.patch!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "value_real", tuple(float(v) for v in self.value_real))
        object.__setattr__(self, "value_imag", tuple(float(v) for v in self.value_imag))
        if len(self.value_real) != len(self.value_imag):
            raise ValueError(f"boundary condition on {self.patch!r}: real/imag length mismatch")


def _signed_measure(coords: np.ndarray) -> np.ndarray:
    """Signed volume (3D) or area (2D) of a stack of simplices, shape (ne, d+1, d)."""
    d = coords.shape[2]
    edges = coords[:, 1:, :] - coords[:, :1, :]
    return np.linalg.det(edges) / math.factorial(d)


def _local_faces(dim: int) -> list[tuple[int, ...]]:
    # face k is opposite local node k
    n = dim + 1
    return [tuple(j for j in range(n) if j != k) for k in range(n)]


@dataclass(frozen=True, eq=False)
class Mesh:
    dimension: int
    nodes: np.ndarray
    elements: np.ndarray
    patches: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = int(self.dimension)
        if dim not in (2, 3):
            raise MeshError(f"dimension: expected 2 or 3, got {self.dimension!r}")
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != dim:
            raise MeshError(f"nodes: expected shape (n, {dim}), got {nodes.shape}")
        elements = np.array(self.elements, dtype=np.int64)
        if elements.ndim != 2 or elements.shape[1] != dim + 1:
            raise MeshError(f"elements: expected shape (n, {dim + 1}), got {elements.shape}")
        n_nodes = len(nodes)
        bad = np.nonzero((elements < 0) | (elements >= n_nodes))[0]
        if len(bad):
            e = int(bad[0])
            raise MeshError(
                f"elements[{e}]: node index out of range in {elements[e].tolist()} "
                f"(node count {n_nodes})"
            )

        vol = _signed_measure(nodes[elements])
        scale = np.max(
            np.linalg.norm(nodes[elements] - nodes[elements][:, :1, :], axis=2), axis=1
        )
        degenerate = np.abs(vol) <= DEGENERACY_TOL * scale**dim
        if np.any(degenerate):
            e = int(np.nonzero(degenerate)[0][0])
            raise MeshError(f"elements[{e}]: degenerate element {elements[e].tolist()}")
        flip = vol < 0
        if np.any(flip):
            elements = elements.copy()
            elements[flip, -2], elements[flip, -1] = elements[flip, -1], elements[flip, -2].copy()

        patches = {}
        for name, facets in self.patches.items():
            arr = np.array(facets, dtype=np.int64).reshape(-1, dim)
            bad = np.nonzero(((arr < 0) | (arr >= n_nodes)).any(axis=1))[0]
            if len(bad):
                raise MeshError(
                    f"patches[{name!r}][{int(bad[0])}]: node index out of range "
                    f"(node count {n_nodes})"
                )
            arr.setflags(write=False)
            patches[str(name)] = arr

        nodes.setflags(write=False)
        elements.setflags(write=False)
        object.__setattr__(self, "dimension", dim)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "patches", patches)
        self._check_patches()

    def _check_patches(self):
        owner = self.boundary_faces
        seen: dict[tuple, str] = {}
        for name, facets in self.patches.items():
            for i, f in enumerate(facets):
                key = tuple(sorted(f.tolist()))
                if key not in owner:
                    raise MeshError(
                        f"patches[{name!r}][{i}]: facet {f.tolist()} is not a boundary "
                        "face of exactly one element"
                    )
                if key in seen:
                    raise MeshError(
                        f"patches[{name!r}][{i}]: facet {f.tolist()} already belongs to "
                        f"patch {seen[key]!r}"
                    )
                seen[key] = name

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def volumes(self) -> np.ndarray:
        return _signed_measure(self.nodes[self.elements])

    @cached_property
    def boundary_faces(self) -> dict:
        """Map sorted facet key -> (element index, local index of the opposite node)."""
        dim = self.dimension
        ne = self.n_elements
        faces = []
        for loc in _local_faces(dim):
            faces.append(np.sort(self.elements[:, loc], axis=1))
        allf = np.concatenate(faces)
        elem = np.tile(np.arange(ne), dim + 1)
        opp = np.repeat(np.arange(dim + 1), ne)
        n = max(self.n_nodes, 1)
        key = np.zeros(len(allf), dtype=np.int64)
        for j in range(dim):
            key = key * n + allf[:, j]
        _, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        once = counts[inverse] == 1
        return {
            tuple(f): (int(e), int(o))
            for f, e, o in zip(allf[once].tolist(), elem[once].tolist(), opp[once].tolist())
        }

    def patch_nodes(self, name: str) -> np.ndarray:
        return np.unique(self.patches[name])

    def stats(self) -> dict:
        return {
            "dimension": self.dimension,
            "n_nodes": self.n_nodes,
            "n_elements": self.n_elements,
            "volume": float(self.volumes.sum()),
            "patches": {k: len(v) for k, v in self.patches.items()},
        }


def facet_geometry(mesh: Mesh, facets) -> tuple[np.ndarray, np.ndarray]:
    """Measures and outward unit normals of a stack of boundary facets."""
    facets = np.asarray(facets, dtype=np.int64).reshape(-1, mesh.dimension)
    owner = mesh.boundary_faces
    opposite = np.empty(len(facets), dtype=np.int64)
    for i, f in enumerate(facets.tolist()):
        hit = owner.get(tuple(sorted(f)))
        if hit is None:
            raise MeshError(f"facet {f} is not on the boundary")
        e, loc = hit
        opposite[i] = mesh.elements[e, loc]
    x = mesh.nodes[facets]
    if mesh.dimension == 3:
        n = 0.5 * np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    else:
        t = x[:, 1] - x[:, 0]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
    measure = np.linalg.norm(n, axis=1)
    n = n / measure[:, None]
    inward = np.einsum("ij,ij->i", n, mesh.nodes[opposite] - x[:, 0]) > 0
    n[inward] *= -1.0
    return measure, n


def boundary_facet_geometry(mesh: Mesh, facet) -> tuple[float, np.ndarray]:
    """Area (3D) or length (2D) and outward unit normal of one boundary facet."""
    measure, normal = facet_geometry(mesh, [facet])
    return float(measure[0]), normal[0]


def _orient_outward(mesh_nodes, elements, facets, dim):
    # reorder facet nodes so the right-hand normal points outward
    tmp = Mesh(dim, mesh_nodes, elements, {})
    if len(facets) == 0:
        return facets
    _, normal = facet_geometry(tmp, facets)
    x = mesh_nodes[facets]
    if dim == 3:
        raw = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    else:
        t = x[:, 1] - x[:, 0]
        raw = np.stack([t[:, 1], -t[:, 0]], axis=1)
    flip = np.einsum("ij,ij->i", raw, normal) < 0
    facets = facets.copy()
    facets[flip, 0], facets[flip, 1] = facets[flip, 1], facets[flip, 0].copy()
    return facets


# ---------------------------------------------------------------------------
# generators


def disc_node_count(n_radial: int, n_azimuthal: int) -> int:
    """Nodes of the ring disc: centre plus ``n_azimuthal * k`` nodes on ring k."""
    return 1 + n_azimuthal * n_radial * (n_radial + 1) // 2


def _disc(radius: float, n_radial: int, n_azimuthal: int):
    """Concentric-ring disc triangulation.

    Ring k (k = 1..n_radial) carries ``n_azimuthal*k`` equally spaced nodes,
    the first at angle zero.  Adjacent rings are stitched by sweeping both
    rings in angle and always advancing the one whose next node comes first.
    """
    pts = [(0.0, 0.0)]
    ring_start = [0]
    for k in range(1, n_radial + 1):
        ring_start.append(len(pts))
        m = n_azimuthal * k
        r = radius * k / n_radial
        for o in range(m):
            theta = 2.0 * math.pi * o / m
            pts.append((r * math.cos(theta), r * math.sin(theta)))
    tris = []
    for o in range(n_azimuthal):
        tris.append((0, 1 + o, 1 + (o + 1) % n_azimuthal))
    for k in range(2, n_radial + 1):
        m, n = n_azimuthal * (k - 1), n_azimuthal * k
        s_in, s_out = ring_start[k - 1], ring_start[k]
        i = o = 0
        while i < m or o < n:
            # advance outer when its next node has the smaller (or equal) angle
            if i == m or (o < n and (o + 1) * m <= (i + 1) * n):
                tris.append((s_in + i % m, s_out + o % n, s_out + (o + 1) % n))
                o += 1
            else:
                tris.append((s_in + i % m, s_out + o % n, s_in + (i + 1) % m))
                i += 1
    return np.array(pts), np.array(tris, dtype=np.int64)


def _classify_boundary(nodes, elements, dim, rules):
    tmp = Mesh(dim, nodes, elements, {})
    keys = list(tmp.boundary_faces.keys())
    faces = np.array(keys, dtype=np.int64).reshape(-1, dim)
    patches = {name: [] for name, _ in rules}
    for f in faces:
        x = nodes[f]
        for name, test in rules:
            if test(x):
                patches[name].append(f)
                break
        else:
            raise AssertionError(f"unclassified boundary facet {f}")
    out = {}
    for name, facets in patches.items():
        arr = np.array(facets, dtype=np.int64).reshape(-1, dim)
        out[name] = _orient_outward(nodes, tmp.elements, arr, dim)
    return tmp.elements, out


def generate_pipe(radius: float, length: float, n_radial: int, n_azimuthal: int,
                  n_axial: int) -> Mesh:
    """Tetrahedral mesh of a circular cylinder along +z.

    A ring disc (see :func:`_disc`) is extruded into ``n_axial`` layers; each
    prism is split into 3 tetrahedra with every quad face cut along the
    diagonal through its lowest global node index, so neighbouring prisms
    conform.  Patches: ``inlet`` (z=0), ``outlet`` (z=length), ``wall``.
    """
    if min(n_radial, n_axial) < 2:
        raise ValueError("n_radial and n_axial must be >= 2")
    if n_azimuthal < 3:
        raise ValueError("n_azimuthal must be >= 3 (two nodes on the first ring are collinear with the centre)")
    if not (radius > 0 and length > 0):
        raise ValueError("radius and length must be positive")

    disc_xy, tris = _disc(radius, n_radial, n_azimuthal)
    nd = len(disc_xy)
    z = np.linspace(0.0, length, n_axial + 1)
    z[-1] = length
    nodes = np.empty(((n_axial + 1) * nd, 3))
    for layer in range(n_axial + 1):
        nodes[layer * nd:(layer + 1) * nd, :2] = disc_xy
        nodes[layer * nd:(layer + 1) * nd, 2] = z[layer]

    tris = np.sort(tris, axis=1)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    tets = []
    for layer in range(n_axial):
        lo, hi = layer * nd, (layer + 1) * nd
        tets.append(np.stack([a + lo, b + lo, c + lo, c + hi], axis=1))
        tets.append(np.stack([a + lo, b + lo, b + hi, c + hi], axis=1))
        tets.append(np.stack([a + lo, a + hi, b + hi, c + hi], axis=1))
    elements = np.concatenate(tets)

    elements, patches = _classify_boundary(nodes, elements, 3, [
        ("inlet", lambda x: np.all(x[:, 2] == 0.0)),
        ("outlet", lambda x: np.all(x[:, 2] == length)),
        ("wall", lambda x: True),
    ])
    return Mesh(3, nodes, elements, patches)


def pipe_counts_for_target(radius: float, length: float, target_elements: int,
                           n_azimuthal: int = 6) -> tuple[int, int, int]:
    """Pick (n_radial, n_azimuthal, n_axial) giving about ``target_elements`` tetrahedra.

    Among candidates the one whose axial spacing is closest (log-ratio) to
    the radial spacing wins.
    """
    best = None
    for n_radial in range(2, 200):
        per_layer = 3 * n_azimuthal * n_radial**2
        n_axial = round(target_elements / per_layer)
        if n_axial < 2:
            break
        ratio = abs(math.log((length / n_axial) / (radius / n_radial)))
        if best is None or ratio < best[0]:
            best = (ratio, n_radial, n_axial)
    if best is None:
        raise ValueError(f"target of {target_elements} elements is too small")
    return best[1], n_azimuthal, best[2]


def generate_channel(height: float, length: float, n_y: int, n_x: int) -> Mesh:
    """Triangle mesh of [0, length] x [0, height]; each grid cell is cut along
    its lower-left to upper-right diagonal.  Patches: ``inlet`` (x=0),
    ``outlet`` (x=length), ``wall`` (y=0 and y=height)."""
    if n_y < 1 or n_x < 1:
        raise ValueError("n_y and n_x must be >= 1")
    if not (height > 0 and length > 0):
        raise ValueError("height and length must be positive")
    xs = np.linspace(0.0, length, n_x + 1)
    ys = np.linspace(0.0, height, n_y + 1)
    xs[-1], ys[-1] = length, height
    X, Y = np.meshgrid(xs, ys)  # node (j, i) -> j*(n_x+1) + i
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n_x + 1) * (n_y + 1)).reshape(n_y + 1, n_x + 1)
    p00, p10 = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    p01, p11 = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    elements = np.concatenate([
        np.stack([p00, p10, p11], axis=1),
        np.stack([p00, p11, p01], axis=1),
    ])
    patches = {
        "inlet": np.stack([idx[1:, 0], idx[:-1, 0]], axis=1),
        "outlet": np.stack([idx[:-1, -1], idx[1:, -1]], axis=1),
        "wall": np.concatenate([
            np.stack([idx[0, :-1], idx[0, 1:]], axis=1),
            np.stack([idx[-1, 1:], idx[-1, :-1]], axis=1),
        ]),
    }
    return Mesh(2, nodes, elements, patches)


# ---------------------------------------------------------------------------
# JSON mesh format


def mesh_to_dict(mesh: Mesh) -> dict:
    return {
        "dimension": mesh.dimension,
        "nodes": mesh.nodes.tolist(),
        "elements": mesh.elements.tolist(),
        "patches": {k: v.tolist() for k, v in mesh.patches.items()},
    }


def write_mesh(mesh: Mesh, path) -> None:
    path = Path(path)
    try:
        with path.open("w") as fh:
            json.dump(mesh_to_dict(mesh), fh)
    except OSError as exc:
        raise OSError(f"{path}: cannot write mesh: {exc}") from exc


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise MeshError(f"duplicate key {k!r}")
        out[k] = v
    return out


def mesh_from_dict(doc) -> Mesh:
    if not isinstance(doc, dict):
        raise MeshError("mesh document must be a JSON object")
    for key in ("dimension", "nodes", "elements", "patches"):
        if key not in doc:
            raise MeshError(f"missing field {key!r}")
    dim = doc["dimension"]
    if dim not in (2, 3) or isinstance(dim, bool):
        raise MeshError(f"dimension: expected 2 or 3, got {dim!r}")
    nodes = doc["nodes"]
    if not isinstance(nodes, list):
        raise MeshError("nodes: expected an array")
    for i, x in enumerate(nodes):
        if (not isinstance(x, list) or len(x) != dim
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)):
            raise MeshError(f"nodes[{i}]: expected {dim} numbers, got {x!r}")
    elements = doc["elements"]
    if not isinstance(elements, list):
        raise MeshError("elements: expected an array")
    for i, e in enumerate(elements):
        if (not isinstance(e, list) or len(e) != dim + 1
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in e)):
            raise MeshError(f"elements[{i}]: expected {dim + 1} integers, got {e!r}")
        for v in e:
            if v < 0 or v >= len(nodes):
                raise MeshError(
                    f"elements[{i}]: node index {v} out of range (node count {len(nodes)})"
                )
    patches = doc["patches"]
    if not isinstance(patches, dict):
        raise MeshError("patches: expected an object")
    for name, facets in patches.items():
        if not isinstance(facets, list):
            raise MeshError(f"patches[{name!r}]: expected an array")
        for i, f in enumerate(facets):
            if (not isinstance(f, list) or len(f) != dim
                    or not all(isinstance(v, int) and not isinstance(v, bool) for v in f)):
                raise MeshError(f"patches[{name!r}][{i}]: expected {dim} integers, got {f!r}")
    return Mesh(
        dim,
        np.array(nodes, dtype=float).reshape(-1, dim),
        np.array(elements, dtype=np.int64).reshape(-1, dim + 1),
        {k: np.array(v, dtype=np.int64).reshape(-1, dim) for k, v in patches.items()},
    )


def read_mesh(path) -> Mesh:
    path = Path(path)
    try:
        with path.open() as fh:
            doc = json.load(fh, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise MeshError(f"{path}: invalid JSON: {exc}") from exc
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc
    try:
        return mesh_from_dict(doc)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc
