"""Derived quantities and exports for frequency-domain solutions."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Mesh, facet_geometry


@dataclass
class SolutionField:
    mesh: Mesh
    u_r: np.ndarray
    u_i: np.ndarray
    p_r: np.ndarray
    p_i: np.ndarray
    omega: float = 0.0
    alpha: float | None = None
    report: object = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n, d = self.mesh.n_nodes, self.mesh.dimension
        for name in ("u_r", "u_i"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n, d):
                raise ValueError(f"{name}: expected shape {(n, d)}, got {arr.shape}")
            setattr(self, name, arr)
        for name in ("p_r", "p_i"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name}: expected shape {(n,)}, got {arr.shape}")
            setattr(self, name, arr)

    @property
    def velocity(self) -> np.ndarray:
        return self.u_r + 1j * self.u_i

    @property
    def pressure(self) -> np.ndarray:
        return self.p_r + 1j * self.p_i

    def scaled(self, a: float) -> "SolutionField":
        return SolutionField(self.mesh, a * self.u_r, a * self.u_i, a * self.p_r, a * self.p_i,
                             self.omega, self.alpha, self.report, dict(self.metadata))


def patch_flow_rate(field: SolutionField, patch: str) -> complex:
    """Outward flux ``int u.n dGamma`` through a patch, exact for linear facets."""
    mesh = field.mesh
    if patch not in mesh.patches:
        raise KeyError(f"unknown patch {patch!r}")
    facets = mesh.patches[patch]
    if len(facets) == 0:
        return 0j
    measure, normal = facet_geometry(mesh, facets)
    u = field.velocity[facets].mean(axis=1)
    return complex(np.sum(measure * np.einsum("fi,fi->f", u, normal)))


def imbalance(rates) -> float:
    """``|sum q| / sum |q|`` over complex flow rates; 0 when every flow is zero."""
    rates = np.asarray(list(rates), dtype=complex)
    total = np.abs(rates).sum()
    if total == 0:
        return 0.0
    return float(abs(rates.sum()) / total)


def mass_imbalance(field: SolutionField, patches) -> float:
    patches = list(patches)
    if len(patches) < 2:
        raise ValueError("mass imbalance needs at least two patches")
    return imbalance(patch_flow_rate(field, p) for p in patches)


def end_band_mask(mesh: Mesh, patches=("inlet", "outlet")) -> np.ndarray:
    """True for nodes of any element touching one of ``patches``."""
    on = np.zeros(mesh.n_nodes, dtype=bool)
    for p in patches:
        if p in mesh.patches:
            on[mesh.patches[p].ravel()] = True
    touching = on[mesh.elements].any(axis=1)
    band = np.zeros(mesh.n_nodes, dtype=bool)
    band[mesh.elements[touching].ravel()] = True
    return band


def error_norm(field: SolutionField, reference, exclude=("inlet", "outlet")) -> float:
    """Relative nodal 2-norm of the complex axial-velocity error.

    ``reference`` provides ``velocity_at(coords)`` and an ``axis`` index.
    Nodes within one element of the ``exclude`` patches are skipped.
    """
    keep = ~end_band_mask(field.mesh, exclude)
    coords = field.mesh.nodes[keep]
    u_ref = reference.velocity_at(coords)
    u = field.velocity[keep, reference.axis]
    denom = np.linalg.norm(u_ref)
    if denom == 0:
        raise ValueError("reference velocity has zero norm")
    return float(np.linalg.norm(u - u_ref) / denom)


def reconstruct_time(fields, t: float) -> dict:
    """Real time-domain fields ``Re sum_w field(w) exp(j w t)`` at time ``t``.

    Returns ``{"u": (n, d), "p": (n,)}``; the zero-frequency mode enters
    through its real part only.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("no modes given")
    omegas = [f.omega for f in fields]
    if len(set(omegas)) != len(omegas):
        raise ValueError(f"duplicate frequencies in {omegas}")
    if any(w < 0 for w in omegas):
        raise ValueError("frequencies must be >= 0")
    u = np.zeros_like(fields[0].u_r)
    p = np.zeros_like(fields[0].p_r)
    for f in fields:
        if f.omega == 0:
            u += f.u_r
            p += f.p_r
        else:
            c, s = np.cos(f.omega * t), np.sin(f.omega * t)
            u += f.u_r * c - f.u_i * s
            p += f.p_r * c - f.p_i * s
    return {"u": u, "p": p}


# ---------------------------------------------------------------------------
# writers

_VTK_CELL = {2: 5, 3: 10}  # triangle, tetra


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def export_vtk(field: SolutionField, path, title: str = "freqstokes solution") -> None:
    """Legacy ASCII VTK unstructured grid with point data u_r, u_i, p_r, p_i."""
    mesh = field.mesh
    path = Path(path)
    d = mesh.dimension
    n = mesh.n_nodes
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} double"]
    pad = [] if d == 3 else ["0"]
    for x in mesh.nodes:
        lines.append(" ".join([_fmt(v) for v in x] + pad))
    ne, k = mesh.elements.shape
    lines.append(f"CELLS {ne} {ne * (k + 1)}")
    for e in mesh.elements:
        lines.append(" ".join([str(k)] + [str(int(i)) for i in e]))
    lines.append(f"CELL_TYPES {ne}")
    lines.extend([str(_VTK_CELL[d])] * ne)
    lines.append(f"POINT_DATA {n}")
    for name in ("u_r", "u_i"):
        lines.append(f"VECTORS {name} double")
        for v in getattr(field, name):
            lines.append(" ".join([_fmt(c) for c in v] + pad))
    for name in ("p_r", "p_i"):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(v) for v in getattr(field, name))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"{path}: cannot write VTK file: {exc}") from exc


@dataclass(frozen=True)
class LineSpec:
    """Sampling line for profiles.

    Nodes closest to the line (within ``tolerance`` of the smallest
    distance found) are reported, ordered by their coordinate along
    ``direction``.  ``component`` selects the velocity component written;
    coordinates and velocities are divided by ``coord_scale`` and
    ``velocity_scale``.
    """

    origin: tuple
    direction: tuple
    component: int
    coord_scale: float = 1.0
    velocity_scale: float = 1.0
    tolerance: float = 1e-9


def sample_line(field: SolutionField, line: LineSpec):
    x = field.mesh.nodes
    o = np.asarray(line.origin, dtype=float)
    e = np.asarray(line.direction, dtype=float)
    e = e / np.linalg.norm(e)
    rel = x - o
    s = rel @ e
    dist = np.linalg.norm(rel - s[:, None] * e, axis=1)
    scale = np.ptp(x, axis=0).max()
    sel = np.nonzero(dist <= dist.min() + line.tolerance * scale)[0]
    sel = sel[np.argsort(s[sel], kind="stable")]
    c = line.component
    return (s[sel] / line.coord_scale,
            field.u_r[sel, c] / line.velocity_scale,
            field.u_i[sel, c] / line.velocity_scale,
            field.p_r[sel], field.p_i[sel])


def export_csv_profile(field: SolutionField, line: LineSpec, path) -> None:
    path = Path(path)
    cols = sample_line(field, line)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["coord", "u_r", "u_i", "p_r", "p_i"])
            for row in zip(*cols):
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"{path}: cannot write CSV profile: {exc}") from exc
