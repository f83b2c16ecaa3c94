"""Batch driver: ``freqstokes {generate,solve,verify,sweep,womersley-table}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assembly import ConfigError, CaseConfig, load_case
from .mesh import (Mesh, MeshError, generate_channel, generate_pipe, pipe_counts_for_target,
                   read_mesh, write_mesh)
from .postproc import (LineSpec, error_norm, export_csv_profile, export_vtk, mass_imbalance,
                       patch_flow_rate)
from .solver import solve, traction_driven_case
from .womersley import (ChannelReference, WomersleyReference, channel_flow_rate,
                        pipe_flow_rate, write_womersley_table)

log = logging.getLogger("freqstokes")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MESH = 4
EXIT_NOT_CONVERGED = 5

#: the eleven-point Womersley grid 0, sqrt(2), 2, ..., 32
ALPHA_GRID = [0.0] + [2 ** (k / 2) for k in range(1, 11)]
SWEEP_PARAMETERS = ("alpha", "tolerance", "c_stab", "mesh_resolution")


# ---------------------------------------------------------------------------
# geometry-aware helpers


@dataclass(frozen=True)
class Geometry:
    """Straight pipe along z (3D) or channel along x (2D), inferred from node extents."""

    dimension: int
    radius: float  # pipe radius or channel half height
    length: float
    center: float  # channel midplane y; 0 for pipes

    @classmethod
    def of(cls, mesh: Mesh) -> "Geometry":
        x = mesh.nodes
        if mesh.dimension == 3:
            return cls(3, float(np.hypot(x[:, 0], x[:, 1]).max()), float(np.ptp(x[:, 2])), 0.0)
        lo, hi = x[:, 1].min(), x[:, 1].max()
        return cls(2, float(hi - lo) / 2, float(np.ptp(x[:, 0])), float(hi + lo) / 2)

    def omega_for(self, alpha: float, config: CaseConfig) -> float:
        return alpha**2 * config.mu / (config.rho * self.radius**2)

    def alpha_for(self, config: CaseConfig) -> float:
        return self.radius * math.sqrt(config.rho * config.omega / config.mu)

    def reference(self, config: CaseConfig):
        h = _drive(config, self.dimension)
        alpha = self.alpha_for(config)
        if self.dimension == 3:
            return WomersleyReference(alpha, self.radius, self.length, config.mu, config.rho, h)
        return ChannelReference(alpha, self.radius, self.length, config.mu, config.rho, h,
                                center=self.center)

    def reference_flow_rate(self, ref) -> complex:
        if self.dimension == 3:
            return pipe_flow_rate(ref)
        return channel_flow_rate(ref)

    def profile_line(self, ref) -> LineSpec:
        if self.dimension == 3:
            return LineSpec((0.0, 0.0, self.length / 2), (1.0, 0.0, 0.0), 2,
                            self.radius, ref.steady_centerline)
        return LineSpec((self.length / 2, self.center), (0.0, 1.0), 0,
                        self.radius, ref.steady_centerline)


def _drive(config: CaseConfig, dimension: int) -> float:
    # axial traction magnitude on the inlet, 1 if absent
    axis = 2 if dimension == 3 else 0
    for bc in config.boundary_conditions:
        if bc.patch == "inlet" and bc.kind == "neumann":
            return abs(bc.value_real[axis]) or 1.0
    return 1.0


def max_workers(requested: int) -> int:
    cap = os.environ.get("FREQSTOKES_THREADS")
    n = max(1, requested)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _flow_patches(mesh: Mesh) -> list[str]:
    return sorted(mesh.patches)


# ---------------------------------------------------------------------------
# case evaluation shared by verify and sweep


def evaluate(mesh: Mesh, config: CaseConfig) -> dict:
    """Solve one case and collect the verification metrics."""
    geom = Geometry.of(mesh)
    alpha = geom.alpha_for(config)
    field = solve(mesh, config, alpha=alpha)
    ref = geom.reference(config)
    q0 = geom.reference_flow_rate(dataclasses.replace(ref, alpha=0.0)).real
    q = patch_flow_rate(field, "outlet")
    q_ref = geom.reference_flow_rate(ref)
    return {
        "alpha": alpha,
        "error": error_norm(field, ref),
        "q_star": q / q0,
        "q_ref_star": q_ref / q0,
        "imbalance": mass_imbalance(field, _flow_patches(mesh)),
        "iterations": field.report.iterations,
        "converged": field.report.converged,
        "field": field,
    }


def _evaluate_job(args):
    mesh_doc, config_doc = args
    from .mesh import mesh_from_dict

    out = evaluate(mesh_from_dict(mesh_doc), CaseConfig.from_dict(config_doc))
    out.pop("field")
    return out


def _run_cases(cases, jobs: int):
    """Evaluate (mesh, config) pairs in input order, optionally in worker processes."""
    workers = max_workers(jobs)
    if workers == 1 or len(cases) == 1:
        results = []
        for mesh, config in cases:
            r = evaluate(mesh, config)
            r.pop("field")
            results.append(r)
        return results
    from .mesh import mesh_to_dict

    payload = [(mesh_to_dict(m), c.to_dict()) for m, c in cases]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_job, payload))


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    if args.kind == "pipe":
        if args.target_elements is not None:
            nr, naz, nax = pipe_counts_for_target(args.radius, args.length, args.target_elements,
                                                  args.n_azimuthal or 6)
        else:
            if None in (args.n_radial, args.n_axial):
                raise ConfigError("pipe needs --target-elements or --n-radial and --n-axial")
            nr, naz, nax = args.n_radial, args.n_azimuthal or 6, args.n_axial
        mesh = generate_pipe(args.radius, args.length, nr, naz, nax)
    else:
        mesh = generate_channel(args.height, args.length, args.ny, args.nx)
    write_mesh(mesh, args.output)
    print(json.dumps(mesh.stats()))
    return EXIT_OK


def _load_inputs(args):
    mesh = read_mesh(args.mesh)
    if args.case:
        config = load_case(args.case)
    else:
        config = traction_driven_case(mesh.dimension, 0.0)
    return mesh, config


def cmd_solve(args) -> int:
    mesh, config = _load_inputs(args)
    geom = Geometry.of(mesh)
    if args.alpha is not None:
        config = config.replace(omega=geom.omega_for(args.alpha, config))
    alpha = geom.alpha_for(config)
    field = solve(mesh, config, alpha=alpha)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_vtk(field, out / "solution.vtk")
    ref = geom.reference(config)
    export_csv_profile(field, geom.profile_line(ref), out / "profile.csv")
    rates = {p: patch_flow_rate(field, p) for p in _flow_patches(mesh)}
    report = {
        "config": config.to_dict(),
        "alpha": alpha,
        "mesh": mesh.stats(),
        "solver": field.report.to_dict(),
        "flow_rates": {p: [q.real, q.imag] for p, q in rates.items()},
        "mass_imbalance": mass_imbalance(field, list(rates)) if len(rates) >= 2 else None,
        "n_unknowns": field.metadata["n_unknowns"],
    }
    if not args.reproducible:
        report["timings"] = field.metadata["timings"]
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"iterations={field.report.iterations} converged={field.report.converged} "
          f"alpha={alpha:.6g}")
    return EXIT_OK if field.report.converged else EXIT_NOT_CONVERGED


def _parse_values(text: str) -> list[float]:
    try:
        return [float(eval_number(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}: {exc}") from exc


def eval_number(token: str) -> float:
    """Parse a number, also accepting ``2^-5`` and ``sqrt(2)`` forms."""
    t = token.strip().replace(" ", "")
    if t.startswith("sqrt(") and t.endswith(")"):
        return math.sqrt(eval_number(t[5:-1]))
    if "^" in t:
        base, exp = t.split("^", 1)
        return eval_number(base) ** eval_number(exp)
    return float(t)


def cmd_verify(args) -> int:
    mesh, base = _load_inputs(args)
    geom = Geometry.of(mesh)
    alphas = _parse_values(args.alphas) if args.alphas else ALPHA_GRID
    cases = [(mesh, base.replace(omega=geom.omega_for(a, base))) for a in alphas]
    results = _run_cases(cases, args.jobs)
    rows = [(a, r["error"], r["q_star"].real, r["q_star"].imag, r["q_ref_star"].real,
             r["q_ref_star"].imag, r["iterations"]) for a, r in zip(alphas, results)]
    _write_csv(args.output, ["alpha", "error_norm", "q_r_star", "q_i_star", "q_ref_r_star",
                             "q_ref_i_star", "n_itr"], rows)
    ok = all(r["converged"] for r in results)
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    base_case: CaseConfig
    mesh: Mesh | None = None
    alpha: float = 0.0
    radius: float = 1.0
    length: float = 15.0

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"unknown sweep parameter {self.parameter!r}")
        v = list(self.values)
        if not v:
            raise ConfigError("sweep values must not be empty")
        d = np.diff(v)
        if len(v) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError("sweep values must be strictly monotone")
        if self.parameter != "mesh_resolution" and self.mesh is None:
            raise ConfigError("a mesh is required for this sweep")

    def cases(self):
        out = []
        for v in self.values:
            if self.parameter == "mesh_resolution":
                nr, naz, nax = pipe_counts_for_target(self.radius, self.length, int(v))
                mesh = generate_pipe(self.radius, self.length, nr, naz, nax)
            else:
                mesh = self.mesh
            geom = Geometry.of(mesh)
            alpha = v if self.parameter == "alpha" else self.alpha
            config = self.base_case.replace(omega=geom.omega_for(alpha, self.base_case))
            if self.parameter == "tolerance":
                config = config.replace(solver_tolerance=v)
            elif self.parameter == "c_stab":
                config = config.replace(c_stab=v)
            out.append((mesh, config))
        return out


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[tuple]:
    results = _run_cases(spec.cases(), jobs)
    return [(v, r["alpha"], r["error"], r["imbalance"], r["iterations"], r["converged"])
            for v, r in zip(spec.values, results)]


def cmd_sweep(args) -> int:
    mesh = read_mesh(args.mesh) if args.mesh else None
    if args.case:
        base = load_case(args.case)
    else:
        base = traction_driven_case(mesh.dimension if mesh else 3, 0.0)
    geom = Geometry.of(mesh) if mesh else None
    spec = SweepSpec(
        parameter=args.parameter,
        values=tuple(_parse_values(args.values)),
        base_case=base,
        mesh=mesh,
        alpha=args.alpha,
        radius=geom.radius if geom else args.radius,
        length=geom.length if geom else args.length,
    )
    rows = run_sweep(spec, args.jobs)
    _write_csv(args.output, ["value", "alpha", "error_norm", "imbalance", "n_itr", "converged"],
               rows)
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_NOT_CONVERGED


def cmd_womersley_table(args) -> int:
    write_womersley_table(args.alpha, args.output, args.points)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freqstokes",
                                description="Frequency-domain stabilized Stokes solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a pipe or channel mesh")
    gsub = g.add_subparsers(dest="kind", required=True)
    gp = gsub.add_parser("pipe", help="tetrahedral cylinder along z")
    gp.add_argument("--radius", type=float, required=True)
    gp.add_argument("--length", type=float, required=True)
    gp.add_argument("--target-elements", type=int)
    gp.add_argument("--n-radial", type=int)
    gp.add_argument("--n-azimuthal", type=int)
    gp.add_argument("--n-axial", type=int)
    gp.add_argument("-o", "--output", default="mesh.json")
    gc = gsub.add_parser("channel", help="triangle channel along x")
    gc.add_argument("--height", type=float, default=1.0)
    gc.add_argument("--length", type=float, default=10.0)
    gc.add_argument("--ny", type=int, required=True)
    gc.add_argument("--nx", type=int, required=True)
    gc.add_argument("-o", "--output", default="mesh.json")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one frequency mode")
    s.add_argument("--case", help="case JSON (default: unit-traction benchmark)")
    s.add_argument("--mesh", required=True)
    s.add_argument("--alpha", type=float, help="override omega from a Womersley number")
    s.add_argument("--out", default="run")
    s.add_argument("--reproducible", action="store_true",
                   help="omit timings so outputs are byte-identical across runs")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="alpha sweep against the analytical reference")
    v.add_argument("--case")
    v.add_argument("--mesh", required=True)
    v.add_argument("--alphas", help="comma list (default: 0, sqrt(2), 2, ..., 32)")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("-o", "--output", default="verify.csv")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="sweep alpha, tolerance, c_stab or mesh resolution")
    w.add_argument("--case")
    w.add_argument("--mesh", help="mesh JSON (not used for mesh_resolution sweeps)")
    w.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    w.add_argument("--values", required=True,
                   help="comma list; accepts forms like 2^-5 and sqrt(2)")
    w.add_argument("--alpha", type=float, default=0.0, help="Womersley number of the base case")
    w.add_argument("--radius", type=float, default=1.0)
    w.add_argument("--length", type=float, default=15.0)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("-o", "--output", default="sweep.csv")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("womersley-table", help="tabulate the analytical pipe profile")
    t.add_argument("--alpha", type=float, required=True)
    t.add_argument("--points", type=int, default=51)
    t.add_argument("-o", "--output", default="womersley.csv")
    t.set_defaults(func=cmd_womersley_table)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
