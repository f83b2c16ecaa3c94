import math

import numpy as np
import pytest

from freqstokes.cli import Geometry
from freqstokes.mesh import facet_geometry
from freqstokes.postproc import (LineSpec, SolutionField, end_band_mask, error_norm,
                                 export_csv_profile, export_vtk, imbalance, mass_imbalance,
                                 patch_flow_rate, reconstruct_time, sample_line)
from freqstokes.womersley import WomersleyReference


def _field(mesh, u_r=None, u_i=None, p_r=None, p_i=None, omega=0.0):
    n, d = mesh.n_nodes, mesh.dimension
    z = np.zeros((n, d))
    return SolutionField(mesh, z if u_r is None else u_r, z if u_i is None else u_i,
                         np.zeros(n) if p_r is None else p_r,
                         np.zeros(n) if p_i is None else p_i, omega=omega)


def test_uniform_flux_equals_area(small_pipe):
    u = np.tile([0.0, 0.0, 1.0], (small_pipe.n_nodes, 1))
    f = _field(small_pipe, u, 2 * u)
    area = facet_geometry(small_pipe, small_pipe.patches["outlet"])[0].sum()
    assert patch_flow_rate(f, "outlet") == pytest.approx(area * (1 + 2j), rel=1e-14)
    assert patch_flow_rate(f, "inlet") == pytest.approx(-area * (1 + 2j), rel=1e-14)
    assert abs(patch_flow_rate(f, "wall")) < 1e-12
    assert mass_imbalance(f, ["inlet", "outlet", "wall"]) < 1e-12


def test_flux_is_linear(small_pipe):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(small_pipe.n_nodes, 3))
    b = rng.normal(size=(small_pipe.n_nodes, 3))
    qa = patch_flow_rate(_field(small_pipe, a), "outlet")
    qb = patch_flow_rate(_field(small_pipe, b), "outlet")
    qab = patch_flow_rate(_field(small_pipe, 2 * a - b), "outlet")
    assert qab == pytest.approx(2 * qa - qb, rel=1e-12)
    assert patch_flow_rate(_field(small_pipe), "outlet") == 0


def test_imbalance_examples():
    assert imbalance([1.0, -1.0]) == 0.0
    assert imbalance([1.0, -0.9]) == pytest.approx(0.1 / 1.9)
    assert imbalance([0, 0]) == 0.0
    assert imbalance([1 + 1j, -1 - 1j, 0.5j]) == pytest.approx(0.5 / (2 * math.sqrt(2) + 0.5))
    with pytest.raises(ValueError):
        mass_imbalance(None, ["inlet"])


def test_error_norm_exact_and_scaled(small_pipe):
    ref = WomersleyReference(3.0, length=4.0)
    u = np.zeros((small_pipe.n_nodes, 3), dtype=complex)
    u[:, 2] = ref.velocity_at(small_pipe.nodes)
    exact = _field(small_pipe, u.real, u.imag)
    assert error_norm(exact, ref) == 0.0
    assert error_norm(exact.scaled(1.1), ref) == pytest.approx(0.1, rel=1e-12)


def test_end_band_excludes_end_layers(small_pipe):
    band = end_band_mask(small_pipe)
    z = small_pipe.nodes[:, 2]
    dz = 4.0 / 8
    assert band[np.isclose(z, 0) | np.isclose(z, dz) | np.isclose(z, 4.0)].all()
    assert not band[np.isclose(z, 2.0)].any()


def test_reconstruct_time_examples(small_channel):
    n = small_channel.n_nodes
    one = np.ones((n, 2))
    steady = _field(small_channel, u_r=3 * one, u_i=5 * one, p_r=np.ones(n))
    mode = _field(small_channel, u_r=one, u_i=2 * one, p_i=np.ones(n), omega=2.0)
    t = 0.3
    out = reconstruct_time([steady, mode], t)
    np.testing.assert_allclose(out["u"], 3 + math.cos(0.6) - 2 * math.sin(0.6))
    np.testing.assert_allclose(out["p"], 1 - math.sin(0.6))
    with pytest.raises(ValueError, match="duplicate"):
        reconstruct_time([mode, mode], t)
    with pytest.raises(ValueError):
        reconstruct_time([], t)


def test_reconstruct_time_parseval(small_channel):
    n = small_channel.n_nodes
    rng = np.random.default_rng(1)
    base = 1.0
    modes = [_field(small_channel, u_r=np.full((n, 2), base))]
    amp2 = base**2
    for k in (1, 2, 3):
        a, b = rng.normal(size=2)
        modes.append(_field(small_channel, u_r=np.full((n, 2), a), u_i=np.full((n, 2), b),
                            omega=float(k)))
        amp2 += (a * a + b * b) / 2
    ts = np.arange(64) * 2 * math.pi / 64
    mean_sq = np.mean([reconstruct_time(modes, t)["u"][0, 0] ** 2 for t in ts])
    assert mean_sq == pytest.approx(amp2, rel=0.01)


def _parse_vtk(text):
    lines = text.splitlines()
    out = {"header": lines[:4]}
    i = 4
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n]])
            i += n + 1
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = [[int(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n]]
            out["cells_size"] = int(parts[2])
            i += n + 1
        elif parts[0] == "CELL_TYPES":
            n = int(parts[1])
            out["types"] = {int(v) for v in lines[i + 1:i + 1 + n]}
            i += n + 1
        elif parts[0] == "VECTORS":
            n = out["npd"]
            out[parts[1]] = np.array([[float(v) for v in ln.split()] for ln in lines[i + 1:i + 1 + n]])
            i += n + 1
        elif parts[0] == "SCALARS":
            n = out["npd"]
            out[parts[1]] = np.array([float(v) for v in lines[i + 2:i + 2 + n]])
            i += n + 2
        elif parts[0] == "POINT_DATA":
            out["npd"] = int(parts[1])
            i += 1
        else:
            raise AssertionError(f"unexpected line {lines[i]!r}")
    return out


@pytest.mark.parametrize("name", ["small_pipe", "small_channel"])
def test_vtk_round_trip(tmp_path, request, name):
    mesh = request.getfixturevalue(name)
    rng = np.random.default_rng(2)
    n, d = mesh.n_nodes, mesh.dimension
    f = _field(mesh, rng.normal(size=(n, d)), rng.normal(size=(n, d)), rng.normal(size=n),
               rng.normal(size=n))
    export_vtk(f, tmp_path / "s.vtk")
    v = _parse_vtk((tmp_path / "s.vtk").read_text())
    assert v["header"][0] == "# vtk DataFile Version 3.0"
    assert v["header"][2:] == ["ASCII", "DATASET UNSTRUCTURED_GRID"]
    assert v["points"].shape == (n, 3)
    np.testing.assert_array_equal(v["points"][:, :d], mesh.nodes)
    assert v["cells_size"] == mesh.n_elements * (d + 2)
    assert [c[1:] for c in v["cells"]] == mesh.elements.tolist()
    assert v["types"] == {10 if d == 3 else 5}
    np.testing.assert_array_equal(v["u_r"][:, :d], f.u_r)
    np.testing.assert_array_equal(v["u_i"][:, :d], f.u_i)
    np.testing.assert_array_equal(v["p_r"], f.p_r)
    np.testing.assert_array_equal(v["p_i"], f.p_i)


def test_steady_profile_csv(tmp_path, steady_pipe_field):
    f = steady_pipe_field
    geom = Geometry.of(f.mesh)
    line = geom.profile_line(WomersleyReference(0.0))
    export_csv_profile(f, line, tmp_path / "p.csv")
    rows = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert (tmp_path / "p.csv").read_text().startswith("coord,u_r,u_i,p_r,p_i")
    centre = rows[np.argmin(np.abs(rows[:, 0]))]
    assert centre[0] == 0.0
    assert centre[1] == pytest.approx(1.0, abs=0.05)
    assert np.all(np.diff(rows[:, 0]) > 0)
    assert rows[0, 1] == 0.0 and rows[-1, 1] == 0.0


def test_sample_line_picks_nearest_nodes(small_channel):
    f = _field(small_channel, u_r=small_channel.nodes.copy())
    s, ur, *_ = sample_line(f, LineSpec((5.0, 0.5), (0.0, 1.0), 0))
    np.testing.assert_allclose(ur, 5.0)
    assert len(s) == 5


def test_solution_field_shape_check(small_pipe):
    with pytest.raises(ValueError, match="u_r"):
        SolutionField(small_pipe, np.zeros((3, 3)), np.zeros((small_pipe.n_nodes, 3)),
                      np.zeros(small_pipe.n_nodes), np.zeros(small_pipe.n_nodes))
