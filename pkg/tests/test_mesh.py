import json
import math

import numpy as np
import pytest

from freqstokes.mesh import (Mesh, MeshError, boundary_facet_geometry, disc_node_count,
                             facet_geometry, generate_channel, generate_pipe, mesh_from_dict,
                             mesh_to_dict, pipe_counts_for_target, read_mesh, write_mesh)

from conftest import UNIT_TET


def test_pipe_counts_match_enumeration(tiny_pipe):
    # disc: centre + 4 + 8 ring nodes, three layers
    assert disc_node_count(2, 4) == 13
    assert tiny_pipe.n_nodes == 39
    assert tiny_pipe.n_elements == 3 * 4 * 2**2 * 2
    assert len(tiny_pipe.patches["inlet"]) == 4 * 2**2
    assert len(tiny_pipe.patches["outlet"]) == 4 * 2**2
    assert len(tiny_pipe.patches["wall"]) == 2 * (4 * 2) * 2


def test_channel_counts(small_channel):
    assert small_channel.n_nodes == 205
    assert small_channel.n_elements == 320
    assert len(small_channel.patches["inlet"]) == 4
    assert len(small_channel.patches["outlet"]) == 4
    assert len(small_channel.patches["wall"]) == 80


def test_two_triangle_square():
    m = generate_channel(1.0, 1.0, 1, 1)
    assert (m.n_nodes, m.n_elements) == (4, 2)
    assert np.isclose(m.volumes.sum(), 1.0)


def test_every_boundary_facet_in_one_patch(small_pipe):
    all_facets = np.concatenate(list(small_pipe.patches.values()))
    keys = {tuple(sorted(f)) for f in all_facets.tolist()}
    assert len(keys) == len(all_facets)
    assert keys == set(small_pipe.boundary_faces)


def test_elements_positively_oriented(small_pipe, small_channel):
    for m in (small_pipe, small_channel):
        x = m.nodes[m.elements]
        det = np.linalg.det(x[:, 1:] - x[:, :1])
        assert np.all(det > 0)


def test_negative_element_is_flipped():
    m = Mesh(3, UNIT_TET, [[0, 2, 1, 3]], {})
    x = m.nodes[m.elements[0]]
    assert np.linalg.det(x[1:] - x[0]) > 0


def test_unit_tet_face_geometry(unit_tet_mesh):
    area, normal = boundary_facet_geometry(unit_tet_mesh, [0, 1, 2])
    assert area == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(normal, [0, 0, -1], atol=1e-15)
    area, normal = boundary_facet_geometry(unit_tet_mesh, [1, 2, 3])
    assert area == pytest.approx(math.sqrt(3) / 2, rel=1e-14)
    np.testing.assert_allclose(normal, np.ones(3) / math.sqrt(3), atol=1e-15)


def test_2d_edge_length():
    m = Mesh(2, [[0, 0], [2, 0], [0, 2]], [[0, 1, 2]], {"bottom": [[0, 1]]})
    length, normal = boundary_facet_geometry(m, [0, 1])
    assert length == pytest.approx(2.0)
    np.testing.assert_allclose(normal, [0, -1], atol=1e-15)


@pytest.mark.parametrize("name", ["pipe", "channel"])
def test_closed_surface_normals_sum_to_zero(name, small_pipe, small_channel):
    m = small_pipe if name == "pipe" else small_channel
    total = np.zeros(m.dimension)
    area = 0.0
    for facets in m.patches.values():
        a, n = facet_geometry(m, facets)
        total += (a[:, None] * n).sum(axis=0)
        area += a.sum()
    assert np.linalg.norm(total) <= 1e-12 * area


def test_patch_facets_follow_right_hand_outward_rule(small_pipe):
    for facets in small_pipe.patches.values():
        _, n = facet_geometry(small_pipe, facets)
        x = small_pipe.nodes[facets]
        raw = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        assert np.all(np.einsum("ij,ij->i", raw, n) > 0)


def test_pipe_patch_positions(small_pipe):
    x = small_pipe.nodes
    assert np.all(x[small_pipe.patch_nodes("inlet"), 2] == 0)
    assert np.all(x[small_pipe.patch_nodes("outlet"), 2] == 4.0)
    r = np.hypot(x[small_pipe.patch_nodes("wall"), 0], x[small_pipe.patch_nodes("wall"), 1])
    np.testing.assert_allclose(r, 1.0, rtol=1e-14)
    _, n = facet_geometry(small_pipe, small_pipe.patches["inlet"])
    np.testing.assert_allclose(n, np.tile([0, 0, -1.0], (len(n), 1)), atol=1e-14)


def test_m1_scale_volume():
    counts = pipe_counts_for_target(1.0, 15.0, 24000)
    m = generate_pipe(1.0, 15.0, *counts)
    assert abs(m.n_elements - 24000) / 24000 < 0.05
    assert m.volumes.sum() == pytest.approx(math.pi * 15, rel=0.02)


def test_generator_rejects_bad_counts():
    with pytest.raises(ValueError):
        generate_pipe(1.0, 1.0, 2, 2, 2)
    with pytest.raises(ValueError):
        generate_pipe(-1.0, 1.0, 2, 4, 2)
    with pytest.raises(ValueError):
        generate_channel(1.0, 1.0, 0, 3)


def test_json_round_trip(tmp_path, small_pipe):
    path = tmp_path / "m.json"
    write_mesh(small_pipe, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.nodes, small_pipe.nodes)
    np.testing.assert_array_equal(back.elements, small_pipe.elements)
    assert back.patches.keys() == small_pipe.patches.keys()
    for k in back.patches:
        np.testing.assert_array_equal(back.patches[k], small_pipe.patches[k])


def test_out_of_range_index_names_element(tiny_pipe):
    doc = mesh_to_dict(tiny_pipe)
    doc["elements"][7][2] = 10_000
    with pytest.raises(MeshError, match=r"elements\[7\].*10000.*39"):
        mesh_from_dict(doc)


@pytest.mark.parametrize("mutate, pattern", [
    (lambda d: d.pop("patches"), "patches"),
    (lambda d: d.update(dimension=4), "dimension"),
    (lambda d: d["nodes"].__setitem__(3, [0.0, "x", 1.0]), r"nodes\[3\]"),
    (lambda d: d["patches"]["wall"].__setitem__(0, [1, 2]), r"patches\['wall'\]\[0\]"),
])
def test_malformed_documents(tiny_pipe, mutate, pattern):
    doc = mesh_to_dict(tiny_pipe)
    mutate(doc)
    with pytest.raises(MeshError, match=pattern):
        mesh_from_dict(doc)


def test_read_mesh_reports_path(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"dimension": 3, "dimension": 2}')
    with pytest.raises(MeshError, match="bad.json"):
        read_mesh(path)
    path.write_text("{not json")
    with pytest.raises(MeshError, match="bad.json"):
        read_mesh(path)


def test_degenerate_element_rejected():
    with pytest.raises(MeshError):
        Mesh(3, [[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2, 3]], {})


def test_interior_facet_in_patch_rejected():
    nodes = np.vstack([UNIT_TET, [[1, 1, 1]]])
    with pytest.raises(MeshError):
        Mesh(3, nodes, [[0, 1, 2, 3], [1, 2, 3, 4]], {"x": [[1, 2, 3]]})


def test_stats_is_json_serializable(tiny_pipe):
    s = json.loads(json.dumps(tiny_pipe.stats()))
    assert s["n_nodes"] == 39
