import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kmcauchy.mesh import (Mesh, MeshError, MeshFormatError, build_parabola_domain, build_unit_square, load_mesh,
                           save_mesh, validate)


def test_parabola_has_bottom_node_and_flat_top():
    m = build_parabola_domain(0.5, 0.1)
    assert np.any(np.all(np.isclose(m.vertices, [0.0, -0.5]), axis=1))
    s = m.vertices[m.region_nodes("S")]
    assert np.all(s[:, 1] == 0.0)
    b = m.vertices[m.region_nodes("B")]
    np.testing.assert_allclose(b[:, 1], -0.5 * (1 - b[:, 0] ** 2), atol=1e-14)


def test_parabola_interface_points():
    m = build_parabola_domain(0.5, 0.1)
    pts = sorted(map(tuple, m.vertices[m.interface].tolist()))
    assert pts == [(-1.0, 0.0), (1.0, 0.0)]


@pytest.mark.parametrize("h", [0.1, 0.05])
def test_parabola_area_converges(h):
    m = build_parabola_domain(0.5, h)
    area = m.signed_areas().sum()
    assert area < 2 / 3
    assert abs(area - 2 / 3) < 2 * h ** 2


def test_parabola_area_error_shrinks():
    err = [abs(build_parabola_domain(0.5, h).signed_areas().sum() - 2 / 3) for h in (0.1, 0.05)]
    assert err[1] < err[0]


def test_refinement_triples_vertices():
    a = build_parabola_domain(0.5, 0.1).n_vertices
    b = build_parabola_domain(0.5, 0.05).n_vertices
    assert b >= 3 * a


@settings(max_examples=15, deadline=None)
@given(d=st.floats(0.1, 2.0), h=st.floats(0.04, 0.5))
def test_parabola_invariants(d, h):
    m = build_parabola_domain(d, h)
    validate(m)
    assert len(m.interface) == 2
    assert m.h_max <= 2 * h
    assert np.all(m.signed_areas() > 0)
    total = m.edge_lengths().sum()
    assert abs(m.partition.measure["S"] + m.partition.measure["B"] - total) < 1e-12


@pytest.mark.parametrize("d,h", [(0.0, 0.1), (-1.0, 0.1), (0.5, 1.0), (0.5, 0.0), (0.5, 1.5)])
def test_parabola_rejects(d, h):
    with pytest.raises(MeshError):
        build_parabola_domain(d, h)


def test_square_counts():
    m = build_unit_square(0.5, "top")
    assert (m.n_vertices, m.n_triangles, len(m.region_nodes("S"))) == (9, 8, 3)


def test_square_measures():
    m = build_unit_square(0.25, ("top",))
    assert m.partition.measure["S"] == pytest.approx(1.0, abs=1e-14)
    assert m.partition.measure["B"] == pytest.approx(3.0, abs=1e-14)


@pytest.mark.parametrize("sides", [(), ("top", "bottom", "left", "right"), ("diagonal",)])
def test_square_rejects(sides):
    with pytest.raises(MeshError):
        build_unit_square(0.5, sides)


def test_square_string_sides():
    a = build_unit_square(0.25, "top,left")
    b = build_unit_square(0.25, ("left", "top"))
    assert a == b
    assert a.partition.measure["S"] == pytest.approx(2.0)


def test_region_node_lists_are_contiguous():
    for m in (build_parabola_domain(0.5, 0.1), build_unit_square(0.25, "top")):
        for r in ("S", "B"):
            nodes = m.region_nodes(r)
            assert len(set(nodes.tolist())) == len(nodes)
            assert set(m.interface) <= set(nodes.tolist())
            # consecutive nodes are joined by an edge of the region
            eset = {frozenset(e) for e in m.partition.edges[r].tolist()}
            assert all(frozenset(p) in eset for p in zip(nodes[:-1], nodes[1:]))
            assert m.boundary_arclength(r)[-1] == pytest.approx(m.partition.measure[r])


def test_mesh_is_immutable():
    m = build_unit_square(0.5)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0


def test_round_trip(tmp_path):
    m = build_unit_square(0.5, "top")
    save_mesh(m, tmp_path / "sq.mesh")
    assert load_mesh(tmp_path / "sq.mesh") == m
    p = build_parabola_domain(0.5, 0.1)
    save_mesh(p, tmp_path / "p.mesh")
    q = load_mesh(tmp_path / "p.mesh")
    assert q == p
    assert q.vertices.tobytes() == p.vertices.tobytes()


def _write(tmp_path, text):
    path = tmp_path / "bad.mesh"
    path.write_text(text)
    return path


GOOD = """vertices 4
0 0.0 0.0
1 1.0 0.0
2 1.0 1.0
3 0.0 1.0
triangles 2
0 1 2
0 2 3
boundary 4
0 1 B
1 2 B
2 3 S
3 0 B
"""


def test_load_small_file(tmp_path):
    m = load_mesh(_write(tmp_path, GOOD))
    assert m.n_vertices == 4 and len(m.interface) == 2


def test_missing_vertex_is_parse_error(tmp_path):
    text = GOOD.replace("3 0 B", "3 7 B")
    with pytest.raises(MeshFormatError, match="line 13.*missing vertex 7"):
        load_mesh(_write(tmp_path, text))


def test_untagged_edge_is_validation_error(tmp_path):
    text = GOOD.replace("3 0 B", "3 0")
    with pytest.raises(MeshError, match="no region tag"):
        load_mesh(_write(tmp_path, text))


def test_edge_not_on_boundary_rejected(tmp_path):
    text = GOOD.replace("3 0 B", "0 2 B")
    with pytest.raises(MeshError):
        load_mesh(_write(tmp_path, text))


def test_validate_flags_clockwise_triangle():
    m = build_unit_square(0.5)
    tris = m.triangles.copy()
    tris[0] = tris[0][::-1]
    bad = Mesh(m.vertices, tris, m.boundary_edges, m.boundary_tags)
    with pytest.raises(MeshError, match="area"):
        validate(bad)
