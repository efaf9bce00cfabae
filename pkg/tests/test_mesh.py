import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsflow.errors import (DegenerateCell, DistortionTooLarge, NonConformingMesh, NonConvexCell,
                           ParseError, PointOutsideCell)
from dsflow.mesh import (FIG2_EDGES, build_mesh, generate_distorted_grid, inverse_map, jacobians,
                         load_tracer_mesh, map_points, read_mesh, reference_edge_points,
                         square_with_hole, uniform_grid, write_mesh)
from dsflow.quadrature import quadrature_rule


def test_uniform_grid_counts(square4):
    m = square4
    assert (m.n_vertices, m.n_cells, m.n_edges) == (25, 16, 40)
    assert len(m.boundary_edges) == 16
    assert m.boundary_tags == ["bottom", "left", "right", "top"]
    assert np.allclose(m.areas, 1 / 16)


def test_edge_orientation_follows_first_cell(distorted):
    m = distorted
    for g in range(m.n_edges):
        c, k = m.edge_cells[g, 0], m.edge_local[g, 0]
        a, b = m.cells[c, k], m.cells[c, (k + 1) % 4]
        assert tuple(m.edges[g]) == (a, b)
        assert m.cell_edge_orient[c, k] == 1
        c2 = m.edge_cells[g, 1]
        if c2 >= 0:
            assert m.cell_edge_orient[c2, m.edge_local[g, 1]] == -1
            # normal points from the first cell to the second
            d = m.centers[c2] - m.centers[c]
            assert d @ m.edge_normals[g] > 0


def test_fig2_labelling(square4):
    assert list(FIG2_EDGES) == [3, 1, 0, 2]
    c = 5
    e = square4.cell_fig2_edges[c]
    mid = square4.vertices[square4.edges[e]].mean(axis=1)
    x0, y0 = square4.coords[c].min(axis=0)
    x1, y1 = square4.coords[c].max(axis=0)
    assert np.isclose(mid[0, 0], x0) and np.isclose(mid[1, 0], x1)
    assert np.isclose(mid[2, 1], y0) and np.isclose(mid[3, 1], y1)


def test_quadrature_area_matches_shoelace(distorted):
    assert np.allclose(distorted.cell_area_by_quadrature(2), distorted.areas, rtol=1e-13)
    assert np.isclose(distorted.areas.sum(), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-0.95, 0.95), st.floats(-0.95, 0.95))
def test_inverse_map_roundtrip(seed, a, b):
    m = generate_distorted_grid(3, 3, distortion_fraction=0.3, rng_seed=seed)
    ref = np.array([[a, b]])
    x = map_points(m.coords[4:5], ref)[0]
    assert np.allclose(inverse_map(m.coords[4], x), ref, atol=1e-12)


def test_jacobian_positive_on_distorted(distorted):
    _, det = jacobians(distorted.coords, quadrature_rule(6).points)
    assert det.min() > 0


def test_reference_edge_points_ccw():
    t = np.array([-1.0, 1.0])
    for k in range(4):
        p = reference_edge_points(k, t)
        ref = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]])
        assert np.allclose(p, [ref[k], ref[(k + 1) % 4]])


def test_locate_and_to_reference(distorted):
    pts = distorted.centers
    assert np.array_equal(distorted.locate(pts), np.arange(distorted.n_cells))
    assert distorted.locate([[2.0, 2.0]])[0] == -1
    with pytest.raises(PointOutsideCell):
        distorted.to_reference(0, np.array([[0.99, 0.99]]))


def test_invalid_meshes():
    with pytest.raises(NonConvexCell):
        build_mesh(np.array([[0, 0], [1, 0], [0.2, 0.2], [0, 1]], float), [[0, 1, 2, 3]])
    with pytest.raises(NonConvexCell):
        build_mesh(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), [[0, 3, 2, 1]])  # clockwise
    with pytest.raises(DegenerateCell):
        build_mesh(np.array([[0, 0], [1, 0], [2, 0], [3, 0]], float), [[0, 1, 2, 3]])
    # three cells sharing one edge
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1], [1, -1], [2, -1]], float)
    with pytest.raises(NonConformingMesh):
        build_mesh(v, [[0, 1, 2, 3], [1, 4, 5, 2], [1, 4, 5, 2]])


def test_distortion_limits():
    with pytest.raises(Exception):
        generate_distorted_grid(3, 3, distortion_fraction=0.6)
    m = generate_distorted_grid(5, 5, distortion_fraction=0.45, rng_seed=3)
    assert m.shape_regularity > 0
    assert issubclass(DistortionTooLarge, Exception)


def test_distorted_grid_deterministic():
    a = generate_distorted_grid(5, 4, distortion_fraction=0.3, rng_seed=11)
    b = generate_distorted_grid(5, 4, distortion_fraction=0.3, rng_seed=11)
    c = generate_distorted_grid(5, 4, distortion_fraction=0.3, rng_seed=12)
    assert np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)


def test_mesh_file_roundtrip(tmp_path, distorted):
    p = tmp_path / "m.msh"
    write_mesh(distorted, p)
    m = read_mesh(p)
    assert np.array_equal(m.vertices, distorted.vertices)
    assert np.array_equal(m.cells, distorted.cells)
    assert m.edge_tags == distorted.edge_tags


def test_mesh_file_parse_errors(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text("4 1 0\n0 0\n1 0\n1 x\n0 1\n0 1 2 3\n")
    with pytest.raises(ParseError) as exc:
        read_mesh(p)
    assert exc.value.line == 4


def test_square_with_hole_levels():
    m = square_with_hole(2)
    assert m.n_cells == 128
    assert set(m.boundary_tags) == {"left", "right", "top", "bottom", "hole"}
    area = 1.0 - np.pi * 0.2**2
    # polygonal hole: area error is O(h^2)
    assert abs(m.areas.sum() - area) < 5e-3
    shipped = load_tracer_mesh(2)
    assert np.allclose(shipped.vertices, m.vertices)
    with pytest.raises(FileNotFoundError):
        load_tracer_mesh(9)


def test_shipped_level5_step():
    m = load_tracer_mesh(5)
    assert m.n_cells == 8192
    assert abs(0.1 * m.h_min - 0.00106907) < 1e-7
