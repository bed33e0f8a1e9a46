import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdnns.mesh import (
    CUBE_FACES,
    DIRICHLET,
    NEUMANN,
    REF_VERTICES,
    MeshError,
    build_structured_cube,
    element_transform,
    face_jump_measure,
    parse_mesh,
    read_mesh,
    write_mesh,
)

from conftest import tagged


def test_single_cube_counts():
    m = build_structured_cube(1, CUBE_FACES)
    assert (m.num_cells, m.num_vertices, m.num_faces, m.num_edges) == (6, 8, 18, 19)
    assert len(m.boundary_faces()) == 12
    assert len(m.interior_faces()) == 6


@given(st.integers(1, 4))
@settings(max_examples=4, deadline=None)
def test_cube_counts_and_volume(n):
    m = build_structured_cube(n, ["x0"])
    assert m.num_vertices == (n + 1) ** 3
    assert m.num_cells == 6 * n**3
    assert m.volumes.sum() == pytest.approx(1.0, abs=1e-12)
    # Euler characteristic of a ball
    assert m.num_vertices - m.num_edges + m.num_faces - m.num_cells == 1


def test_n2_counts():
    m = build_structured_cube(2, CUBE_FACES)
    assert (m.num_cells, m.num_vertices) == (48, 27)


def test_boundary_labels():
    m = build_structured_cube(2, ["x0", "z1"])
    d = m.boundary_faces(DIRICHLET)
    nb = m.boundary_faces(NEUMANN)
    assert len(d) == 2 * 8 and len(nb) == 4 * 8
    c = m.vertices[m.faces[d]].mean(axis=1)
    assert np.all(np.isclose(c[:, 0], 0) | np.isclose(c[:, 2], 1))


def test_outward_normals_on_boundary():
    m = build_structured_cube(2, CUBE_FACES)
    bf = m.boundary_faces()
    c = m.vertices[m.faces[bf]].mean(axis=1) - 0.5
    assert np.all(np.einsum("fa,fa->f", m.face_normals[bf], c) > 0)


def test_identity_transform():
    m = tagged(REF_VERTICES, [[0, 1, 2, 3]])
    t = element_transform(m, 0)
    assert np.allclose(t.F, np.eye(3)) and t.J == pytest.approx(1.0) and t.h == pytest.approx(1.0)


def test_scaled_transform():
    m = tagged(2 * REF_VERTICES, [[0, 1, 2, 3]])
    t = element_transform(m, 0)
    assert t.J == pytest.approx(8.0)
    assert t.h == pytest.approx(2.0)
    assert np.allclose(t.face_J, 4.0)


def test_reflected_vertex_order_rejected():
    with pytest.raises(MeshError):
        tagged(REF_VERTICES, [[0, 2, 1, 3]])


def test_face_jump_measure():
    m = tagged(REF_VERTICES, [[0, 1, 2, 3]])
    right = [f for f in range(4) if 0 in m.faces[f]][0]
    assert face_jump_measure(m, right) == pytest.approx(np.sqrt(2))
    m3 = tagged(3 * REF_VERTICES, [[0, 1, 2, 3]])
    assert face_jump_measure(m3, right) == pytest.approx(3 * np.sqrt(2))


def test_equilateral_face():
    v = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0], [0.5, np.sqrt(3) / 6, 0.8]])
    m = tagged(v, [[0, 1, 2, 3]])
    f = [i for i in range(4) if set(m.faces[i]) == {0, 1, 2}][0]
    assert face_jump_measure(m, f) == pytest.approx(1.0)


def test_mesh_file_roundtrip(tmp_path):
    m = build_structured_cube(2, ["x0", "y1"])
    p = tmp_path / "cube.msh"
    write_mesh(m, p)
    m2 = read_mesh(p)
    assert np.array_equal(m2.cells, m.cells)
    assert np.array_equal(m2.vertices, m.vertices)
    assert m2.boundary_tags == m.boundary_tags


@pytest.mark.parametrize(
    "text, msg",
    [
        ("", "line 1"),
        ("4 1 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 9\n0 1 2 D\n0 1 3 D\n0 2 3 D\n1 2 3 D", "line 6"),
        ("4 1 4\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 3\n0 1 2 D\n0 1 3 D\n0 2 3 D\n1 2 3 X", "line 10"),
        ("4 1 3\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 3\n0 1 2 D\n0 1 3 D\n0 2 3 D", "not tagged"),
    ],
)
def test_parse_errors_name_the_line(text, msg):
    with pytest.raises(MeshError, match=msg):
        parse_mesh(text.splitlines())


def test_needs_dirichlet_part():
    with pytest.raises(MeshError):
        tagged(REF_VERTICES, [[0, 1, 2, 3]], label=NEUMANN)
    with pytest.raises(ValueError):
        build_structured_cube(1, [])
    with pytest.raises(ValueError):
        build_structured_cube(1, ["w0"])


def test_mesh_size_is_spectral_norm():
    m = build_structured_cube(2, CUBE_FACES)
    assert m.h == pytest.approx(max(np.linalg.norm(F, 2) for F in m.jacobians))
