import functools

import numpy as np
import pytest

from tdnns.mesh import DIRICHLET, Mesh, build_structured_cube
from tdnns.space import FESpace

ACCEPTANCE_LINES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def cube(n: int, spec=("x0", "x1", "y0", "y1", "z0", "z1")) -> Mesh:
    return build_structured_cube(n, spec)


@functools.lru_cache(maxsize=None)
def space(n: int, kind: str, order: int, spec=("x0", "x1", "y0", "y1", "z0", "z1")) -> FESpace:
    return FESpace(cube(n, spec), kind, order)


def tagged(vertices, cells, label=DIRICHLET) -> Mesh:
    """Mesh with every boundary face carrying ``label``."""
    from tdnns.mesh import LOCAL_FACES

    cells = np.asarray(cells)
    cf = np.sort(cells[:, np.array(LOCAL_FACES)], axis=2).reshape(-1, 3)
    faces, counts = np.unique(cf, axis=0, return_counts=True)
    return Mesh(vertices, cells, {int(f): label for f in np.flatnonzero(counts == 1)})


def irregular_pair() -> Mesh:
    v = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.1, 0.0],
            [0.2, 1.1, 0.1],
            [0.1, 0.2, 0.9],
            [1.0, 1.0, 1.1],
        ]
    )
    cells = np.array([[0, 1, 2, 3], [4, 1, 3, 2]])
    for c in cells:
        x = v[c]
        if np.linalg.det(np.column_stack([x[1] - x[0], x[2] - x[0], x[3] - x[0]])) < 0:
            c[[2, 3]] = c[[3, 2]]
    return tagged(v, cells)


def face_points_both_sides(mesh: Mesh, faces, npts: int = 7, seed: int = 0):
    """Random physical points on each face plus reference coordinates from
    both incident cells. Returns ``(X, cells0, xh0, cells1, xh1, n)``."""
    rng = np.random.default_rng(seed)
    faces = np.asarray(faces)
    bary = rng.dirichlet(np.ones(3), size=npts)
    tri = mesh.vertices[mesh.faces[faces]]
    X = np.einsum("qk,fka->fqa", bary, tri)
    c0, c1 = mesh.face_cells[faces, 0], mesh.face_cells[faces, 1]

    def ref(cells):
        return np.einsum("cij,cqj->cqi", mesh.inv_jacobians[cells], X - mesh.origins[cells][:, None])

    return X, c0, ref(c0), c1, ref(c1), mesh.face_normals[faces]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
