"""Affine tetrahedral meshes with oriented faces/edges and boundary tags.

Local numbering on a cell follows the reference tetrahedron with vertices
``(0,0,0), (1,0,0), (0,1,0), (0,0,1)``. Local face ``m`` is the face on which
the barycentric coordinate ``x_{m+1}`` (``m < 3``) or ``1 - x_1 - x_2 - x_3``
(``m == 3``) vanishes, i.e. the face opposite local vertex ``(m + 1) % 4``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIRICHLET = "D"
NEUMANN = "N"

REF_VERTICES = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)
# local face m -> local vertices (ascending), face m opposite vertex (m+1)%4
LOCAL_FACES = ((0, 2, 3), (0, 1, 3), (0, 1, 2), (1, 2, 3))
FACE_OPPOSITE = (1, 2, 3, 0)
LOCAL_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

CUBE_FACES = ("x0", "x1", "y0", "y1", "z0", "z1")


class MeshError(ValueError):
    """Raised for meshes that violate a structural invariant."""


def _ref_face_normals() -> np.ndarray:
    out = np.zeros((4, 3))
    for m, (a, b, c) in enumerate(LOCAL_FACES):
        nu = np.cross(REF_VERTICES[b] - REF_VERTICES[a], REF_VERTICES[c] - REF_VERTICES[a])
        opp = REF_VERTICES[FACE_OPPOSITE[m]]
        if np.dot(nu, REF_VERTICES[a] - opp) < 0:
            nu = -nu
        out[m] = nu / np.linalg.norm(nu)
    return out


REF_FACE_NORMALS = _ref_face_normals()
REF_FACE_AREAS = np.array(
    [
        0.5 * np.linalg.norm(np.cross(REF_VERTICES[b] - REF_VERTICES[a], REF_VERTICES[c] - REF_VERTICES[a]))
        for a, b, c in LOCAL_FACES
    ]
)
REF_EDGE_LENGTHS = np.array(
    [np.linalg.norm(REF_VERTICES[b] - REF_VERTICES[a]) for a, b in LOCAL_EDGES]
)


@dataclass(frozen=True)
class ElementTransform:
    """Affine map from the reference tetrahedron to one cell."""

    origin: np.ndarray
    F: np.ndarray
    J: float
    F_inv_T: np.ndarray
    h: float
    face_J: np.ndarray
    face_normals: np.ndarray
    edge_J: np.ndarray
    edge_tangents: np.ndarray

    def map(self, xhat: np.ndarray) -> np.ndarray:
        return self.origin + np.asarray(xhat) @ self.F.T


@dataclass(eq=False)
class Mesh:
    """Tetrahedral mesh.

    Faces and edges are stored as ascending global vertex tuples. Edge
    tangents point from the lower to the higher vertex index. A face normal
    points out of the lower-indexed incident cell (outward on the boundary);
    ``cell_face_signs`` is +1 where the cell's outward normal agrees with it.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_tags: dict[int, str]
    faces: np.ndarray = field(init=False)
    edges: np.ndarray = field(init=False)
    cell_faces: np.ndarray = field(init=False)
    cell_edges: np.ndarray = field(init=False)
    cell_face_signs: np.ndarray = field(init=False)
    cell_edge_signs: np.ndarray = field(init=False)
    face_cells: np.ndarray = field(init=False)
    face_local: np.ndarray = field(init=False)
    face_normals: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (nv, 3)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 4:
            raise MeshError("cells must have shape (nc, 4)")
        if self.cells.min() < 0 or self.cells.max() >= len(self.vertices):
            raise MeshError("cell vertex index out of range")
        self._build_topology()
        self._compute_geometry()
        self._validate()
        for arr in (self.vertices, self.cells, self.faces, self.edges):
            arr.setflags(write=False)

    # -- construction -----------------------------------------------------

    def _build_topology(self) -> None:
        nc = len(self.cells)
        lf = np.array(LOCAL_FACES)
        le = np.array(LOCAL_EDGES)
        cf = np.sort(self.cells[:, lf], axis=2).reshape(-1, 3)
        faces, finv = np.unique(cf, axis=0, return_inverse=True)
        ce = np.sort(self.cells[:, le], axis=2).reshape(-1, 2)
        edges, einv = np.unique(ce, axis=0, return_inverse=True)
        self.faces = faces
        self.edges = edges
        self.cell_faces = finv.reshape(nc, 4)
        self.cell_edges = einv.reshape(nc, 6)

        counts = np.bincount(self.cell_faces.ravel(), minlength=len(faces))
        if counts.max() > 2:
            raise MeshError("a face is shared by more than two cells")
        face_cells = -np.ones((len(faces), 2), dtype=np.int64)
        face_local = -np.ones((len(faces), 2), dtype=np.int64)
        # cells visited in ascending order, so slot 0 holds the lower index
        for c in range(nc):
            for m in range(4):
                f = self.cell_faces[c, m]
                slot = 0 if face_cells[f, 0] < 0 else 1
                face_cells[f, slot] = c
                face_local[f, slot] = m
        self.face_cells = face_cells
        self.face_local = face_local

        a = self.cells[:, le[:, 0]]
        b = self.cells[:, le[:, 1]]
        self.cell_edge_signs = np.where(a < b, 1, -1)

    def _compute_geometry(self) -> None:
        v = self.vertices[self.cells]
        self.origins = v[:, 0, :]
        self.jacobians = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)
        self.dets = np.linalg.det(self.jacobians)
        if np.any(self.dets <= 0):
            bad = int(np.flatnonzero(self.dets <= 0)[0])
            raise MeshError(f"cell {bad} has non-positive signed volume {self.dets[bad]:.3e}")
        self.inv_jacobians = np.linalg.inv(self.jacobians)

        # outward area vectors (|nu| = 2 * area) per cell and local face
        nu = np.zeros((len(self.cells), 4, 3))
        for m, (a, b, c) in enumerate(LOCAL_FACES):
            w = np.cross(v[:, b] - v[:, a], v[:, c] - v[:, a])
            inward = v[:, FACE_OPPOSITE[m]] - v[:, a]
            s = np.sign(np.einsum("ij,ij->i", w, inward))
            nu[:, m] = -s[:, None] * w
        self.cell_face_areavec = nu
        self.cell_face_areas = 0.5 * np.linalg.norm(nu, axis=2)
        self.cell_face_normals = nu / (2.0 * self.cell_face_areas[..., None])

        c0, m0 = self.face_cells[:, 0], self.face_local[:, 0]
        self.face_normals = self.cell_face_normals[c0, m0]
        self.face_areas = self.cell_face_areas[c0, m0]
        signs = np.ones((len(self.cells), 4), dtype=np.int64)
        c1, m1 = self.face_cells[:, 1], self.face_local[:, 1]
        interior = c1 >= 0
        signs[c1[interior], m1[interior]] = -1
        self.cell_face_signs = signs

    def _validate(self) -> None:
        bnd = set(np.flatnonzero(self.face_cells[:, 1] < 0).tolist())
        tagged = set(self.boundary_tags)
        if tagged != bnd:
            missing = sorted(bnd - tagged)[:5]
            extra = sorted(tagged - bnd)[:5]
            raise MeshError(f"boundary tags do not match boundary faces (untagged {missing}, non-boundary {extra})")
        labels = set(self.boundary_tags.values())
        if not labels <= {DIRICHLET, NEUMANN}:
            raise MeshError(f"unknown boundary labels {sorted(labels - {DIRICHLET, NEUMANN})}")
        if DIRICHLET not in labels:
            raise MeshError("the Dirichlet boundary must be nonempty")

    # -- queries ----------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def volumes(self) -> np.ndarray:
        return self.dets / 6.0

    @property
    def cell_sizes(self) -> np.ndarray:
        """Spectral norm of each cell Jacobian."""
        return np.linalg.norm(self.jacobians, ord=2, axis=(1, 2))

    @property
    def h(self) -> float:
        return float(self.cell_sizes.max())

    def boundary_faces(self, label: str | None = None) -> np.ndarray:
        faces = np.flatnonzero(self.face_cells[:, 1] < 0)
        if label is None:
            return faces
        return np.array([f for f in faces if self.boundary_tags[int(f)] == label], dtype=np.int64)

    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    def dirichlet_edges(self) -> np.ndarray:
        fd = self.boundary_faces(DIRICHLET)
        if len(fd) == 0:
            return np.zeros(0, dtype=np.int64)
        fc, fl = self.face_cells[fd, 0], self.face_local[fd, 0]
        out = set()
        for c, m in zip(fc, fl):
            lv = LOCAL_FACES[m]
            for e, (a, b) in enumerate(LOCAL_EDGES):
                if a in lv and b in lv:
                    out.add(int(self.cell_edges[c, e]))
        return np.array(sorted(out), dtype=np.int64)

    def dirichlet_vertices(self) -> np.ndarray:
        fd = self.boundary_faces(DIRICHLET)
        return np.unique(self.faces[fd].ravel())

    def face_diameters(self) -> np.ndarray:
        return face_diameters(self.vertices[self.faces])

    def transform(self, cell: int) -> ElementTransform:
        return element_transform(self, cell)

    def map_points(self, xhat: np.ndarray, cells: np.ndarray | slice | None = None) -> np.ndarray:
        """Physical points ``(ncells, npts, 3)`` of reference points ``xhat``."""
        sel = slice(None) if cells is None else cells
        return self.origins[sel, None, :] + np.einsum("cij,qj->cqi", self.jacobians[sel], xhat)

    def aspect_ratios(self) -> tuple[float, float]:
        """Min/max of (longest edge)/(inradius) over cells; diagnostic only."""
        v = self.vertices[self.cells]
        le = np.array(LOCAL_EDGES)
        lengths = np.linalg.norm(v[:, le[:, 1]] - v[:, le[:, 0]], axis=2).max(axis=1)
        inradius = 3.0 * self.volumes / self.cell_face_areas.sum(axis=1)
        r = lengths / inradius
        return float(r.min()), float(r.max())


def face_diameters(tri: np.ndarray) -> np.ndarray:
    """Longest edge of each triangle in ``tri`` with shape ``(n, 3, 3)``."""
    tri = np.asarray(tri, dtype=float)
    d = [np.linalg.norm(tri[:, i] - tri[:, j], axis=1) for i, j in ((0, 1), (0, 2), (1, 2))]
    return np.max(d, axis=0)


def face_jump_measure(mesh: Mesh, face: int) -> float:
    """``h_F``: diameter of face ``face``."""
    return float(face_diameters(mesh.vertices[mesh.faces[[face]]])[0])


def element_transform(mesh: Mesh, cell: int) -> ElementTransform:
    if not 0 <= cell < mesh.num_cells:
        raise IndexError(f"cell index {cell} out of range")
    v = mesh.vertices[mesh.cells[cell]]
    F = np.column_stack([v[1] - v[0], v[2] - v[0], v[3] - v[0]])
    J = float(np.linalg.det(F))
    if J <= 0:
        raise MeshError(f"cell {cell} is degenerate or inverted (J_T = {J:.3e})")
    FinvT = np.linalg.inv(F).T
    face_J = np.zeros(4)
    normals = np.zeros((4, 3))
    for m, (a, b, c) in enumerate(LOCAL_FACES):
        area = 0.5 * np.linalg.norm(np.cross(v[b] - v[a], v[c] - v[a]))
        face_J[m] = area / REF_FACE_AREAS[m]
        n = (J / face_J[m]) * FinvT @ REF_FACE_NORMALS[m]
        normals[m] = n / np.linalg.norm(n)
    edge_J = np.zeros(6)
    tangents = np.zeros((6, 3))
    for e, (a, b) in enumerate(LOCAL_EDGES):
        that = (REF_VERTICES[b] - REF_VERTICES[a]) / REF_EDGE_LENGTHS[e]
        edge_J[e] = np.linalg.norm(v[b] - v[a]) / REF_EDGE_LENGTHS[e]
        t = F @ that / edge_J[e]
        tangents[e] = t / np.linalg.norm(t)
    return ElementTransform(
        origin=v[0].copy(),
        F=F,
        J=J,
        F_inv_T=FinvT,
        h=float(np.linalg.norm(F, 2)),
        face_J=face_J,
        face_normals=normals,
        edge_J=edge_J,
        edge_tangents=tangents,
    )


def _kuhn_cells() -> list[tuple[int, int, int, int]]:
    # cube corner index = bx + 2*by + 4*bz; one tet per axis ordering
    out = []
    for perm in itertools.permutations(range(3)):
        path = [0]
        cur = 0
        for ax in perm:
            cur += 1 << ax
            path.append(cur)
        out.append(tuple(path))
    return out


def build_structured_cube(n: int, dirichlet_spec, lengths=(1.0, 1.0, 1.0)) -> Mesh:
    """Unit cube split into ``n**3`` sub-cubes of six Kuhn tetrahedra each.

    ``dirichlet_spec`` is a collection of cube face names from
    ``("x0", "x1", "y0", "y1", "z0", "z1")``; the remaining boundary is
    tagged Neumann.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"subdivision count must be a positive integer, got {n!r}")
    spec = set(dirichlet_spec)
    if not spec:
        raise ValueError("dirichlet_spec must name at least one cube face")
    unknown = spec - set(CUBE_FACES)
    if unknown:
        raise ValueError(f"unknown cube faces {sorted(unknown)}; options are {CUBE_FACES}")

    g = np.arange(n + 1)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    idx = (X + (n + 1) * Y + (n + 1) ** 2 * Z).astype(np.int64)
    vertices = np.column_stack([X.ravel(order="F"), Y.ravel(order="F"), Z.ravel(order="F")]) / n
    vertices = vertices * np.asarray(lengths, dtype=float)
    # vertex id of grid point (i,j,k) is i + (n+1) j + (n+1)^2 k with F-order ravel
    corners = np.array([[(b >> 0) & 1, (b >> 1) & 1, (b >> 2) & 1] for b in range(8)])
    cells = []
    ii, jj, kk = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = np.column_stack([ii.ravel(order="F"), jj.ravel(order="F"), kk.ravel(order="F")])
    for tet in _kuhn_cells():
        pts = base[:, None, :] + corners[list(tet)][None, :, :]
        ids = idx[pts[..., 0], pts[..., 1], pts[..., 2]]
        cells.append(ids)
    cells = np.stack(cells, axis=1).reshape(-1, 4)
    # fix orientation: swap the last two vertices where the volume is negative
    v = vertices[cells]
    det = np.linalg.det(np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=2))
    neg = det < 0
    cells[neg, 2], cells[neg, 3] = cells[neg, 3].copy(), cells[neg, 2].copy()

    # boundary faces: those appearing once
    lf = np.array(LOCAL_FACES)
    cf = np.sort(cells[:, lf], axis=2).reshape(-1, 3)
    faces, counts = np.unique(cf, axis=0, return_counts=True)
    tags: dict[int, str] = {}
    L = np.asarray(lengths, dtype=float)
    for f in np.flatnonzero(counts == 1):
        centroid = vertices[faces[f]].mean(axis=0)
        name = None
        for ax, letter in enumerate("xyz"):
            if abs(centroid[ax]) < 1e-12 * L[ax]:
                name = letter + "0"
            elif abs(centroid[ax] - L[ax]) < 1e-12 * L[ax]:
                name = letter + "1"
        tags[int(f)] = DIRICHLET if name in spec else NEUMANN
    return Mesh(vertices, cells, tags)


# -- plain-text mesh format ------------------------------------------------


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format.

    Line 1: ``nv nc nb``; then ``nv`` lines ``x y z``; ``nc`` lines
    ``v0 v1 v2 v3``; ``nb`` lines ``v0 v1 v2 tag`` with tag ``D`` or ``N``.
    Indices are 0-based.
    """
    lines = Path(path).read_text().splitlines()
    return parse_mesh(lines)


def parse_mesh(lines) -> Mesh:
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MeshError("line 1: empty mesh file")
    lineno, head = rows[0]
    try:
        nv, nc, nb = (int(t) for t in head)
    except ValueError:
        raise MeshError(f"line {lineno}: expected 'nv nc nb', got {' '.join(head)!r}") from None
    if len(rows) - 1 != nv + nc + nb:
        raise MeshError(f"line {lineno}: header announces {nv + nc + nb} records, file has {len(rows) - 1}")
    body = rows[1:]

    def ints(lineno, toks, count, what):
        if len(toks) != count:
            raise MeshError(f"line {lineno}: expected {count} fields for {what}, got {len(toks)}")
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise MeshError(f"line {lineno}: non-integer index in {what}") from None
        for v in vals:
            if not 0 <= v < nv:
                raise MeshError(f"line {lineno}: vertex index {v} out of range [0, {nv})")
        return vals

    verts = []
    for lineno, toks in body[:nv]:
        if len(toks) != 3:
            raise MeshError(f"line {lineno}: expected 3 coordinates, got {len(toks)}")
        try:
            verts.append([float(t) for t in toks])
        except ValueError:
            raise MeshError(f"line {lineno}: invalid coordinate") from None
    cells = [ints(lineno, toks, 4, "cell") for lineno, toks in body[nv : nv + nc]]

    cells_arr = np.array(cells, dtype=np.int64).reshape(-1, 4)
    verts_arr = np.array(verts, dtype=float).reshape(-1, 3)
    lf = np.array(LOCAL_FACES)
    cf = np.sort(cells_arr[:, lf], axis=2).reshape(-1, 3)
    faces, counts = np.unique(cf, axis=0, return_counts=True)
    lookup = {tuple(f): i for i, f in enumerate(faces.tolist())}
    tags: dict[int, str] = {}
    for lineno, toks in body[nv + nc :]:
        if len(toks) != 4:
            raise MeshError(f"line {lineno}: expected 'v0 v1 v2 tag'")
        tri = ints(lineno, toks[:3], 3, "boundary face")
        tag = toks[3]
        if tag not in (DIRICHLET, NEUMANN):
            raise MeshError(f"line {lineno}: boundary tag must be D or N, got {tag!r}")
        key = tuple(sorted(tri))
        f = lookup.get(key)
        if f is None or counts[f] != 1:
            raise MeshError(f"line {lineno}: {key} is not a boundary face of the mesh")
        if f in tags:
            raise MeshError(f"line {lineno}: boundary face {key} tagged twice")
        tags[f] = tag
    untagged = int((counts == 1).sum()) - len(tags)
    if untagged:
        raise MeshError(f"line {rows[-1][0]}: {untagged} boundary faces are not tagged")
    return Mesh(verts_arr, cells_arr, tags)


def write_mesh(mesh: Mesh, path) -> None:
    bnd = mesh.boundary_faces()
    out = [f"{mesh.num_vertices} {mesh.num_cells} {len(bnd)}"]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    out += [" ".join(str(v) for v in c) for c in mesh.cells.tolist()]
    out += [f"{a} {b} {c} {mesh.boundary_tags[int(f)]}" for f, (a, b, c) in zip(bnd, mesh.faces[bnd].tolist())]
    Path(path).write_text("\n".join(out) + "\n")
