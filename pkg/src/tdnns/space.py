"""Global DOF numbering and evaluation of the discrete spaces on a mesh.

Each global DOF is a functional attached to a mesh entity (vertex, edge,
face, cell). Shared entities carry the same functional from every incident
cell because the moment polynomials are parametrized by global vertex
order. On a cell, the basis dual to the global functionals is
``psi = push(phi_hat) @ C_T``, where ``C_T`` depends only on the ranking of
the cell's global vertex indices; it absorbs edge sign flips and face
re-parametrizations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import DIRICHLET, LOCAL_FACES, NEUMANN, REF_VERTICES, Mesh
from .quadrature import tet_rule, tri_rule
from .reference import SIGMA, V, W, ReferenceBasis, build_basis
from .transform import push_sigma, push_v, push_w

CHUNK = 512


def chunks(n: int, size: int = CHUNK, work: int = 1):
    """Slices of ``range(n)``; ``work`` (points x basis x components per
    cell) shrinks the chunk so tables stay below a few tens of MB."""
    size = max(1, min(size, int(4e6 // max(work, 1))))
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def vertex_ranks(cells: np.ndarray) -> np.ndarray:
    return np.argsort(np.argsort(cells, axis=1, kind="stable"), axis=1)


@dataclass(eq=False)
class DofMap:
    """Global numbering of one discrete space.

    ``cell_dofs[c, i]`` is the global index of local DOF ``i`` of cell ``c``
    and ``cell_transform[c]`` the matrix ``C_T`` described in the module
    docstring. ``constrained`` marks essential DOFs: tangential DOFs on the
    Dirichlet boundary for V and W, normal-normal DOFs on the Neumann
    boundary for SIGMA.
    """

    space: str
    order: int
    ndofs: int
    cell_dofs: np.ndarray
    cell_transform: np.ndarray
    offsets: dict[int, int]
    per_entity: dict[int, int]
    constrained: np.ndarray = field(repr=False)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.constrained)

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.constrained)

    def entity_dofs(self, dim: int, entities) -> np.ndarray:
        """Global DOFs ``(len(entities), per_entity)`` on the given entities."""
        ent = np.asarray(entities, dtype=np.int64)
        n = self.per_entity.get(dim, 0)
        return self.offsets[dim] + ent[:, None] * n + np.arange(n)[None, :]

    @property
    def orientation_signs(self) -> np.ndarray:
        """Diagonal of ``C_T`` where it is a signed permutation (edges)."""
        return np.sign(np.einsum("cii->ci", self.cell_transform)).astype(np.int64)


def _entity_counts(mesh: Mesh) -> dict[int, int]:
    return {0: mesh.num_vertices, 1: mesh.num_edges, 2: mesh.num_faces, 3: mesh.num_cells}


def build_dofmap(mesh: Mesh, space: str, order: int) -> DofMap:
    basis = build_basis(space, order)
    counts = _entity_counts(mesh)
    per_entity = {d: 0 for d in range(4)}
    for desc in basis.dofs:
        per_entity[desc.dim] = max(per_entity[desc.dim], desc.index + 1)
    offsets = {}
    total = 0
    for d in range(4):
        offsets[d] = total
        total += counts[d] * per_entity[d]

    nc = mesh.num_cells
    cell_dofs = np.zeros((nc, basis.size), dtype=np.int64)
    for i, desc in enumerate(basis.dofs):
        if desc.dim == 0:
            ent = mesh.cells[:, desc.entity]
        elif desc.dim == 1:
            ent = mesh.cell_edges[:, desc.entity]
        elif desc.dim == 2:
            ent = mesh.cell_faces[:, desc.entity]
        else:
            ent = np.arange(nc)
        cell_dofs[:, i] = offsets[desc.dim] + ent * per_entity[desc.dim] + desc.index

    ranks = vertex_ranks(mesh.cells)
    keys, inv = np.unique(ranks, axis=0, return_inverse=True)
    table = np.stack([basis.transform_matrix(tuple(k)) for k in keys])
    cell_transform = table[inv.reshape(-1)]

    constrained = np.zeros(total, dtype=bool)
    if space == SIGMA:
        fn = mesh.boundary_faces(NEUMANN)
        if len(fn):
            constrained[_entity_dofs(offsets, per_entity, 2, fn)] = True
    else:
        fd = mesh.boundary_faces(DIRICHLET)
        constrained[_entity_dofs(offsets, per_entity, 2, fd)] = True
        constrained[_entity_dofs(offsets, per_entity, 1, mesh.dirichlet_edges())] = True
        if space == W:
            constrained[_entity_dofs(offsets, per_entity, 0, mesh.dirichlet_vertices())] = True
    return DofMap(space, order, total, cell_dofs, cell_transform, offsets, per_entity, constrained)


def _entity_dofs(offsets, per_entity, dim, ents) -> np.ndarray:
    n = per_entity[dim]
    ents = np.asarray(ents, dtype=np.int64)
    if n == 0 or len(ents) == 0:
        return np.zeros(0, dtype=np.int64)
    return (offsets[dim] + ents[:, None] * n + np.arange(n)[None, :]).ravel()


def local_face_points(m: int, pts2: np.ndarray) -> np.ndarray:
    """Reference coordinates of triangle-rule points on local face ``m``."""
    a, b, c = (REF_VERTICES[i] for i in LOCAL_FACES[m])
    return a + pts2[:, :1] * (b - a) + pts2[:, 1:2] * (c - a)


def apply_transform(val: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``out[c, q, i, ...] = sum_j val[c, q, j, ...] C[c, j, i]`` via batched matmul."""
    nc, nq, ns = val.shape[:3]
    vshape = val.shape[3:]
    e = int(np.prod(vshape))
    v = np.ascontiguousarray(val).reshape(nc, nq, ns, e).transpose(0, 1, 3, 2).reshape(nc, nq * e, ns)
    out = np.matmul(v, C).reshape(nc, nq, e, ns).transpose(0, 1, 3, 2)
    return np.ascontiguousarray(out).reshape((nc, nq, ns) + vshape)


def weighted_gram(w: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``out[c, i, j] = sum_q w[c, q] X[c, q, i, ...] : Y[c, q, j, ...]``."""
    nc, nq, ni = X.shape[:3]
    nj = Y.shape[2]
    e = int(np.prod(X.shape[3:]))
    Xw = (X.reshape(nc, nq, ni, e) * w[:, :, None, None]).transpose(0, 2, 1, 3).reshape(nc, ni, nq * e)
    Yr = Y.reshape(nc, nq, nj, e).transpose(0, 1, 3, 2).reshape(nc, nq * e, nj)
    return np.matmul(Xw, Yr)


def nn_trace(tab: np.ndarray, n: np.ndarray) -> np.ndarray:
    """``n^T tab n`` for tables ``(c, q, s, 3, 3)`` and per-cell normals ``(c, 3)``."""
    tn = tab @ n[:, None, None, :, None]
    return (tn[..., 0] * n[:, None, None, :]).sum(axis=-1)


def normal_component(tab: np.ndarray, n: np.ndarray) -> np.ndarray:
    """``tab . n`` for tables ``(c, q, s, 3)``."""
    return (tab * n[:, None, None, :]).sum(axis=-1)


class FESpace:
    """A discrete space (SIGMA, V or W) of given order on a mesh."""

    def __init__(self, mesh: Mesh, space: str, order: int):
        self.mesh = mesh
        self.space = space
        self.order = order
        self.basis: ReferenceBasis = build_basis(space, order)
        self.dofmap = build_dofmap(mesh, space, order)

    def __repr__(self) -> str:
        return f"FESpace({self.space}, order={self.order}, ndofs={self.ndofs})"

    @property
    def ndofs(self) -> int:
        return self.dofmap.ndofs

    def tables(self, xhat: np.ndarray, cells=slice(None), kinds=("value",)) -> dict[str, np.ndarray]:
        """Physical tables of the global-dual local basis at reference points.

        Each entry has shape ``(ncells, npts, nloc, *shape)``. Available
        kinds: W: value, grad, hessian; V: value, strain, curl; SIGMA: value.
        """
        mesh = self.mesh
        F = mesh.jacobians[cells]
        C = self.dofmap.cell_transform[cells]
        b = self.basis
        out = {}
        if self.space == W:
            if "value" in kinds:
                out["value"] = np.broadcast_to(b.tabulate(xhat), (len(F),) + (len(xhat), b.size))
            if "grad" in kinds:
                out["grad"] = push_w(None, b.tabulate_grad(xhat), F).derivative
            if "hessian" in kinds:
                FinvT = np.swapaxes(mesh.inv_jacobians[cells], 1, 2)
                out["hessian"] = np.einsum("cia,qsab,cjb->cqsij", FinvT, b.tabulate_hessian(xhat), FinvT)
        elif self.space == V:
            pushed = push_v(
                b.tabulate(xhat),
                F,
                strain_hat=b.tabulate_strain(xhat) if "strain" in kinds else None,
                curl_hat=b.tabulate_curl(xhat) if "curl" in kinds else None,
            )
            if "value" in kinds:
                out["value"] = pushed.value
            if "strain" in kinds:
                out["strain"] = pushed.derivative
            if "curl" in kinds:
                out["curl"] = pushed.curl
        else:
            out["value"] = push_sigma(b.tabulate(xhat), F).value
        for key, val in out.items():
            out[key] = apply_transform(val, C)
        return out

    def evaluate_points(self, coef: np.ndarray, xhat: np.ndarray, cells, kind: str = "value") -> np.ndarray:
        """Like :meth:`evaluate` but with cell-specific reference points
        ``xhat`` of shape ``(ncells, npts, 3)``."""
        cells = np.asarray(cells, dtype=np.int64)
        nc, nq = xhat.shape[:2]
        b = self.basis
        ref_coef = np.einsum("cij,cj->ci", self.dofmap.cell_transform[cells], self.local_coefficients(coef, cells))
        pts = xhat.reshape(-1, 3)
        if kind == "value":
            tab = b.tabulate(pts)
        elif kind in ("grad", "strain"):
            tab = b.tabulate_grad(pts) if self.space == W else b.tabulate_strain(pts)
        elif kind == "curl":
            tab = b.tabulate_curl(pts)
        else:
            raise ValueError(f"unsupported kind {kind!r}")
        tab = tab.reshape((nc, nq) + tab.shape[1:])
        shape = tab.shape[3:]
        ref = (ref_coef[:, None, None, :] @ tab.reshape(nc, nq, tab.shape[2], -1))[:, :, 0].reshape((nc, nq) + shape)
        F = self.mesh.jacobians[cells][:, None]
        FinvT = np.swapaxes(self.mesh.inv_jacobians[cells], 1, 2)[:, None]
        J = self.mesh.dets[cells]
        if self.space == W:
            return ref if kind == "value" else (FinvT @ ref[..., None])[..., 0]
        if self.space == V:
            if kind == "value":
                return (FinvT @ ref[..., None])[..., 0]
            if kind == "strain":
                return FinvT @ ref @ np.swapaxes(FinvT, -1, -2)
            return (F @ ref[..., None])[..., 0] / J[:, None, None]
        return F @ ref @ np.swapaxes(F, -1, -2) / (J**2)[:, None, None, None]

    def local_coefficients(self, coef: np.ndarray, cells=slice(None)) -> np.ndarray:
        return np.asarray(coef)[self.dofmap.cell_dofs[cells]]

    def evaluate(self, coef: np.ndarray, xhat: np.ndarray, cells=slice(None), kind: str = "value") -> np.ndarray:
        """Values of the discrete function ``coef`` at reference points of the
        selected cells, shape ``(ncells, npts, *shape)``."""
        tab = self.tables(xhat, cells, (kind,))[kind]
        loc = self.local_coefficients(coef, cells)
        extra = "abd"[: tab.ndim - 3]
        return np.einsum(f"cqs{extra},cs->cq{extra}", tab, loc)


def locate_cells(mesh: Mesh, X: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Containing cell and reference coordinates of physical points.

    Points on shared faces go to whichever incident cell has the largest
    smallest barycentric coordinate. Raises for points outside the mesh.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    cells = np.zeros(len(X), dtype=np.int64)
    xhat = np.zeros_like(X)
    for sl in chunks(len(X), size=64, work=mesh.num_cells):
        xh = np.einsum("cij,pcj->pci", mesh.inv_jacobians, X[sl, None, :] - mesh.origins[None])
        lam_min = np.minimum(1.0 - xh.sum(axis=2), xh.min(axis=2))
        best = np.argmax(lam_min, axis=1)
        if np.any(lam_min[np.arange(len(best)), best] < -tol):
            raise ValueError("point outside the mesh")
        cells[sl] = best
        xhat[sl] = xh[np.arange(len(best)), best]
    return cells, xhat


def discrete_field(space: "FESpace", coef: np.ndarray, kind: str = "value"):
    """Callable ``X -> values`` of a discrete function at physical points."""
    coef = np.asarray(coef, dtype=float)

    def fn(X: np.ndarray) -> np.ndarray:
        cells, xhat = locate_cells(space.mesh, X)
        return space.evaluate_points(coef, xhat[:, None, :], cells, kind)[:, 0]

    return fn


def volume_rule(degree: int):
    return tet_rule(degree)


def face_rule(degree: int):
    return tri_rule(degree)
