"""Canonical interpolation operators onto W_h, V_h and the stress space.

Fields are callables mapping physical points ``(N, 3)`` to values
``(N,)``, ``(N, 3)`` or ``(N, 3, 3)``.

W and V interpolants apply the global DOF functionals directly. The stress
interpolant is computed by local solves: first each face (normal-normal
moments against P^k(F), weighted by the face Jacobian), then each cell
(moments against the mapped canonical tensors, weighted by the cell
Jacobian) with the face part held fixed. ``sigma_dofs_direct`` evaluates the
same DOFs straight from the functionals and serves as an independent route.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import REF_FACE_AREAS, REF_VERTICES
from .polynomials import orthonormal
from .quadrature import tet_rule, tri_rule
from .reference import (
    SIGMA,
    V,
    W,
    UnisolvenceError,
    cell_sigma_moments,
    edge_tangent_moments,
    edge_value_moments,
    face_nn_moments,
    face_tangent_moments,
    face_value_moments,
    reference_tensor_array,
    vertex_values,
)
from .space import FESpace, chunks, local_face_points, nn_trace


@dataclass(frozen=True)
class FieldFunction:
    """A smooth field on physical points with an optional derivative."""

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray] | None = None
    smoothness: str = "analytic"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(x)


def entity_functionals(space: FESpace, dim: int, entities=None):
    """Global functionals of ``space`` on the given entities of dimension
    ``dim`` (all entities by default). Returns a FunctionalGroup or None.

    Entity vertices are taken in increasing global order, which is what
    makes a shared DOF identical from every incident cell.
    """
    mesh = space.mesh
    X = mesh.vertices
    k = space.order
    if dim == 0:
        ent = np.arange(mesh.num_vertices) if entities is None else np.asarray(entities, dtype=np.int64)
        return vertex_values(X[ent]) if space.space == W and len(ent) else None
    if dim == 1:
        ent = mesh.edges if entities is None else mesh.edges[np.asarray(entities, dtype=np.int64)]
        if len(ent) == 0:
            return None
        if space.space == V:
            return edge_tangent_moments(X[ent[:, 0]], X[ent[:, 1]], k)
        if space.space == W:
            return edge_value_moments(X[ent[:, 0]], X[ent[:, 1]], k)
        return None
    if dim == 2:
        ent = mesh.faces if entities is None else mesh.faces[np.asarray(entities, dtype=np.int64)]
        if len(ent) == 0:
            return None
        a, b, c = X[ent[:, 0]], X[ent[:, 1]], X[ent[:, 2]]
        if space.space == SIGMA:
            return face_nn_moments(a, b, c, k)
        if space.space == V and k == 2:
            return face_tangent_moments(a, b, c)
        if space.space == W and k == 3:
            return face_value_moments(a, b, c)
        return None
    raise ValueError(f"no global functionals of dimension {dim}")


def entity_dof_values(space: FESpace, f, dim: int, entities) -> tuple[np.ndarray, np.ndarray]:
    """Global DOF indices and values of ``f`` on a set of entities."""
    entities = np.asarray(entities, dtype=np.int64)
    group = entity_functionals(space, dim, entities)
    if group is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    idx = space.dofmap.entity_dofs(dim, entities).ravel()
    return idx, group.apply(f)


def _interpolate_entities(space: FESpace, f) -> np.ndarray:
    coef = np.zeros(space.ndofs)
    mesh = space.mesh
    counts = {0: mesh.num_vertices, 1: mesh.num_edges, 2: mesh.num_faces}
    for dim in (0, 1, 2):
        if space.dofmap.per_entity[dim] == 0:
            continue
        idx, vals = entity_dof_values(space, f, dim, np.arange(counts[dim]))
        coef[idx] = vals
    return coef


def interpolate_w(f, space: FESpace) -> np.ndarray:
    if space.space != W:
        raise ValueError("interpolate_w needs a W space")
    return _interpolate_entities(space, f)


def interpolate_v(f, space: FESpace) -> np.ndarray:
    if space.space != V:
        raise ValueError("interpolate_v needs a V space")
    return _interpolate_entities(space, f)


# -- stress interpolant -------------------------------------------------------


def _interior_tests(k: int, xhat: np.ndarray) -> np.ndarray:
    """Reference test tensors ``(ntest, nq, 3, 3)``: q * S^{F_m} for q in
    P^{k-1}, then q * S^{T,n} for q in P^k."""
    S = reference_tensor_array().astype(float)
    out = []
    qf = orthonormal(k - 1, xhat)
    for m in range(4):
        out.append(qf[:, :, None, None] * S[m])
    qt = orthonormal(k, xhat)
    for n in range(2):
        out.append(qt[:, :, None, None] * S[4 + n])
    return np.concatenate(out, axis=0)


def _pull_back(t: np.ndarray, Finv: np.ndarray) -> np.ndarray:
    """``F^{-1} t F^{-T}`` per cell for ``t`` of shape ``(c, ..., 3, 3)``."""
    shape = t.shape
    t = t.reshape(shape[0], -1, 3, 3)
    out = Finv[:, None] @ t @ np.swapaxes(Finv, 1, 2)[:, None]
    return out.reshape(shape)


def _solve(M: np.ndarray, r: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.solve(M, r[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise UnisolvenceError(f"singular local {what} system in stress interpolation") from exc


def interpolate_sigma(f, space: FESpace, degree: int | None = None) -> np.ndarray:
    """Stress interpolant of a symmetric-tensor field by face-first local solves."""
    if space.space != SIGMA:
        raise ValueError("interpolate_sigma needs a SIGMA space")
    mesh, basis, dm = space.mesh, space.basis, space.dofmap
    k = space.order
    deg = degree if degree is not None else 2 * k + 4
    coef = np.zeros(space.ndofs)

    # faces: J_F-weighted nn moments against P^k(F), from the first incident cell
    frule = tri_rule(deg)
    qface = orthonormal(k, frule.points)
    for m in range(4):
        faces = np.flatnonzero(mesh.face_local[:, 0] == m)
        if len(faces) == 0:
            continue
        loc = basis.entity_dofs(2, m)
        xhat = local_face_points(m, frule.points)
        for sl in chunks(len(faces), work=len(xhat) * basis.size * 9):
            fs = faces[sl]
            cells = mesh.face_cells[fs, 0]
            n = mesh.cell_face_normals[cells, m]
            area = mesh.cell_face_areas[cells, m]
            jf = area / REF_FACE_AREAS[m]
            ds = 2.0 * area[:, None] * frule.weights[None, :] * jf[:, None]
            psi_nn = nn_trace(space.tables(xhat, cells)["value"][:, :, loc], n)
            X = mesh.map_points(xhat, cells)
            fv = np.asarray(f(X.reshape(-1, 3))).reshape(X.shape[:2] + (3, 3))
            f_nn = nn_trace(fv[:, :, None], n)[:, :, 0]
            wq = ds[:, None, :] * qface[None, :, :]
            M = wq @ psi_nn
            r = np.einsum("ciq,cq->ci", wq, f_nn)
            coef[dm.entity_dofs(2, fs)] = _solve(M, r, "face")

    # cells: J_T-weighted moments against F^{-T} S F^{-1}, face part fixed
    vrule = tet_rule(deg)
    tests_hat = _interior_tests(k, vrule.points)
    inner = basis.entity_dofs(3, 0)
    outer = np.setdiff1d(np.arange(basis.size), inner)
    nt = len(tests_hat)
    tests_flat = tests_hat.reshape(nt, -1).T
    for sl in chunks(mesh.num_cells, work=len(vrule.points) * basis.size * 9):
        cells = np.arange(mesh.num_cells)[sl]
        nc = len(cells)
        Finv = mesh.inv_jacobians[cells]
        # (f - Pi f) : (F^{-T} S F^{-1}) = (F^{-1} (f - Pi f) F^{-T}) : S
        dx = (mesh.dets[cells] ** 2)[:, None] * vrule.weights[None, :]
        psi = space.tables(vrule.points, cells)["value"]
        X = mesh.map_points(vrule.points, cells)
        fv = np.asarray(f(X.reshape(-1, 3))).reshape(X.shape[:2] + (3, 3))
        known = np.einsum("cqsij,cs->cqij", psi[:, :, outer], coef[dm.cell_dofs[cells][:, outer]], optimize=True)
        rest = _pull_back(fv - known, Finv) * dx[:, :, None, None]
        pinner = _pull_back(psi[:, :, inner], Finv) * dx[:, :, None, None, None]
        pinner = pinner.transpose(0, 2, 1, 3, 4).reshape(nc, len(inner), -1)
        M = (pinner @ tests_flat).transpose(0, 2, 1)
        r = rest.reshape(nc, -1) @ tests_flat
        coef[dm.cell_dofs[cells][:, inner]] = _solve(M, r, "cell")
    return coef


def sigma_dofs_direct(f, space: FESpace) -> np.ndarray:
    """Stress DOFs of ``f`` evaluated straight from the DOF functionals.

    Face DOFs use the physical face functionals; interior DOFs pull ``f``
    back to the reference cell (``J^2 F^{-1} f F^{-T}``) and apply the
    reference interior functionals.
    """
    if space.space != SIGMA:
        raise ValueError("sigma_dofs_direct needs a SIGMA space")
    mesh, dm = space.mesh, space.dofmap
    coef = np.zeros(space.ndofs)
    idx, vals = entity_dof_values(space, f, 2, np.arange(mesh.num_faces))
    coef[idx] = vals
    group = cell_sigma_moments(REF_VERTICES, space.order)
    xhat = group.points[0]
    wts = group.weights[0]
    inner = space.basis.entity_dofs(3, 0)
    X = mesh.map_points(xhat)
    fv = np.asarray(f(X.reshape(-1, 3))).reshape(X.shape[:2] + (3, 3))
    pulled = np.einsum("c,cia,cqab,cjb->cqij", mesh.dets**2, mesh.inv_jacobians, fv, mesh.inv_jacobians)
    coef[dm.cell_dofs[:, inner]] = np.einsum("tqij,cqij->ct", wts, pulled)
    return coef


def interpolate(f, space: FESpace) -> np.ndarray:
    if space.space == SIGMA:
        return interpolate_sigma(f, space)
    if space.space == V:
        return interpolate_v(f, space)
    return interpolate_w(f, space)
