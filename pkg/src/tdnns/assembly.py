"""Assembly of the discrete saddle-point problem.

Bilinear forms, with ``n`` the outward unit normal of each cell::

    a(sigma, tau) = int A sigma : tau
    b(tau, v)     = -sum_T ( int_T tau : eps(v) - int_{dT} tau_nn v_n )

and right-hand sides::

    rhs_sigma(tau) = int_{Gamma_D} tau_nn u_D.n
    rhs_v(v)       = -int f.v - int_{Gamma_N} t_N,t . v_t

The matrix ``B`` is stored with stress rows and displacement columns, so the
full system reads ``[[A, B], [B^T, 0]] [sigma; u] = [rhs_sigma; rhs_v]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .interpolation import entity_dof_values, entity_functionals
from .mesh import DIRICHLET, NEUMANN, Mesh
from .quadrature import tet_rule, tri_rule
from .reference import V, local_functionals
from .space import FESpace, chunks, local_face_points, nn_trace, normal_component, vertex_ranks, weighted_gram


class MaterialError(ValueError):
    """Invalid elastic parameters."""


@dataclass(frozen=True)
class MaterialLaw:
    """Isotropic linear elasticity with Young's modulus ``E`` and Poisson ratio ``nu``."""

    E: float = 1.0
    nu: float = 0.3

    def __post_init__(self):
        if not np.isfinite(self.E) or self.E <= 0:
            raise MaterialError(f"Young's modulus must be positive, got {self.E}")
        if not np.isfinite(self.nu) or self.nu >= 0.5 or self.nu <= -1.0:
            raise MaterialError(f"Poisson ratio must lie in (-1, 1/2), got {self.nu}")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2 * (1 + self.nu))

    def compliance(self, sigma: np.ndarray) -> np.ndarray:
        """``A sigma`` on the trailing (3, 3) axes."""
        sigma = np.asarray(sigma, dtype=float)
        tr = np.trace(sigma, axis1=-2, axis2=-1)[..., None, None]
        return (1 + self.nu) / self.E * sigma - self.nu / self.E * tr * np.eye(3)

    def stiffness(self, eps: np.ndarray) -> np.ndarray:
        """``C eps`` on the trailing (3, 3) axes."""
        eps = np.asarray(eps, dtype=float)
        tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
        return self.lam * tr * np.eye(3) + 2 * self.mu * eps


# -- low-level accumulation ---------------------------------------------------


class _Accumulator:
    """Collects COO triplets; duplicates are summed on conversion."""

    def __init__(self, shape):
        self.shape = shape
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rdofs: np.ndarray, cdofs: np.ndarray, local: np.ndarray) -> None:
        nc, nr = rdofs.shape
        ncol = cdofs.shape[1]
        self.rows.append(np.broadcast_to(rdofs[:, :, None], (nc, nr, ncol)).ravel())
        self.cols.append(np.broadcast_to(cdofs[:, None, :], (nc, nr, ncol)).ravel())
        self.vals.append(local.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(self.shape)
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return sp.coo_matrix((v, (r, c)), shape=self.shape).tocsr()


def _add_vector(out: np.ndarray, dofs: np.ndarray, local: np.ndarray) -> None:
    np.add.at(out, dofs.ravel(), local.ravel())


def face_quadrature(mesh: Mesh, m: int, cells: np.ndarray, degree: int):
    """Reference points, physical points, outward normals and weights for
    local face ``m`` of the given cells."""
    rule = tri_rule(degree)
    xhat = local_face_points(m, rule.points)
    X = mesh.map_points(xhat, cells)
    n = mesh.cell_face_normals[cells, m]
    ds = 2.0 * mesh.cell_face_areas[cells, m][:, None] * rule.weights[None, :]
    return xhat, X, n, ds


def _faces_by_local(mesh: Mesh, faces: np.ndarray):
    """Group faces by the local index in their first incident cell."""
    faces = np.asarray(faces, dtype=np.int64)
    for m in range(4):
        sel = faces[mesh.face_local[faces, 0] == m]
        if len(sel):
            yield m, sel, mesh.face_cells[sel, 0]


def _eval_field(f, X: np.ndarray, shape) -> np.ndarray:
    vals = np.asarray(f(X.reshape(-1, 3)), dtype=float)
    return vals.reshape(X.shape[:2] + tuple(shape))


# -- bilinear forms -----------------------------------------------------------


def assemble_A(sigma_space: FESpace, material: MaterialLaw, degree: int | None = None) -> sp.csr_matrix:
    """Compliance mass matrix ``A_ij = int A sigma_j : sigma_i``."""
    mesh, dm = sigma_space.mesh, sigma_space.dofmap
    rule = tet_rule(degree if degree is not None else 2 * sigma_space.order)
    acc = _Accumulator((dm.ndofs, dm.ndofs))
    for sl in chunks(mesh.num_cells):
        psi = sigma_space.tables(rule.points, sl)["value"]
        dx = mesh.dets[sl, None] * rule.weights[None, :]
        local = weighted_gram(dx, psi, material.compliance(psi))
        acc.add(dm.cell_dofs[sl], dm.cell_dofs[sl], local)
    return acc.tocsr()


def assemble_B(sigma_space: FESpace, v_space: FESpace, degree: int | None = None) -> sp.csr_matrix:
    """``B_ij = b(sigma_i, v_j)``: volume strain term plus all four face
    terms of every cell."""
    mesh = sigma_space.mesh
    ds_, dv_ = sigma_space.dofmap, v_space.dofmap
    deg = degree if degree is not None else 2 * sigma_space.order
    rule = tet_rule(deg)
    acc = _Accumulator((ds_.ndofs, dv_.ndofs))
    for sl in chunks(mesh.num_cells):
        cells = np.arange(mesh.num_cells)[sl]
        tau = sigma_space.tables(rule.points, cells)["value"]
        eps = v_space.tables(rule.points, cells, ("strain",))["strain"]
        dx = mesh.dets[cells, None] * rule.weights[None, :]
        local = -weighted_gram(dx, tau, eps)
        for m in range(4):
            xhat, _, n, ds = face_quadrature(mesh, m, cells, deg)
            tnn = nn_trace(sigma_space.tables(xhat, cells)["value"], n)
            vn = normal_component(v_space.tables(xhat, cells)["value"], n)
            local += weighted_gram(ds, tnn, vn)
        acc.add(ds_.cell_dofs[cells], dv_.cell_dofs[cells], local)
    return acc.tocsr()


def assemble_w_stiffness(w_space: FESpace, degree: int | None = None) -> sp.csr_matrix:
    """``K_ij = int grad w_i . grad w_j`` on all W DOFs."""
    mesh, dm = w_space.mesh, w_space.dofmap
    rule = tet_rule(degree if degree is not None else 2 * (w_space.order - 1))
    acc = _Accumulator((dm.ndofs, dm.ndofs))
    for sl in chunks(mesh.num_cells):
        g = w_space.tables(rule.points, sl, ("grad",))["grad"]
        dx = mesh.dets[sl, None] * rule.weights[None, :]
        acc.add(dm.cell_dofs[sl], dm.cell_dofs[sl], weighted_gram(dx, g, g))
    return acc.tocsr()


def assemble_sigma_mass(sigma_space: FESpace, degree: int | None = None) -> sp.csr_matrix:
    """``int sigma_i : sigma_j``."""
    mesh, dm = sigma_space.mesh, sigma_space.dofmap
    rule = tet_rule(degree if degree is not None else 2 * sigma_space.order)
    acc = _Accumulator((dm.ndofs, dm.ndofs))
    for sl in chunks(mesh.num_cells):
        psi = sigma_space.tables(rule.points, sl)["value"]
        dx = mesh.dets[sl, None] * rule.weights[None, :]
        acc.add(dm.cell_dofs[sl], dm.cell_dofs[sl], weighted_gram(dx, psi, psi))
    return acc.tocsr()


def assemble_sigma_face_gram(sigma_space: FESpace, degree: int | None = None) -> sp.csr_matrix:
    """``sum_F h_F int_F (sigma_i)_nn (sigma_j)_nn`` over all faces, each
    face evaluated once from its first incident cell."""
    mesh, dm = sigma_space.mesh, sigma_space.dofmap
    deg = degree if degree is not None else 2 * sigma_space.order
    hF = mesh.face_diameters()
    acc = _Accumulator((dm.ndofs, dm.ndofs))
    for m, faces, cells in _faces_by_local(mesh, np.arange(mesh.num_faces)):
        for sl in chunks(len(faces)):
            c = cells[sl]
            xhat, _, n, ds = face_quadrature(mesh, m, c, deg)
            tnn = nn_trace(sigma_space.tables(xhat, c)["value"], n)
            w = ds * hF[faces[sl], None]
            acc.add(dm.cell_dofs[c], dm.cell_dofs[c], weighted_gram(w, tnn, tnn))
    return acc.tocsr()


def assemble_hcurl_gram(v_space: FESpace, degree: int | None = None) -> sp.csr_matrix:
    """``int v_i . v_j + curl v_i . curl v_j``."""
    mesh, dm = v_space.mesh, v_space.dofmap
    rule = tet_rule(degree if degree is not None else 2 * v_space.order)
    acc = _Accumulator((dm.ndofs, dm.ndofs))
    for sl in chunks(mesh.num_cells):
        t = v_space.tables(rule.points, sl, ("value", "curl"))
        dx = mesh.dets[sl, None] * rule.weights[None, :]
        local = weighted_gram(dx, t["value"], t["value"])
        local += weighted_gram(dx, t["curl"], t["curl"])
        acc.add(dm.cell_dofs[sl], dm.cell_dofs[sl], local)
    return acc.tocsr()


def gradient_matrix(v_space: FESpace, w_space: FESpace) -> sp.csr_matrix:
    """Discrete gradient ``D_ij = l^V_i(grad w_j)`` (V DOFs x W DOFs).

    Exact because grad W_h lies in V_h. Entries of shared entities are
    identical from every incident cell; they are written, not summed.
    """
    if w_space.order != v_space.order + 1:
        raise ValueError("W order must be V order + 1")
    mesh = v_space.mesh
    vb, wb = v_space.basis, w_space.basis
    ranks = vertex_ranks(mesh.cells)
    keys, inv = np.unique(ranks, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    local = np.empty((len(keys), vb.size, wb.size))
    for i, key in enumerate(keys):
        rows = []
        for g in local_functionals(V, v_space.order, tuple(key)):
            vals = wb.tabulate_grad(g.points.reshape(-1, 3))
            rows.append(g.contract(vals.reshape(g.points.shape[:2] + vals.shape[1:])))
        local[i] = np.vstack(rows) @ wb.transform_matrix(tuple(key))
    mats = local[inv]
    r = np.broadcast_to(v_space.dofmap.cell_dofs[:, :, None], mats.shape).ravel()
    c = np.broadcast_to(w_space.dofmap.cell_dofs[:, None, :], mats.shape).ravel()
    v = mats.ravel()
    keep = np.abs(v) > 1e-14 * max(1.0, np.abs(v).max())
    r, c, v = r[keep], c[keep], v[keep]
    pair = r * w_space.ndofs + c
    _, first = np.unique(pair, return_index=True)
    shape = (v_space.ndofs, w_space.ndofs)
    return sp.coo_matrix((v[first], (r[first], c[first])), shape=shape).tocsr()


# -- right-hand sides and essential data --------------------------------------


def _require(case, name: str):
    val = getattr(case, name, None)
    if val is None:
        raise ValueError(f"case is missing required data {name!r}")
    return val


def assemble_rhs(sigma_space: FESpace, v_space: FESpace, case, degree: int | None = None):
    """Load vectors ``(rhs_sigma, rhs_v)``.

    ``case`` provides ``f(X)``, ``u_D(X)`` and ``t_N(X, n)`` (each may be
    None only if the corresponding boundary part is empty or the load is
    zero).
    """
    mesh = sigma_space.mesh
    k = sigma_space.order
    deg = degree if degree is not None else 3 * k + 1
    rhs_s = np.zeros(sigma_space.ndofs)
    rhs_v = np.zeros(v_space.ndofs)

    f = getattr(case, "f", None)
    if f is not None:
        rule = tet_rule(deg)
        for sl in chunks(mesh.num_cells):
            vt = v_space.tables(rule.points, sl)["value"]
            fv = _eval_field(f, mesh.map_points(rule.points, sl), (3,))
            dx = mesh.dets[sl, None] * rule.weights[None, :]
            _add_vector(rhs_v, v_space.dofmap.cell_dofs[sl], -np.einsum("cq,cqa,cqja->cj", dx, fv, vt))

    dfaces = mesh.boundary_faces(DIRICHLET)
    if len(dfaces):
        uD = _require(case, "u_D")
        for m, faces, cells in _faces_by_local(mesh, dfaces):
            xhat, X, n, ds = face_quadrature(mesh, m, cells, deg)
            un = np.einsum("cqa,ca->cq", _eval_field(uD, X, (3,)), n)
            tnn = nn_trace(sigma_space.tables(xhat, cells)["value"], n)
            _add_vector(rhs_s, sigma_space.dofmap.cell_dofs[cells], np.einsum("cq,cq,cqi->ci", ds, un, tnn))

    nfaces = mesh.boundary_faces(NEUMANN)
    if len(nfaces):
        tN = _require(case, "t_N")
        for m, faces, cells in _faces_by_local(mesh, nfaces):
            xhat, X, n, ds = face_quadrature(mesh, m, cells, deg)
            nq = X.shape[1]
            nrep = np.repeat(n, nq, axis=0)
            t = np.asarray(tN(X.reshape(-1, 3), nrep), dtype=float).reshape(X.shape)
            tt = t - np.einsum("cqa,ca->cq", t, n)[..., None] * n[:, None, :]
            vt = v_space.tables(xhat, cells)["value"]
            _add_vector(rhs_v, v_space.dofmap.cell_dofs[cells], -np.einsum("cq,cqa,cqja->cj", ds, tt, vt))
    return rhs_s, rhs_v


def essential_values(sigma_space: FESpace, v_space: FESpace, case) -> tuple[np.ndarray, np.ndarray]:
    """Full-length vectors holding the prescribed values of constrained DOFs
    (zero elsewhere): V tangential DOFs on Gamma_D interpolate ``u_D``;
    stress face DOFs on Gamma_N interpolate the field ``(t_N.n) n n^T``."""
    mesh = sigma_space.mesh
    sig = np.zeros(sigma_space.ndofs)
    vel = np.zeros(v_space.ndofs)
    dfaces = mesh.boundary_faces(DIRICHLET)
    uD = getattr(case, "u_D", None)
    if uD is not None:
        idx, vals = entity_dof_values(v_space, uD, 1, mesh.dirichlet_edges())
        vel[idx] = vals
        idx, vals = entity_dof_values(v_space, uD, 2, dfaces)
        vel[idx] = vals
    nfaces = mesh.boundary_faces(NEUMANN)
    if len(nfaces):
        tN = _require(case, "t_N")
        group = entity_functionals(sigma_space, 2, nfaces)
        n = mesh.face_normals[nfaces]
        nq = group.points.shape[1]
        t = np.asarray(tN(group.points.reshape(-1, 3), np.repeat(n, nq, axis=0)), dtype=float)
        tn = np.einsum("eqa,ea->eq", t.reshape(group.points.shape), n)
        proxy = tn[..., None, None] * (n[:, None, :, None] * n[:, None, None, :])
        vals = group.contract(proxy[:, :, None])[:, 0]
        sig[sigma_space.dofmap.entity_dofs(2, nfaces).ravel()] = vals
    return sig, vel


@dataclass(eq=False)
class SparseSymSystem:
    """Assembled blocks, right-hand sides and essential data."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    rhs_sigma: np.ndarray
    rhs_v: np.ndarray
    sigma_free: np.ndarray
    v_free: np.ndarray
    sigma_fixed_values: np.ndarray = field(repr=False)
    v_fixed_values: np.ndarray = field(repr=False)

    @property
    def n_sigma(self) -> int:
        return self.A.shape[0]

    @property
    def n_v(self) -> int:
        return self.B.shape[1]

    def matrix(self) -> sp.csr_matrix:
        """Full block matrix ``[[A, B], [B^T, 0]]`` on all DOFs."""
        return sp.bmat([[self.A, self.B], [self.B.T, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_sigma, self.rhs_v])

    @property
    def free(self) -> np.ndarray:
        return np.concatenate([self.sigma_free, self.n_sigma + self.v_free])

    def fixed_vector(self) -> np.ndarray:
        return np.concatenate([self.sigma_fixed_values, self.v_fixed_values])

    def reduced(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Free-DOF matrix and right-hand side with essential columns moved
        to the right."""
        M = self.matrix()
        free = self.free
        x0 = self.fixed_vector()
        r = self.rhs() - M @ x0
        Mf = M[free][:, free].tocsr()
        return Mf, r[free]

    def expand(self, x_free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full ``(sigma, u)`` coefficient vectors from free values."""
        x = self.fixed_vector().copy()
        x[self.free] = x_free
        return x[: self.n_sigma], x[self.n_sigma :]


def apply_essential(A, B, rhs_sigma, rhs_v, sigma_space: FESpace, v_space: FESpace, case=None) -> SparseSymSystem:
    if case is None:
        sig = np.zeros(sigma_space.ndofs)
        vel = np.zeros(v_space.ndofs)
    else:
        sig, vel = essential_values(sigma_space, v_space, case)
    return SparseSymSystem(
        A.tocsr(),
        B.tocsr(),
        np.asarray(rhs_sigma, dtype=float),
        np.asarray(rhs_v, dtype=float),
        sigma_space.dofmap.free,
        v_space.dofmap.free,
        sig,
        vel,
    )


def assemble_system(sigma_space: FESpace, v_space: FESpace, material: MaterialLaw, case=None) -> SparseSymSystem:
    A = assemble_A(sigma_space, material)
    B = assemble_B(sigma_space, v_space)
    if case is None:
        rs, rv = np.zeros(sigma_space.ndofs), np.zeros(v_space.ndofs)
    else:
        rs, rv = assemble_rhs(sigma_space, v_space, case)
    return apply_essential(A, B, rs, rv, sigma_space, v_space, case)


def write_coo(matrix, path) -> None:
    """Write ``row col value`` lines (0-based)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open("w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
