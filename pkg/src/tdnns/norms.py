"""Discrete norms: the mesh-dependent stress norm, H(curl) and broken H1.

The stress norm squares to::

    ||tau||_L2^2 + sum_F h_F ||tau_nn||_F^2 + sup_{w in W_h} b(tau, grad w)^2 / ||grad w||^2

and the supremum is evaluated exactly as ``g^T K^{-1} g`` with
``g_j = b(tau, grad w_j)`` over the free W DOFs and ``K`` the W stiffness.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_B, assemble_w_stiffness, face_quadrature, gradient_matrix
from .quadrature import tet_rule, tri_rule
from .reference import W
from .space import FESpace, chunks, local_face_points, normal_component


class NormError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormReport:
    l2_sigma: float = 0.0
    face_term: float = 0.0
    dual_term: float = 0.0
    sigma_h_norm: float = 0.0
    hcurl_norm: float | None = None
    broken_h1_norm: float | None = None

    CSV_COLUMNS = ("level", "h", "l2", "face", "dual", "total")

    def csv_row(self, level: int, h: float) -> str:
        vals = (self.l2_sigma, self.face_term, self.dual_term, self.sigma_h_norm)
        return ",".join([str(level), f"{h:.12e}"] + [f"{v:.12e}" for v in vals])

    def as_dict(self) -> dict:
        return asdict(self)


def _field_values(f, X: np.ndarray, shape) -> np.ndarray:
    vals = np.asarray(f(X.reshape(-1, 3)), dtype=float)
    return vals.reshape(X.shape[:2] + tuple(shape))


def _difference(space: FESpace, coef, field, xhat, cells, kind: str, shape, field_kind=None):
    """``field - u_h`` at reference points of the given cells."""
    X = space.mesh.map_points(xhat, cells)
    out = np.zeros(X.shape[:2] + tuple(shape))
    if field is not None:
        fn = field if field_kind is None else field_kind
        out += _field_values(fn, X, shape)
    if coef is not None:
        out -= space.evaluate(coef, xhat, cells, kind)
    return out


def _curl_from_gradient(g: np.ndarray) -> np.ndarray:
    return np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]], axis=-1)


# -- stress norm --------------------------------------------------------------


class DualNorm:
    """Evaluates ``sup_{w in W_h} b(tau, grad w) / ||grad w||`` on a mesh."""

    def __init__(self, sigma_space: FESpace, v_space: FESpace, B=None):
        self.sigma_space = sigma_space
        self.v_space = v_space
        self.w_space = FESpace(sigma_space.mesh, W, v_space.order + 1)
        self.B = assemble_B(sigma_space, v_space) if B is None else B
        self.D = gradient_matrix(v_space, self.w_space)
        self.free = self.w_space.dofmap.free
        if len(self.free) == 0:
            raise NormError("no free W DOFs")
        K = assemble_w_stiffness(self.w_space)
        self.K = K[self.free][:, self.free].tocsc()
        self.Dfree = self.D[:, self.free].tocsc()
        try:
            self._lu = spla.splu(self.K)
        except RuntimeError as exc:
            raise NormError("W stiffness is singular; the Dirichlet boundary must be nonempty") from exc

    def pairing(self, coef=None, field=None, degree: int | None = None) -> np.ndarray:
        """``g_j = b(tau, grad w_j)`` for free W DOFs, where ``tau = field - coef``."""
        bvec = np.zeros(self.v_space.ndofs)
        if field is not None:
            bvec += b_functional(field, self.sigma_space.mesh, self.v_space, degree)
        if coef is not None:
            bvec -= self.B.T @ coef
        return self.Dfree.T @ bvec

    def value(self, g: np.ndarray) -> float:
        y = self._lu.solve(g)
        res = np.linalg.norm(self.K @ y - g)
        if res > 1e-12 * max(np.linalg.norm(g), 1e-300) and res > 1e-14:
            y += self._lu.solve(g - self.K @ y)
        return float(np.sqrt(max(g @ y, 0.0)))

    def __call__(self, coef=None, field=None) -> float:
        return self.value(self.pairing(coef, field))


def b_functional(sigma_field, mesh, v_space: FESpace, degree: int | None = None) -> np.ndarray:
    """``b(sigma, v_j)`` for a smooth stress field and all V basis functions,
    by the same volume-plus-faces formula as the assembled B."""
    deg = degree if degree is not None else 2 * v_space.order + 4
    rule = tet_rule(deg)
    out = np.zeros(v_space.ndofs)
    for sl in chunks(mesh.num_cells, work=len(rule.points) * v_space.basis.size * 9):
        cells = np.arange(mesh.num_cells)[sl]
        eps = v_space.tables(rule.points, cells, ("strain",))["strain"]
        s = _field_values(sigma_field, mesh.map_points(rule.points, cells), (3, 3))
        dx = mesh.dets[cells, None] * rule.weights[None, :]
        local = -np.einsum("cq,cqab,cqjab->cj", dx, s, eps, optimize=True)
        for m in range(4):
            xhat, X, n, ds = face_quadrature(mesh, m, cells, deg)
            snn = np.einsum("cqab,ca,cb->cq", _field_values(sigma_field, X, (3, 3)), n, n, optimize=True)
            vn = normal_component(v_space.tables(xhat, cells)["value"], n)
            local += np.einsum("cq,cq,cqj->cj", ds, snn, vn, optimize=True)
        np.add.at(out, v_space.dofmap.cell_dofs[cells].ravel(), local.ravel())
    return out


def gradient_pairing_direct(sigma_space: FESpace, w_space: FESpace, coef=None, field=None, degree=None) -> np.ndarray:
    """``b(tau, grad w_j)`` for all W DOFs, ``tau = field - coef``, from W
    Hessian and normal-derivative tables without the embedding into V.
    Used as an independent route."""
    mesh = sigma_space.mesh
    deg = degree if degree is not None else 2 * sigma_space.order + 4
    rule = tet_rule(deg)
    out = np.zeros(w_space.ndofs)
    for sl in chunks(mesh.num_cells, work=len(rule.points) * (w_space.basis.size + sigma_space.basis.size) * 9):
        cells = np.arange(mesh.num_cells)[sl]
        hess = w_space.tables(rule.points, cells, ("hessian",))["hessian"]
        tau = _difference(sigma_space, coef, field, rule.points, cells, "value", (3, 3))
        dx = mesh.dets[cells, None] * rule.weights[None, :]
        local = -np.einsum("cq,cqab,cqjab->cj", dx, tau, hess, optimize=True)
        for m in range(4):
            xhat, X, n, ds = face_quadrature(mesh, m, cells, deg)
            t = _difference(sigma_space, coef, field, xhat, cells, "value", (3, 3))
            tnn = np.einsum("cqab,ca,cb->cq", t, n, n, optimize=True)
            dn = normal_component(w_space.tables(xhat, cells, ("grad",))["grad"], n)
            local += np.einsum("cq,cq,cqj->cj", ds, tnn, dn, optimize=True)
        np.add.at(out, w_space.dofmap.cell_dofs[cells].ravel(), local.ravel())
    return out


def sigma_l2_and_face(sigma_space: FESpace, coef=None, field=None, degree: int | None = None) -> tuple[float, float]:
    """L2 norm and h_F-weighted face term of ``field - coef``."""
    mesh = sigma_space.mesh
    deg = degree if degree is not None else 2 * sigma_space.order + 4
    rule = tet_rule(deg)
    l2 = 0.0
    for sl in chunks(mesh.num_cells, work=len(rule.points) * sigma_space.basis.size * 9):
        cells = np.arange(mesh.num_cells)[sl]
        e = _difference(sigma_space, coef, field, rule.points, cells, "value", (3, 3))
        l2 += float(np.einsum("c,q,cqab,cqab->", mesh.dets[cells], rule.weights, e, e, optimize=True))
    hF = mesh.face_diameters()
    face = 0.0
    frule = tri_rule(deg)
    for m in range(4):
        faces = np.flatnonzero(mesh.face_local[:, 0] == m)
        xhat = local_face_points(m, frule.points)
        for sl in chunks(len(faces), work=len(xhat) * sigma_space.basis.size * 9):
            fs = faces[sl]
            cells = mesh.face_cells[fs, 0]
            n = mesh.cell_face_normals[cells, m]
            e = _difference(sigma_space, coef, field, xhat, cells, "value", (3, 3))
            enn = np.einsum("cqab,ca,cb->cq", e, n, n, optimize=True)
            w = 2.0 * mesh.cell_face_areas[cells, m] * hF[fs]
            face += float(np.einsum("c,q,cq->", w, frule.weights, enn**2))
    return float(np.sqrt(l2)), float(np.sqrt(face))


def sigma_h_norm(sigma_space: FESpace, coef=None, field=None, dual: DualNorm | None = None, v_space=None) -> NormReport:
    """Stress-norm report of ``field - coef`` (either may be omitted)."""
    if coef is None and field is None:
        return NormReport()
    l2, face = sigma_l2_and_face(sigma_space, coef, field)
    if dual is None:
        if v_space is None:
            v_space = FESpace(sigma_space.mesh, "V", sigma_space.order)
        dual = DualNorm(sigma_space, v_space)
    d = dual(coef, field)
    return NormReport(l2, face, d, float(np.sqrt(l2**2 + face**2 + d**2)))


# -- displacement norms ---------------------------------------------------------


def hcurl_norm(v_space: FESpace, coef=None, field=None, degree: int | None = None) -> float:
    """``||v||^2 = int |v|^2 + |curl v|^2`` for ``v = field - coef``.

    ``field`` needs ``value`` and ``derivative`` (gradient, ``[i, j] = d v_i / d x_j``).
    """
    mesh = v_space.mesh
    rule = tet_rule(degree if degree is not None else 2 * v_space.order + 4)
    total = 0.0
    for sl in chunks(mesh.num_cells, work=len(rule.points) * v_space.basis.size * 3):
        cells = np.arange(mesh.num_cells)[sl]
        val = _difference(v_space, coef, field, rule.points, cells, "value", (3,))
        X = mesh.map_points(rule.points, cells)
        curl = np.zeros(val.shape)
        if field is not None:
            curl += _curl_from_gradient(_field_values(field.derivative, X, (3, 3)))
        if coef is not None:
            curl -= v_space.evaluate(coef, rule.points, cells, "curl")
        dx = mesh.dets[cells, None] * rule.weights[None, :]
        total += float(np.sum(dx[..., None] * (val**2 + curl**2)))
    return float(np.sqrt(total))


def strain_term(v_space: FESpace, coef=None, field=None, degree: int | None = None) -> float:
    mesh = v_space.mesh
    rule = tet_rule(degree if degree is not None else 2 * v_space.order + 4)
    total = 0.0
    for sl in chunks(mesh.num_cells, work=len(rule.points) * v_space.basis.size * 9):
        cells = np.arange(mesh.num_cells)[sl]
        X = mesh.map_points(rule.points, cells)
        eps = np.zeros(X.shape[:2] + (3, 3))
        if field is not None:
            g = _field_values(field.derivative, X, (3, 3))
            eps += 0.5 * (g + np.swapaxes(g, -1, -2))
        if coef is not None:
            eps -= v_space.evaluate(coef, rule.points, cells, "strain")
        dx = mesh.dets[cells, None] * rule.weights[None, :]
        total += float(np.sum(dx[..., None, None] * eps**2))
    return float(np.sqrt(total))


def normal_jump_term(v_space: FESpace, coef, degree: int | None = None) -> float:
    """``sqrt(sum_{interior F} h_F^{-1} ||[v_n]||_F^2)`` of a discrete field.

    Smooth fields have no jump, so only the discrete part contributes.
    """
    mesh = v_space.mesh
    if coef is None:
        return 0.0
    frule = tri_rule(degree if degree is not None else 2 * v_space.order + 2)
    hF = mesh.face_diameters()
    inner = mesh.interior_faces()
    total = 0.0
    for m in range(4):
        faces = inner[mesh.face_local[inner, 0] == m]
        if len(faces) == 0:
            continue
        xhat0 = local_face_points(m, frule.points)
        for sl in chunks(len(faces), work=len(frule.points) * v_space.basis.size * 3):
            fs = faces[sl]
            c0, c1 = mesh.face_cells[fs, 0], mesh.face_cells[fs, 1]
            X = mesh.map_points(xhat0, c0)
            xhat1 = np.einsum("cij,cqj->cqi", mesh.inv_jacobians[c1], X - mesh.origins[c1][:, None, :])
            n = mesh.cell_face_normals[c0, m]
            v0 = v_space.evaluate(coef, xhat0, c0)
            v1 = v_space.evaluate_points(coef, xhat1, c1)
            jump = np.einsum("cqa,ca->cq", v0 - v1, n)
            w = 2.0 * mesh.cell_face_areas[c0, m] / hF[fs]
            total += float(np.einsum("c,q,cq->", w, frule.weights, jump**2))
    return float(np.sqrt(total))


def broken_h1_norm(v_space: FESpace, coef=None, field=None, degree: int | None = None) -> float:
    """Elementwise strain plus interior-face normal jumps weighted by ``1/h_F``.
    Dirichlet boundary faces are not part of the jump sum."""
    s = strain_term(v_space, coef, field, degree)
    j = normal_jump_term(v_space, coef, degree)
    return float(np.sqrt(s**2 + j**2))


def h1_norm(w_space: FESpace, coef=None, field=None, degree: int | None = None) -> float:
    """``||w||^2 = int w^2 + |grad w|^2`` for ``w = field - coef``; ``field``
    needs ``value`` and ``derivative`` (the gradient)."""
    mesh = w_space.mesh
    rule = tet_rule(degree if degree is not None else 2 * w_space.order + 4)
    total = 0.0
    for sl in chunks(mesh.num_cells, work=len(rule.points) * w_space.basis.size * 3):
        cells = np.arange(mesh.num_cells)[sl]
        val = _difference(w_space, coef, field, rule.points, cells, "value", ())
        grad = np.zeros(val.shape + (3,))
        if field is not None:
            grad += _field_values(field.derivative, mesh.map_points(rule.points, cells), (3,))
        if coef is not None:
            grad -= w_space.evaluate(coef, rule.points, cells, "grad")
        dx = mesh.dets[cells, None] * rule.weights[None, :]
        total += float(np.sum(dx * (val**2 + (grad**2).sum(-1))))
    return float(np.sqrt(total))
