"""Reference-element bases and DOF functionals for the three spaces.

``SIGMA``: symmetric-tensor-valued P^k with normal-normal face moments and
interior moments against the six canonical tensors. ``V``: vector-valued P^k
(Nedelec second kind) with tangential edge/face moments. ``W``: scalar
P^{k+1} with vertex values and unit-mass edge/face moments.

Every local basis is the dual basis of its functional set, obtained by
inverting the Vandermonde matrix of the functionals against a monomial
prime basis.

The functional generators below are written for arbitrary entity vertex
coordinates. All of them are invariant under the affine conforming
transformations of the respective space, so the same code defines the DOFs
on the reference element and on physical entities. Entity vertices are
always passed in *global* order; the moment polynomials are parametrized
from the first vertex.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .mesh import LOCAL_EDGES, LOCAL_FACES, REF_VERTICES
from .polynomials import Monomials, dim_p, legendre01, orthonormal
from .quadrature import line_rule, tet_rule, tri_rule

SIGMA = "SIGMA"
V = "V"
W = "W"
SPACES = (SIGMA, V, W)

SYM_INDEX = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


def _sym_basis() -> np.ndarray:
    E = np.zeros((6, 3, 3))
    for c, (i, j) in enumerate(SYM_INDEX):
        E[c, i, j] = 1.0
        E[c, j, i] = 1.0
    return E


SYM_BASIS = _sym_basis()


@dataclass(frozen=True)
class SymTensor3:
    xx: float
    yy: float
    zz: float
    yz: float
    xz: float
    xy: float

    def full(self) -> np.ndarray:
        return np.array([[self.xx, self.xy, self.xz], [self.xy, self.yy, self.yz], [self.xz, self.yz, self.zz]])

    @classmethod
    def from_full(cls, a) -> "SymTensor3":
        a = np.asarray(a)
        return cls(a[0, 0], a[1, 1], a[2, 2], a[1, 2], a[0, 2], a[0, 1])


_TENSORS = np.array(
    [
        [[-6, 1, 1], [1, 0, 1], [1, 1, 0]],
        [[0, 1, 1], [1, -6, 1], [1, 1, 0]],
        [[0, 1, 1], [1, 0, 1], [1, 1, -6]],
        [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
        [[0, 0, -1], [0, 0, 1], [-1, 1, 0]],
        [[0, -1, 0], [-1, 0, 1], [0, 1, 0]],
    ],
    dtype=np.int64,
)


def reference_tensors() -> tuple[SymTensor3, ...]:
    """The four face tensors followed by the two interior tensors."""
    return tuple(SymTensor3.from_full(t) for t in _TENSORS)


def reference_tensor_array() -> np.ndarray:
    return _TENSORS.copy()


# -- functionals ------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalGroup:
    """DOF functionals attached to a family of entities of one dimension.

    ``weights`` has shape ``(nent, nfun, nq, *value_shape)`` and the value of
    functional ``j`` on entity ``e`` is ``sum_q weights[e, j, q] : f(points[e, q])``.
    """

    dim: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def num_entities(self) -> int:
        return self.points.shape[0]

    @property
    def per_entity(self) -> int:
        return self.weights.shape[1]

    def contract(self, values: np.ndarray) -> np.ndarray:
        """Apply to tabulated values ``(nent, nq, nshape, *vshape)``.

        Returns ``(nent * nfun, nshape)``.
        """
        nv = self.weights.ndim - 3
        axes = "ijkl"[:nv]
        out = np.einsum(f"efq{axes},eqs{axes}->efs", self.weights, values)
        return out.reshape(-1, values.shape[2])

    def apply(self, f) -> np.ndarray:
        """Apply to a callable ``f(points (N, 3)) -> (N, *vshape)``."""
        vals = np.asarray(f(self.points.reshape(-1, 3)), dtype=float)
        vals = vals.reshape(self.points.shape[:2] + (1,) + self.weights.shape[3:])
        return self.contract(vals)[:, 0]


# entity moments of V and W are integrated well beyond polynomial exactness so
# that the gradient commutes with interpolation of smooth data to round-off
EDGE_DEGREE = 24
FACE_DEGREE = 16


def _frame_pts(x0, e1, e2, pts2):
    return x0[:, None, :] + pts2[None, :, 0, None] * e1[:, None, :] + pts2[None, :, 1, None] * e2[:, None, :]


def edge_tangent_moments(xa, xb, k: int, degree: int | None = None) -> FunctionalGroup:
    """``int_0^1 v(x(s)) . (x_b - x_a) q_j(s) ds`` for orthonormal ``q_j`` in P^k."""
    xa, xb = np.atleast_2d(xa), np.atleast_2d(xb)
    rule = line_rule(degree if degree is not None else EDGE_DEGREE)
    s = rule.points[:, 0]
    d = xb - xa
    pts = xa[:, None, :] + s[None, :, None] * d[:, None, :]
    q = legendre01(k, s)
    wts = rule.weights[None, None, :, None] * q[None, :, :, None] * d[:, None, None, :]
    return FunctionalGroup(1, pts, wts)


def face_tangent_moments(xa, xb, xc, degree: int = FACE_DEGREE) -> FunctionalGroup:
    """Face moments of ``v`` against the lowest-order Raviart-Thomas fields
    ``x - x_j`` (tangential to the face), normalized by the face measure."""
    xa, xb, xc = np.atleast_2d(xa), np.atleast_2d(xb), np.atleast_2d(xc)
    rule = tri_rule(degree)
    pts = _frame_pts(xa, xb - xa, xc - xa, rule.points)
    w = 2.0 * rule.weights
    rt = np.stack([pts - x[:, None, :] for x in (xa, xb, xc)], axis=1)
    wts = w[None, None, :, None] * rt
    return FunctionalGroup(2, pts, wts)


def face_nn_moments(xa, xb, xc, k: int, degree: int | None = None) -> FunctionalGroup:
    """Normal-normal face moments ``mean_F (nu^T sigma nu) q_j`` with the area
    vector ``nu = (x_b - x_a) x (x_c - x_a)`` and orthonormal ``q_j`` in P^k(F)."""
    xa, xb, xc = np.atleast_2d(xa), np.atleast_2d(xb), np.atleast_2d(xc)
    rule = tri_rule(degree if degree is not None else 2 * k + 4)
    pts = _frame_pts(xa, xb - xa, xc - xa, rule.points)
    nu = np.cross(xb - xa, xc - xa)
    nn = nu[:, :, None] * nu[:, None, :]
    q = orthonormal(k, rule.points)
    w = 2.0 * rule.weights
    wts = (w[None, :] * q)[None, :, :, None, None] * nn[:, None, None, :, :]
    return FunctionalGroup(2, pts, wts)


def vertex_values(x) -> FunctionalGroup:
    x = np.atleast_2d(x)
    return FunctionalGroup(0, x[:, None, :], np.ones((len(x), 1, 1)))


def edge_value_moments(xa, xb, order: int, degree: int | None = None) -> FunctionalGroup:
    """Unit-mass edge moments of a scalar against P^{order-2}(E)."""
    xa, xb = np.atleast_2d(xa), np.atleast_2d(xb)
    rule = line_rule(degree if degree is not None else EDGE_DEGREE)
    s = rule.points[:, 0]
    pts = xa[:, None, :] + s[None, :, None] * (xb - xa)[:, None, :]
    if order == 2:
        q = np.ones((1, len(s)))
    elif order == 3:
        q = np.stack([2.0 * (1.0 - s), 2.0 * s])
    else:
        raise ValueError(f"unsupported W order {order}")
    wts = np.broadcast_to((rule.weights[None, :] * q)[None], (len(xa),) + q.shape).copy()
    return FunctionalGroup(1, pts, wts)


def face_value_moments(xa, xb, xc, degree: int = FACE_DEGREE) -> FunctionalGroup:
    """Face mean of a scalar."""
    xa, xb, xc = np.atleast_2d(xa), np.atleast_2d(xb), np.atleast_2d(xc)
    rule = tri_rule(degree)
    pts = _frame_pts(xa, xb - xa, xc - xa, rule.points)
    wts = np.broadcast_to(2.0 * rule.weights[None, None, :], (len(xa), 1, len(rule.weights))).copy()
    return FunctionalGroup(2, pts, wts)


def cell_sigma_moments(vertices, k: int, degree: int | None = None) -> FunctionalGroup:
    """Interior moments ``mean_T sigma : (q S)`` against ``q S^{F_m}``
    (q in P^{k-1}) and ``q S^{T,n}`` (q in P^k), in the cell's own frame."""
    v = np.asarray(vertices, dtype=float)
    rule = tet_rule(degree if degree is not None else 2 * k + 4)
    F = np.column_stack([v[1] - v[0], v[2] - v[0], v[3] - v[0]])
    pts = v[0] + rule.points @ F.T
    w = 6.0 * rule.weights
    S = _TENSORS.astype(float)
    blocks = []
    qf = orthonormal(k - 1, rule.points)
    for m in range(4):
        blocks.append((w * qf)[:, :, None, None] * S[m][None, None])
    qt = orthonormal(k, rule.points)
    for n in range(2):
        blocks.append((w * qt)[:, :, None, None] * S[4 + n][None, None])
    wts = np.concatenate(blocks, axis=0)
    return FunctionalGroup(3, pts[None], wts[None])


def _ordered(entities, ranks) -> list[tuple[int, ...]]:
    return [tuple(sorted(ent, key=lambda v: ranks[v])) for ent in entities]


def local_functionals(space: str, order: int, ranks=(0, 1, 2, 3), vertices=REF_VERTICES) -> list[FunctionalGroup]:
    """Functional groups of a cell whose local vertices have global ranks ``ranks``.

    Group order (and therefore local DOF order) is: vertices, edges, faces,
    interior. Within a group entities follow local numbering.
    """
    vx = np.asarray(vertices, dtype=float)
    edges = np.array(_ordered(LOCAL_EDGES, ranks))
    faces = np.array(_ordered(LOCAL_FACES, ranks))
    groups = []
    if space == SIGMA:
        groups.append(face_nn_moments(vx[faces[:, 0]], vx[faces[:, 1]], vx[faces[:, 2]], order))
        groups.append(cell_sigma_moments(vx, order))
    elif space == V:
        groups.append(edge_tangent_moments(vx[edges[:, 0]], vx[edges[:, 1]], order))
        if order == 2:
            groups.append(face_tangent_moments(vx[faces[:, 0]], vx[faces[:, 1]], vx[faces[:, 2]]))
        elif order != 1:
            raise ValueError(f"unsupported V order {order}")
    elif space == W:
        groups.append(vertex_values(vx))
        groups.append(edge_value_moments(vx[edges[:, 0]], vx[edges[:, 1]], order))
        if order == 3:
            groups.append(face_value_moments(vx[faces[:, 0]], vx[faces[:, 1]], vx[faces[:, 2]]))
        elif order != 2:
            raise ValueError(f"unsupported W order {order}")
    else:
        raise ValueError(f"unknown space {space!r}")
    return groups


# -- bases ------------------------------------------------------------------


@dataclass(frozen=True)
class DofDescriptor:
    dim: int
    entity: int
    index: int


VALUE_SHAPES = {SIGMA: (3, 3), V: (3,), W: ()}
_NCOMP = {SIGMA: 6, V: 3, W: 1}


def _tabulate(space: str, coeffs: np.ndarray, mono_vals: np.ndarray) -> np.ndarray:
    # mono_vals: (npts, nmono, *deriv); result (npts, nshape, *vshape, *deriv)
    nd = mono_vals.ndim - 2
    out = np.tensordot(mono_vals, coeffs, axes=([1], [2]))  # (p, *deriv, s, c)
    if space == SIGMA:
        out = np.tensordot(out, SYM_BASIS, axes=([-1], [0]))  # (p, *deriv, s, i, j)
        out = np.moveaxis(out, list(range(1, 1 + nd)), list(range(4, 4 + nd)))
    else:
        out = np.moveaxis(out, list(range(1, 1 + nd)), list(range(3, 3 + nd)))
        if space == W:
            out = out[:, :, 0]
    return out


@dataclass(frozen=True, eq=False)
class ReferenceBasis:
    """Dual basis of a local functional set on the reference tetrahedron.

    ``coeffs[s, c, m]`` is the coefficient of shape ``s`` on component ``c``
    (symmetric-tensor components for SIGMA) and monomial ``m``.
    """

    space: str
    order: int
    coeffs: np.ndarray
    dofs: tuple[DofDescriptor, ...]
    vandermonde_cond: float

    @cached_property
    def monomials(self) -> Monomials:
        return Monomials(self.order)

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    @property
    def value_shape(self) -> tuple[int, ...]:
        return VALUE_SHAPES[self.space]

    def tabulate(self, pts) -> np.ndarray:
        """Shape values ``(npts, nshape, *value_shape)``."""
        return _tabulate(self.space, self.coeffs, self.monomials.eval(pts))

    def tabulate_grad(self, pts) -> np.ndarray:
        """Shape gradients ``(npts, nshape, *value_shape, 3)``."""
        return _tabulate(self.space, self.coeffs, self.monomials.grad(pts))

    def tabulate_hessian(self, pts) -> np.ndarray:
        if self.space != W:
            raise ValueError("Hessian tables are provided for the scalar space only")
        return _tabulate(self.space, self.coeffs, self.monomials.hessian(pts))

    def tabulate_strain(self, pts) -> np.ndarray:
        g = self.tabulate_grad(pts)
        return 0.5 * (g + np.swapaxes(g, 2, 3))

    def tabulate_curl(self, pts) -> np.ndarray:
        g = self.tabulate_grad(pts)
        return curl_from_grad(g)

    def entity_dofs(self, dim: int, entity: int) -> list[int]:
        return [i for i, d in enumerate(self.dofs) if d.dim == dim and d.entity == entity]

    def functional_matrix(self, groups: list[FunctionalGroup]) -> np.ndarray:
        """Matrix ``[l_i(phi_j)]`` of the given functionals on this basis."""
        rows = []
        for g in groups:
            vals = self.tabulate(g.points.reshape(-1, 3))
            vals = vals.reshape(g.points.shape[:2] + vals.shape[1:])
            rows.append(g.contract(vals))
        return np.vstack(rows)

    def transform_matrix(self, ranks) -> np.ndarray:
        """Coefficients expressing the basis dual to the functionals of a
        cell with vertex ranks ``ranks`` in terms of this basis."""
        return _transform_matrix(self.space, self.order, tuple(int(r) for r in ranks))


def curl_from_grad(g: np.ndarray) -> np.ndarray:
    """Curl from a gradient table ``(..., 3 comp, 3 deriv)``."""
    return np.stack(
        [g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]],
        axis=-1,
    )


def _check_order(space: str, order: int) -> None:
    allowed = {SIGMA: (1, 2), V: (1, 2), W: (2, 3)}
    if space not in allowed:
        raise ValueError(f"unknown space {space!r}")
    if order not in allowed[space]:
        raise ValueError(f"order {order!r} not supported for {space}; allowed {allowed[space]}")


def _descriptors(groups) -> tuple[DofDescriptor, ...]:
    out = []
    for g in groups:
        for e in range(g.num_entities):
            for j in range(g.per_entity):
                out.append(DofDescriptor(g.dim, e, j))
    return tuple(out)


class UnisolvenceError(RuntimeError):
    """The DOF-Vandermonde matrix of a local functional set is singular."""


_build_lock = threading.Lock()


@lru_cache(maxsize=None)
def _build(space: str, order: int) -> ReferenceBasis:
    _check_order(space, order)
    mono = Monomials(order)
    ncomp = _NCOMP[space]
    nprime = ncomp * len(mono)
    prime = np.eye(nprime).reshape(nprime, ncomp, len(mono))
    groups = local_functionals(space, order)
    rows = []
    for g in groups:
        vals = _tabulate(space, prime, mono.eval(g.points.reshape(-1, 3)))
        vals = vals.reshape(g.points.shape[:2] + vals.shape[1:])
        rows.append(g.contract(vals))
    vdm = np.vstack(rows)
    if vdm.shape[0] != nprime:
        raise UnisolvenceError(f"{space} order {order}: {vdm.shape[0]} functionals for a space of dimension {nprime}")
    cond = float(np.linalg.cond(vdm))
    if not np.isfinite(cond) or cond > 1e12:
        raise UnisolvenceError(f"{space} order {order}: DOF-Vandermonde matrix is singular (cond {cond:.3e})")
    inv = np.linalg.inv(vdm)
    coeffs = inv.T.reshape(nprime, ncomp, len(mono))
    return ReferenceBasis(space, order, coeffs, _descriptors(groups), cond)


def build_basis(space: str, order: int) -> ReferenceBasis:
    with _build_lock:
        return _build(space, order)


def build_sigma_basis(k: int) -> ReferenceBasis:
    return build_basis(SIGMA, k)


def build_v_basis(k: int) -> ReferenceBasis:
    return build_basis(V, k)


def build_w_basis(order: int) -> ReferenceBasis:
    return build_basis(W, order)


@lru_cache(maxsize=None)
def _transform_matrix(space: str, order: int, ranks: tuple[int, ...]) -> np.ndarray:
    basis = build_basis(space, order)
    G = basis.functional_matrix(local_functionals(space, order, ranks))
    return np.linalg.inv(G)


def space_dimension(space: str, order: int) -> int:
    return _NCOMP[space] * dim_p(order)
