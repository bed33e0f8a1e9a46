from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from tdnns.assembly import (
    MaterialError,
    MaterialLaw,
    assemble_A,
    assemble_B,
    assemble_rhs,
    assemble_system,
    essential_values,
    gradient_matrix,
    write_coo,
)
from tdnns.interpolation import interpolate_sigma, interpolate_v
from tdnns.mesh import DIRICHLET, NEUMANN, REF_VERTICES
from tdnns.norms import gradient_pairing_direct
from tdnns.quadrature import tet_rule, tri_rule
from tdnns.reference import SIGMA, V, W
from tdnns.space import FESpace, locate_cells

from conftest import cube, tagged

IDENTITY = lambda X: np.broadcast_to(np.eye(3), (len(X), 3, 3)).copy()


def boundary_face_points(mesh, faces, degree=6):
    """Physical quadrature points, weights (area-scaled) and outward normals."""
    r = tri_rule(degree)
    tri = mesh.vertices[mesh.faces[faces]]
    X = tri[:, :1] + np.einsum("qk,fka->fqa", r.points, tri[:, 1:] - tri[:, :1])
    area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    return X, 2 * area[:, None] * r.weights[None], mesh.face_normals[faces]


def test_material_validation():
    m = MaterialLaw(1.0, 0.3)
    assert m.lam == pytest.approx(0.3 / (1.3 * 0.4))
    assert m.mu == pytest.approx(1 / 2.6)
    for E, nu in [(0, 0.3), (-1, 0.3), (1, 0.5), (1, -1.0)]:
        with pytest.raises(MaterialError):
            MaterialLaw(E, nu)


@given(st.floats(0.1, 100), st.floats(-0.9, 0.45))
@settings(max_examples=30, deadline=None)
def test_compliance_inverts_stiffness(E, nu):
    m = MaterialLaw(E, nu)
    e = np.array([[1.0, 0.2, -0.3], [0.2, 2.0, 0.5], [-0.3, 0.5, -1.0]])
    assert np.allclose(m.compliance(m.stiffness(e)), e)


def test_identity_compliance_energy_on_reference_cell():
    mesh = tagged(REF_VERTICES, [[0, 1, 2, 3]])
    S = FESpace(mesh, SIGMA, 1)
    c = interpolate_sigma(IDENTITY, S)
    for E, nu in [(1.0, 0.3), (2.5, 0.1)]:
        A = assemble_A(S, MaterialLaw(E, nu))
        assert c @ A @ c == pytest.approx(3 * (1 - 2 * nu) / E / 6, rel=1e-12)


def test_E_scaling():
    S = FESpace(cube(1), SIGMA, 2)
    A1 = assemble_A(S, MaterialLaw(1.0, 0.25)).toarray()
    A10 = assemble_A(S, MaterialLaw(10.0, 0.25)).toarray()
    assert np.allclose(A10 * 10, A1, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("k", [1, 2])
def test_A_symmetric_psd(k):
    A = assemble_A(FESpace(cube(1), SIGMA, k), MaterialLaw()).toarray()
    assert np.abs(A - A.T).max() < 1e-14
    ev = np.linalg.eigvalsh(A)
    assert ev[0] >= -1e-12 * ev[-1]


def test_identity_stress_annihilates_all_displacements():
    # b(I, v) = sum_T int_{dT} v.n (by parts, eps(v) = 0 for the divergence part)
    # vanishes for every v since div I = 0 and I has no tangential-normal part
    mesh = cube(2, ("x0",))
    S, Vs = FESpace(mesh, SIGMA, 1), FESpace(mesh, V, 1)
    c = interpolate_sigma(IDENTITY, S)
    B = assemble_B(S, Vs)
    assert np.abs(c @ B).max() < 1e-13
    e1 = interpolate_v(lambda X: np.tile([1.0, 0, 0], (len(X), 1)), Vs)
    assert c @ B @ e1 == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_gradient_columns_match_direct_route(k, rng):
    mesh = cube(2, ("x0", "y1"))
    S, Vs, Ws = FESpace(mesh, SIGMA, k), FESpace(mesh, V, k), FESpace(mesh, W, k + 1)
    c = rng.standard_normal(S.ndofs)
    via_B = (assemble_B(S, Vs) @ gradient_matrix(Vs, Ws)).T @ c
    direct = gradient_pairing_direct(S, Ws, coef=-c, degree=2 * k + 2)
    assert np.abs(via_B - direct).max() < 1e-11 * max(1.0, np.abs(direct).max())


X_ = sympy.symbols("x y z")


def _random_poly(rng, k):
    from itertools import product

    terms = [X_[0] ** a * X_[1] ** b * X_[2] ** c for a, b, c in product(range(k + 1), repeat=3) if a + b + c <= k]
    return sum(sympy.Rational(int(rng.integers(-5, 6)), 4) * t for t in terms)


@pytest.mark.parametrize("k", [1, 2])
def test_b_equals_divergence_route_on_single_cell(k, rng):
    v = np.array([[0.1, 0.0, 0.2], [1.2, 0.1, 0.0], [0.3, 0.9, 0.1], [0.2, 0.3, 1.1]])
    mesh = tagged(v, [[0, 1, 2, 3]])
    S, Vs = FESpace(mesh, SIGMA, k), FESpace(mesh, V, k)
    tau = sympy.Matrix(3, 3, lambda i, j: 0)
    for i in range(3):
        for j in range(i, 3):
            tau[i, j] = tau[j, i] = _random_poly(rng, k)
    u = sympy.Matrix([_random_poly(rng, k) for _ in range(3)])
    div = sympy.Matrix([sum(sympy.diff(tau[i, j], X_[j]) for j in range(3)) for i in range(3)])
    f_tau = sympy.lambdify(X_, tau, "numpy")
    f_u = sympy.lambdify(X_, u, "numpy")
    f_div = sympy.lambdify(X_, div, "numpy")

    def ev(f, X, shape):
        return np.stack([np.broadcast_to(np.asarray(f(*x), dtype=float), shape) for x in X])

    # volume part
    r = tet_rule(2 * k)
    F = mesh.jacobians[0]
    X = mesh.origins[0] + r.points @ F.T
    J = mesh.dets[0]
    vol = J * np.sum(r.weights * np.einsum("qa,qa->q", ev(f_div, X, (3, 1))[..., 0], ev(f_u, X, (3, 1))[..., 0]))
    # tangential-normal boundary part
    bnd = 0.0
    for m in range(4):
        f = mesh.cell_faces[0, m]
        Xf, ds, _ = boundary_face_points(mesh, [f], 2 * k)
        n = mesh.cell_face_normals[0, m]
        t = ev(f_tau, Xf[0], (3, 3)) @ n
        t_t = t - np.outer(t @ n, n)
        uu = ev(f_u, Xf[0], (3, 1))[..., 0]
        bnd += np.sum(ds[0] * np.einsum("qa,qa->q", t_t, uu))
    expected = vol - bnd

    cs = interpolate_sigma(lambda P: ev(f_tau, P, (3, 3)), S)
    cu = interpolate_v(lambda P: ev(f_u, P, (3, 1))[..., 0], Vs)
    got = cs @ assemble_B(S, Vs) @ cu
    assert got == pytest.approx(expected, rel=1e-11, abs=1e-11)


def test_zero_data_zero_rhs():
    mesh = cube(2, ("x0", "z1"))
    S, Vs = FESpace(mesh, SIGMA, 1), FESpace(mesh, V, 1)
    zero3 = lambda X: np.zeros((len(X), 3))
    case = SimpleNamespace(f=zero3, u_D=zero3, t_N=lambda X, n: np.zeros((len(X), 3)))
    rs, rv = assemble_rhs(S, Vs, case)
    assert not rs.any() and not rv.any()


def test_tangential_traction_rhs_matches_face_quadrature():
    mesh = cube(2, ("x0", "y0", "y1", "z0", "z1"))  # x = 1 is the only Neumann face
    S, Vs = FESpace(mesh, SIGMA, 1), FESpace(mesh, V, 1)
    t = np.array([0.0, 0.7, -0.4])
    case = SimpleNamespace(f=None, u_D=lambda X: np.zeros((len(X), 3)), t_N=lambda X, n: np.tile(t, (len(X), 1)))
    _, rv = assemble_rhs(S, Vs, case)
    faces = mesh.boundary_faces(NEUMANN)
    X, ds, _ = boundary_face_points(mesh, faces, 4)
    # the load is tangential to the face, so t_t = t
    Xf = X.reshape(-1, 3) - 1e-13 * np.array([1.0, 0, 0])
    cells, xh = locate_cells(mesh, Xf)
    expected = np.zeros(Vs.ndofs)
    for j in range(Vs.ndofs):
        e = np.zeros(Vs.ndofs)
        e[j] = 1.0
        vals = Vs.evaluate_points(e, xh[:, None], cells)[:, 0]
        expected[j] = -np.sum(ds.ravel() * (vals @ t))
    assert np.abs(rv - expected).max() < 1e-12


def test_dirichlet_rhs_against_identity_candidate():
    mesh = cube(2, ("x1", "y0", "z1"))
    S, Vs = FESpace(mesh, SIGMA, 1), FESpace(mesh, V, 1)
    case = SimpleNamespace(f=None, u_D=lambda X: X.copy(), t_N=lambda X, n: np.zeros((len(X), 3)))
    rs, _ = assemble_rhs(S, Vs, case)
    c = interpolate_sigma(IDENTITY, S)
    # x.n = 1 on x=1 and z=1, 0 on y=0
    assert c @ rs == pytest.approx(2.0, rel=1e-12)


def test_zero_essential_data_keeps_masked_system():
    mesh = cube(1, ("x0", "y0"))
    S, Vs = FESpace(mesh, SIGMA, 1), FESpace(mesh, V, 1)
    sysm = assemble_system(S, Vs, MaterialLaw())
    K, r = sysm.reduced()
    full = sysm.matrix()
    free = sysm.free
    assert (K - full[free][:, free]).nnz == 0
    assert not r.any()


def test_linear_dirichlet_values_reproduce_tangential_trace():
    mesh = cube(2, ("x0", "y1", "z0"))
    S, Vs = FESpace(mesh, SIGMA, 1), FESpace(mesh, V, 1)
    A = np.array([[1.0, 2, -1], [0.5, 0, 3], [-2, 1, 1]])
    uD = lambda X: X @ A.T + np.array([0.1, -0.2, 0.3])
    case = SimpleNamespace(f=None, u_D=uD, t_N=lambda X, n: np.zeros((len(X), 3)))
    _, vel = essential_values(S, Vs, case)
    faces = mesh.boundary_faces(DIRICHLET)
    X, _, n = boundary_face_points(mesh, faces, 3)
    cells = mesh.face_cells[faces, 0]
    xh = np.einsum("cij,cqj->cqi", mesh.inv_jacobians[cells], X - mesh.origins[cells][:, None])
    vals = Vs.evaluate_points(vel, xh, cells)
    diff = vals - uD(X.reshape(-1, 3)).reshape(X.shape)
    tang = diff - np.einsum("fqa,fa->fq", diff, n)[..., None] * n[:, None]
    assert np.abs(tang).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2])
def test_normal_traction_values_reproduce_nn_trace(k):
    mesh = cube(2, ("x0", "y1", "z0"))
    S, Vs = FESpace(mesh, SIGMA, k), FESpace(mesh, V, k)
    g = np.array([0.3, -1.2, 2.0])
    case = SimpleNamespace(f=None, u_D=lambda X: np.zeros((len(X), 3)), t_N=lambda X, n: np.tile(g, (len(X), 1)))
    sig, _ = essential_values(S, Vs, case)
    faces = mesh.boundary_faces(NEUMANN)
    X, _, n = boundary_face_points(mesh, faces, 4)
    cells = mesh.face_cells[faces, 0]
    xh = np.einsum("cij,cqj->cqi", mesh.inv_jacobians[cells], X - mesh.origins[cells][:, None])
    vals = S.evaluate_points(sig, xh, cells)
    nn = np.einsum("fqij,fi,fj->fq", vals, n, n)
    assert np.abs(nn - (n @ g)[:, None]).max() < 1e-12


def test_coo_dump(tmp_path):
    M = sp.csr_matrix(np.array([[1.0, 0], [2.5, -3]]))
    write_coo(M, tmp_path / "m.txt")
    assert (tmp_path / "m.txt").read_text().split("\n")[:3] == ["0 0 1", "1 0 2.5", "1 1 -3"]


def test_system_is_symmetric():
    sysm = assemble_system(FESpace(cube(1), SIGMA, 2), FESpace(cube(1), V, 2), MaterialLaw())
    M = sysm.matrix()
    assert abs(M - M.T).max() < 1e-14
