from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdnns.mesh import LOCAL_FACES, REF_FACE_NORMALS, REF_VERTICES
from tdnns.quadrature import tri_rule
from tdnns.reference import (
    SIGMA,
    V,
    W,
    SymTensor3,
    build_basis,
    local_functionals,
    reference_tensor_array,
    reference_tensors,
    space_dimension,
)

# printed reference tensors, copied independently of the package
PRINTED = np.array(
    [
        [[-6, 1, 1], [1, 0, 1], [1, 1, 0]],
        [[0, 1, 1], [1, -6, 1], [1, 1, 0]],
        [[0, 1, 1], [1, 0, 1], [1, 1, -6]],
        [[0, 1, 1], [1, 0, 1], [1, 1, 0]],
        [[0, 0, -1], [0, 0, 1], [-1, 1, 0]],
        [[0, -1, 0], [-1, 0, 1], [0, 1, 0]],
    ]
)
FACE_NORMALS_EXACT = [(-1, 0, 0), (0, -1, 0), (0, 0, -1), (1, 1, 1)]


def test_tensors_match_printed_values():
    assert np.array_equal(reference_tensor_array(), PRINTED)
    assert len(reference_tensors()) == 6
    for t, p in zip(reference_tensors(), PRINTED):
        assert np.array_equal(t.full(), p)


def test_face_and_interior_tensors_orthogonal_exactly():
    S = [[[Fraction(int(x)) for x in row] for row in m] for m in reference_tensor_array()]
    for m in range(4):
        for n in range(4, 6):
            assert sum(S[m][i][j] * S[n][i][j] for i in range(3) for j in range(3)) == 0


def test_nn_trace_pattern():
    # n^T S n with unnormalised normals, divided by |n|^2, in exact arithmetic
    S = reference_tensor_array()
    c = []
    for m in range(4):
        row = []
        for i, n in enumerate(FACE_NORMALS_EXACT):
            n = np.array(n)
            row.append(Fraction(int(n @ S[m] @ n), int(n @ n)))
        c.append(row[m])
        assert all(row[i] == 0 for i in range(4) if i != m)
    assert c == [-6, -6, -6, 2]
    for n in range(4, 6):
        for nf in FACE_NORMALS_EXACT:
            assert np.array(nf) @ S[n] @ np.array(nf) == 0


def test_symtensor_roundtrip():
    a = np.array([[1.0, 2, 3], [2, 4, 5], [3, 5, 6]])
    assert np.array_equal(SymTensor3.from_full(a).full(), a)


@pytest.mark.parametrize(
    "space, order, dim",
    [(SIGMA, 1, 24), (SIGMA, 2, 60), (V, 1, 12), (V, 2, 30), (W, 2, 10), (W, 3, 20)],
)
def test_dimensions(space, order, dim):
    b = build_basis(space, order)
    assert b.size == dim == space_dimension(space, order)


@pytest.mark.parametrize("k, face, interior", [(1, 3, 12), (2, 6, 36)])
def test_sigma_dof_split(k, face, interior):
    b = build_basis(SIGMA, k)
    assert [len(b.entity_dofs(2, f)) for f in range(4)] == [face] * 4
    assert len(b.entity_dofs(3, 0)) == interior


def test_v_dof_split():
    b1 = build_basis(V, 1)
    assert [len(b1.entity_dofs(1, e)) for e in range(6)] == [2] * 6
    b2 = build_basis(V, 2)
    assert sum(len(b2.entity_dofs(1, e)) for e in range(6)) == 18
    rest = sum(len(b2.entity_dofs(2, f)) for f in range(4)) + len(b2.entity_dofs(3, 0))
    assert rest == 12


@pytest.mark.parametrize("space, order", [(SIGMA, 1), (SIGMA, 2), (V, 1), (V, 2), (W, 2), (W, 3)])
def test_basis_dual_to_functionals(space, order):
    b = build_basis(space, order)
    M = b.functional_matrix(local_functionals(space, order))
    assert np.abs(M - np.eye(b.size)).max() < 1e-10


@pytest.mark.parametrize("k", [1, 2])
def test_interior_stress_functions_have_zero_nn_trace(k):
    b = build_basis(SIGMA, k)
    inner = b.entity_dofs(3, 0)
    r = tri_rule(2 * k + 2)
    for m, (a, bb, c) in enumerate(LOCAL_FACES):
        v = REF_VERTICES
        pts = v[a] + r.points[:, :1] * (v[bb] - v[a]) + r.points[:, 1:] * (v[c] - v[a])
        tab = b.tabulate(pts)[:, inner]
        n = REF_FACE_NORMALS[m]
        assert np.abs(np.einsum("qsij,i,j->qs", tab, n, n)).max() < 1e-12


@pytest.mark.parametrize("k", [1, 2])
def test_w_gradients_in_v_span(k):
    bw, bv = build_basis(W, k + 1), build_basis(V, k)
    groups = local_functionals(V, k)
    coeffs = []
    for g in groups:
        gv = bw.tabulate_grad(g.points.reshape(-1, 3))
        coeffs.append(g.contract(gv.reshape(g.points.shape[:2] + gv.shape[1:])))
    C = np.vstack(coeffs)  # (nV, nW)
    x = np.random.default_rng(1).dirichlet(np.ones(4), 20)[:, 1:]
    lhs = np.einsum("qva,vw->qwa", bv.tabulate(x), C)
    assert np.abs(lhs - bw.tabulate_grad(x)).max() < 1e-11


@pytest.mark.parametrize("order", [2, 3])
def test_w_partition_of_unity(order):
    x = np.random.default_rng(2).dirichlet(np.ones(4), 30)[:, 1:]
    assert np.abs(build_basis(W, order).tabulate(x).sum(axis=1) - 1).max() < 1e-13


@given(arrays(float, 3, elements=st.floats(0.01, 0.3)))
@settings(max_examples=25, deadline=None)
def test_sigma_basis_symmetric(x):
    t = build_basis(SIGMA, 2).tabulate(x[None])
    assert np.array_equal(t, np.swapaxes(t, -1, -2))


def test_curl_of_gradient_vanishes():
    bw = build_basis(W, 3)
    x = np.random.default_rng(3).dirichlet(np.ones(4), 10)[:, 1:]
    H = bw.tabulate_hessian(x)
    assert np.abs(H - np.swapaxes(H, -1, -2)).max() < 1e-11


def test_unsupported_order():
    with pytest.raises(ValueError):
        build_basis(SIGMA, 3)
    with pytest.raises(ValueError):
        build_basis("Q", 1)
