import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdnns.mesh import REF_VERTICES, element_transform
from tdnns.reference import SIGMA, V, build_basis
from tdnns.transform import push_sigma, push_v, push_w

from conftest import tagged

finite = st.floats(-10, 10, allow_nan=False)


def test_identity_maps():
    I = np.eye(3)
    g = np.array([1.0, -2.0, 0.5])
    pw = push_w(3.0, g, I)
    assert pw.value == 3.0 and np.array_equal(pw.derivative, g)
    e = np.array([[1.0, 2, 0], [2, 0, 1], [0, 1, 3]])
    pv = push_v(g, I, strain_hat=e, curl_hat=g)
    assert np.allclose(pv.value, g) and np.allclose(pv.derivative, e) and np.allclose(pv.curl, g)
    assert np.allclose(push_sigma(e, I).value, e)


@given(st.floats(0.1, 10))
@settings(max_examples=20, deadline=None)
def test_scaling_gradient(s):
    g = np.array([1.0, 2.0, 3.0])
    assert np.allclose(push_w(0.0, g, s * np.eye(3)).derivative, g / s)


def test_barycentric_gradient_under_doubling():
    # the barycentric coordinate 1 - x - y - z has reference gradient (-1, -1, -1)
    got = push_w(0.0, np.array([-1.0, -1.0, -1.0]), 2 * np.eye(3)).derivative
    assert np.allclose(got, [-0.5, -0.5, -0.5])


def test_constant_vector_under_doubling():
    pv = push_v(np.array([1.0, 0, 0]), 2 * np.eye(3), strain_hat=np.zeros((3, 3)))
    assert np.allclose(pv.value, [0.5, 0, 0])
    assert np.allclose(pv.derivative, 0)


def test_stress_under_doubling():
    t = np.arange(9.0).reshape(3, 3)
    t = t + t.T
    assert np.allclose(push_sigma(t, 2 * np.eye(3)).value, t / 16)


def test_transform_object_accepted():
    m = tagged(2 * REF_VERTICES, [[0, 1, 2, 3]])
    xf = element_transform(m, 0)
    assert np.allclose(push_sigma(np.eye(3), xf).value, np.eye(3) / 16)


@given(arrays(float, (3, 3), elements=st.floats(-2, 2)), arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))
@settings(max_examples=40, deadline=None)
def test_nn_and_tangential_invariants(A, a, b):
    F = A + 4 * np.eye(3)
    J = np.linalg.det(F)
    if J < 0.5:
        return
    # reference normal -> physical normal: n ~ F^{-T} n_hat
    n_hat = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    n = np.linalg.solve(F.T, n_hat)
    scale = np.linalg.norm(n)
    n /= scale
    tau_hat = np.outer(a, a) + np.eye(3)
    tau = push_sigma(tau_hat, F).value
    # tau_nn J_F-weighted areas: J_F = J * |F^{-T} n_hat|
    jf = J * scale
    assert n @ tau @ n * jf**2 == pytest.approx(n_hat @ tau_hat @ n_hat * 1.0, rel=1e-9, abs=1e-9)
    # tangential component along a mapped edge is the reference one
    t_hat = b if np.linalg.norm(b) > 1e-3 else np.array([1.0, 0, 0])
    v_hat = a
    v = push_v(v_hat, F).value
    assert v @ (F @ t_hat) == pytest.approx(v_hat @ t_hat, rel=1e-9, abs=1e-9)


def test_batched_matches_single():
    rng = np.random.default_rng(0)
    Fs = np.eye(3) + 0.2 * rng.standard_normal((4, 3, 3))
    tab = build_basis(SIGMA, 1).tabulate(rng.random((5, 3)) / 3)
    batch = push_sigma(tab, Fs).value
    for c in range(4):
        assert np.allclose(batch[c], push_sigma(tab, Fs[c]).value)
    vt = build_basis(V, 1).tabulate(rng.random((5, 3)) / 3)
    vb = push_v(vt, Fs).value
    for c in range(4):
        assert np.allclose(vb[c], push_v(vt, Fs[c]).value)
