import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdnns.assembly import gradient_matrix
from tdnns.interpolation import (
    FieldFunction,
    _solve,
    interpolate,
    interpolate_sigma,
    interpolate_v,
    interpolate_w,
    sigma_dofs_direct,
)
from tdnns.norms import DualNorm
from tdnns.reference import SIGMA, V, W, UnisolvenceError
from tdnns.space import FESpace, discrete_field

from conftest import cube, space


def random_points_per_cell(mesh, rng, npts=4):
    return rng.dirichlet(np.ones(4), npts)[:, 1:]


def max_error(S, coef, f, rng):
    x = random_points_per_cell(S.mesh, rng)
    got = S.evaluate(coef, x)
    X = S.mesh.map_points(x)
    want = np.asarray(f(X.reshape(-1, 3))).reshape(got.shape)
    return np.abs(got - want).max()


def poly_scalar(deg, coeffs):
    def f(X):
        x, y, z = X.T
        return coeffs[0] + coeffs[1] * x * y ** (deg - 1) + coeffs[2] * z**deg + coeffs[3] * x ** (deg - 1) * z
    return f


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
@settings(max_examples=10, deadline=None)
def test_w_reproduces_polynomials(c):
    rng = np.random.default_rng(0)
    for order in (2, 3):
        S = space(2, W, order)
        f = poly_scalar(order, c)
        assert max_error(S, interpolate_w(f, S), f, rng) < 1e-12 * max(1, max(map(abs, c)))


def test_w_constant_exact():
    S = space(2, W, 2)
    c = interpolate_w(lambda X: np.full(len(X), 2.5), S)
    assert max_error(S, c, lambda X: np.full(len(X), 2.5), np.random.default_rng(1)) < 1e-14


@pytest.mark.parametrize("k", [1, 2])
def test_v_reproduces_polynomials(k, rng):
    S = space(2, V, k)
    A = rng.standard_normal((3, 4))

    def f(X):
        x, y, z = X.T
        basis = np.stack([np.ones_like(x), x**k, y ** (k - 1) * z, x * z ** (k - 1)], axis=1)
        return basis @ A.T

    assert max_error(S, interpolate_v(f, S), f, rng) < 1e-12


@pytest.mark.parametrize("k", [1, 2])
def test_commuting_diagram(k):
    mesh = cube(2, ("x0", "y1"))
    Vs, Ws = FESpace(mesh, V, k), FESpace(mesh, W, k + 1)
    w = lambda X: X[:, 0] ** 2 * X[:, 1] + X[:, 2] ** 3
    grad = lambda X: np.stack([2 * X[:, 0] * X[:, 1], X[:, 0] ** 2, 3 * X[:, 2] ** 2], axis=1)
    lhs = interpolate_v(grad, Vs)
    rhs = gradient_matrix(Vs, Ws) @ interpolate_w(w, Ws)
    assert np.abs(lhs - rhs).max() < 1e-11


@pytest.mark.parametrize("k", [1, 2])
def test_sigma_reproduces_discrete_members(k, rng):
    S = FESpace(cube(1, ("x0",)), SIGMA, k)
    for _ in range(5):
        c = rng.standard_normal(S.ndofs)
        assert np.abs(interpolate_sigma(discrete_field(S, c), S) - c).max() < 1e-10


def test_sigma_identity_exact():
    S = space(2, SIGMA, 1)
    f = lambda X: np.broadcast_to(np.eye(3), (len(X), 3, 3))
    c = interpolate_sigma(f, S)
    assert max_error(S, c, f, np.random.default_rng(0)) < 1e-13


def poly_stress(X):
    x, y, z = X.T
    out = np.empty((len(X), 3, 3))
    out[:, 0, 0] = x * y + 1
    out[:, 1, 1] = z**2 - x
    out[:, 2, 2] = y * z
    out[:, 0, 1] = out[:, 1, 0] = x**2
    out[:, 0, 2] = out[:, 2, 0] = y - z
    out[:, 1, 2] = out[:, 2, 1] = x * z
    return out


@pytest.mark.parametrize("k", [1, 2])
def test_sigma_two_routes_agree(k):
    S = space(2, SIGMA, k, ("x0",))
    a = interpolate_sigma(poly_stress, S)
    b = sigma_dofs_direct(poly_stress, S)
    assert np.abs(a - b).max() < 1e-11 * np.abs(a).max()


def trig_stress(X):
    s = np.sin(np.pi * X)
    c = np.cos(np.pi * X)
    out = np.empty((len(X), 3, 3))
    out[:, 0, 0] = s[:, 0] * c[:, 1]
    out[:, 1, 1] = s[:, 1] * s[:, 2]
    out[:, 2, 2] = c[:, 2] + X[:, 0]
    out[:, 0, 1] = out[:, 1, 0] = s[:, 2] * c[:, 0]
    out[:, 0, 2] = out[:, 2, 0] = s[:, 0] * s[:, 1] * s[:, 2]
    out[:, 1, 2] = out[:, 2, 1] = c[:, 1]
    return out


def test_orthogonality_to_gradients():
    S, Vs = space(2, SIGMA, 1), space(2, V, 1)
    dual = DualNorm(S, Vs)
    deg = 16
    c = interpolate_sigma(trig_stress, S, degree=deg)
    g = dual.pairing(c, trig_stress, degree=deg)
    assert dual.value(g) < 1e-10


def test_dispatch():
    f3 = lambda X: X.copy()
    assert np.array_equal(interpolate(f3, space(1, V, 1)), interpolate_v(f3, space(1, V, 1)))
    with pytest.raises(ValueError):
        interpolate_w(f3, space(1, V, 1))
    with pytest.raises(ValueError):
        interpolate_sigma(f3, space(1, V, 1))


def test_singular_local_system_raises():
    with pytest.raises(UnisolvenceError):
        _solve(np.zeros((2, 3, 3)), np.ones((2, 3)), "cell")


def test_field_function_call():
    f = FieldFunction(lambda X: X[:, 0], lambda X: np.tile([1.0, 0, 0], (len(X), 1)))
    assert f(np.ones((2, 3))).tolist() == [1.0, 1.0]
