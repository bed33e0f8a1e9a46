"""Closed-form manufactured solutions for linear elasticity on the unit cube."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy

from ..assembly import MaterialLaw
from ..interpolation import FieldFunction
from ..mesh import CUBE_FACES

_X = sympy.symbols("x y z")


class CaseError(ValueError):
    pass


def _lambdify(exprs, shape) -> Callable[[np.ndarray], np.ndarray]:
    flat = [sympy.sympify(e) for e in np.asarray(exprs, dtype=object).ravel()]
    funcs = [sympy.lambdify(_X, e, modules="numpy") for e in flat]

    def fn(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [np.broadcast_to(np.asarray(f(X[:, 0], X[:, 1], X[:, 2]), dtype=float), (len(X),)) for f in funcs]
        return np.stack(cols, axis=-1).reshape((len(X),) + tuple(shape))

    return fn


@dataclass(frozen=True)
class ManufacturedCase:
    """Displacement ``u``, stress ``sigma = C eps(u)``, load ``f = -div sigma``
    and boundary data on the unit cube."""

    name: str
    material: MaterialLaw
    dirichlet_spec: tuple[str, ...]
    u: Callable = field(repr=False)
    grad_u: Callable = field(repr=False)
    sigma: Callable = field(repr=False)
    f: Callable = field(repr=False)
    u_expr: tuple = field(repr=False, default=())

    @property
    def u_D(self):
        return self.u

    def t_N(self, X: np.ndarray, n: np.ndarray) -> np.ndarray:
        return np.einsum("qij,qj->qi", self.sigma(X), n)

    @property
    def displacement(self) -> FieldFunction:
        return FieldFunction(self.u, self.grad_u)

    @property
    def neumann_faces(self) -> tuple[str, ...]:
        return tuple(f for f in CUBE_FACES if f not in self.dirichlet_spec)

    def equilibrium_defect(self, n_points: int = 20, step: float = 1e-5, seed: int = 0) -> float:
        """Max relative mismatch of ``-div sigma`` (central differences) and ``f``."""
        rng = np.random.default_rng(seed)
        X = rng.uniform(0.1, 0.9, size=(n_points, 3))
        div = np.zeros((n_points, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            div += (self.sigma(X + e)[:, :, j] - self.sigma(X - e)[:, :, j]) / (2 * step)
        f = self.f(X)
        scale = max(1.0, float(np.abs(f).max()))
        return float(np.abs(-div - f).max() / scale)


def make_case(name: str, u_expr, material: MaterialLaw, dirichlet_spec, check: bool = True) -> ManufacturedCase:
    u = sympy.Matrix([sympy.sympify(e) for e in u_expr])
    grad = u.jacobian(sympy.Matrix(_X))
    eps = (grad + grad.T) / 2
    sig = material.lam * eps.trace() * sympy.eye(3) + 2 * material.mu * eps
    f = -sympy.Matrix([sum(sympy.diff(sig[i, j], _X[j]) for j in range(3)) for i in range(3)])
    sig = sympy.simplify(sig)
    f = sympy.simplify(f)
    case = ManufacturedCase(
        name=name,
        material=material,
        dirichlet_spec=tuple(dirichlet_spec),
        u=_lambdify(list(u), (3,)),
        grad_u=_lambdify(np.array(grad.tolist(), dtype=object), (3, 3)),
        sigma=_lambdify(np.array(sig.tolist(), dtype=object), (3, 3)),
        f=_lambdify(list(f), (3,)),
        u_expr=tuple(str(e) for e in u),
    )
    if check:
        defect = case.equilibrium_defect()
        if defect > 1e-3:
            raise CaseError(f"case {name}: equilibrium check failed (defect {defect:.3e})")
    return case


ALL_FACES = CUBE_FACES
MIXED_DIRICHLET = ("x0", "y0", "z0", "z1")

_DEFS = {
    "LINEAR": (("x + 2*y", "3*z", "x - y"), ALL_FACES),
    "TRIG": (("sin(pi*x)*sin(pi*y)*sin(pi*z)",) * 3, ALL_FACES),
    "MIXED": (("sin(pi*x)*sin(pi*y)*sin(pi*z)",) * 3, MIXED_DIRICHLET),
}


def case_names() -> tuple[str, ...]:
    return tuple(_DEFS)


def get_case(name: str, material: MaterialLaw | None = None, dirichlet_spec=None) -> ManufacturedCase:
    key = name.upper()
    if key not in _DEFS:
        raise CaseError(f"unknown case {name!r}; options: {', '.join(_DEFS)}")
    expr, spec = _DEFS[key]
    return make_case(key, expr, material or MaterialLaw(), spec if dirichlet_spec is None else dirichlet_spec)


def builtin_cases(material: MaterialLaw | None = None) -> dict[str, ManufacturedCase]:
    return {name: get_case(name, material) for name in _DEFS}
