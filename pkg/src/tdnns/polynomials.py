"""Monomial prime bases and orthonormal moment polynomials."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .quadrature import tet_rule, tri_rule


def exponents(degree: int, dim: int) -> np.ndarray:
    """All exponent tuples of total degree <= ``degree``, graded order."""
    out = []
    for d in range(degree + 1):
        for e in itertools.product(range(d + 1), repeat=dim):
            if sum(e) == d:
                out.append(e)
    # graded, then reverse-lexicographic inside a grade
    out = sorted(out, key=lambda e: (sum(e), tuple(-x for x in e)))
    return np.array(out, dtype=np.int64).reshape(-1, dim)


def dim_p(degree: int, dim: int = 3) -> int:
    if degree < 0:
        return 0
    out = 1
    for i in range(1, dim + 1):
        out = out * (degree + i) // i
    return out


class Monomials:
    """Monomials ``x^a y^b z^c`` with ``a + b + c <= degree``."""

    def __init__(self, degree: int, dim: int = 3):
        self.degree = degree
        self.dim = dim
        self.exps = exponents(degree, dim)

    def __len__(self) -> int:
        return len(self.exps)

    def _powers(self, x: np.ndarray, shift: np.ndarray) -> np.ndarray:
        e = self.exps[None, :, :] - shift[None, None, :]
        ok = np.all(e >= 0, axis=2)
        e = np.maximum(e, 0)
        vals = np.prod(x[:, None, :] ** e, axis=2)
        return np.where(ok, vals, 0.0)

    def eval(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._powers(x, np.zeros(self.dim, dtype=np.int64))

    def derivative(self, x, alpha) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha = np.asarray(alpha, dtype=np.int64)
        coef = np.ones(len(self.exps))
        for d in range(self.dim):
            for j in range(alpha[d]):
                coef = coef * (self.exps[:, d] - j)
        return coef[None, :] * self._powers(x, alpha)

    def grad(self, x) -> np.ndarray:
        """Array ``(npts, nmono, dim)``."""
        eye = np.eye(self.dim, dtype=np.int64)
        return np.stack([self.derivative(x, eye[d]) for d in range(self.dim)], axis=2)

    def hessian(self, x) -> np.ndarray:
        """Array ``(npts, nmono, dim, dim)``."""
        eye = np.eye(self.dim, dtype=np.int64)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), len(self.exps), self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                d = self.derivative(x, eye[i] + eye[j])
                out[:, :, i, j] = d
                out[:, :, j, i] = d
        return out


def legendre01(degree: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre polynomials on [0, 1]; shape ``(degree+1, len(s))``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros((degree + 1, len(s)))
    for j in range(degree + 1):
        c = np.zeros(j + 1)
        c[j] = 1.0
        out[j] = np.sqrt(2 * j + 1) * legendre.legval(2.0 * s - 1.0, c)
    return out


@lru_cache(maxsize=None)
def _ortho_matrix(degree: int, dim: int) -> np.ndarray:
    mono = Monomials(degree, dim)
    rule = tri_rule(2 * degree) if dim == 2 else tet_rule(2 * degree)
    P = mono.eval(rule.points)
    w = rule.weights / rule.weights.sum()
    G = (P * w[:, None]).T @ P
    L = np.linalg.cholesky(G)
    return np.linalg.inv(L)


def orthonormal(degree: int, pts: np.ndarray) -> np.ndarray:
    """Orthonormal basis of P^degree on the reference triangle (2 columns)
    or tetrahedron (3 columns) under the normalized measure.

    Returns ``(dim P^degree, npts)``; empty for negative degree.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    dim = pts.shape[1]
    if degree < 0:
        return np.zeros((0, len(pts)))
    M = _ortho_matrix(degree, dim)
    return M @ Monomials(degree, dim).eval(pts).T
