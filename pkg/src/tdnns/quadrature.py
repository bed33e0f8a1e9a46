"""Collapsed-coordinate Gauss rules on the reference simplices.

Rules are built as conical products of Gauss-Jacobi rules, which gives any
exactness degree without tabulated data. The reference tetrahedron is
``{x_i >= 0, x_1 + x_2 + x_3 <= 1}`` (volume 1/6) and the reference triangle
``{s, t >= 0, s + t <= 1}`` (area 1/2).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 24


@dataclass(frozen=True)
class QuadRule:
    """Quadrature rule on a reference simplex.

    ``points`` holds Cartesian reference coordinates, ``barycentric`` the
    same points in barycentric form ``(lambda_0, ..., lambda_d)`` with
    ``lambda_0 = 1 - sum(x)``.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        return np.column_stack([1.0 - self.points.sum(axis=1), self.points])

    def __len__(self) -> int:
        return len(self.weights)


def _check_degree(degree: int) -> None:
    if not isinstance(degree, (int, np.integer)) or degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree!r} (0..{MAX_DEGREE})")


def _jacobi01(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi on [0, 1] for the weight (1 - x)^alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def line_rule(degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1]."""
    _check_degree(degree)
    n = degree // 2 + 1
    x, w = _jacobi01(n, 0.0)
    return QuadRule(x[:, None], w, degree)


@lru_cache(maxsize=None)
def tri_rule(degree: int) -> QuadRule:
    """Rule on the reference triangle, exact for total degree ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    a, wa = _jacobi01(n, 1.0)
    b, wb = _jacobi01(n, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    s = A
    t = B * (1.0 - A)
    w = np.outer(wa, wb)
    pts = np.column_stack([s.ravel(), t.ravel()])
    return QuadRule(pts, w.ravel(), degree)


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> QuadRule:
    """Rule on the reference tetrahedron, exact for total degree ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    a, wa = _jacobi01(n, 2.0)
    b, wb = _jacobi01(n, 1.0)
    c, wc = _jacobi01(n, 0.0)
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    x = A
    y = B * (1.0 - A)
    z = C * (1.0 - A) * (1.0 - B)
    w = wa[:, None, None] * wb[None, :, None] * wc[None, None, :]
    pts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return QuadRule(pts, w.ravel(), degree)
