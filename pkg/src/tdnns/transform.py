"""Conforming push-forwards from the reference tetrahedron.

All functions accept either a single Jacobian ``(3, 3)`` (or an
:class:`~tdnns.mesh.ElementTransform`) or a batch ``(ncells, 3, 3)``; with a
batch the result gains a leading cell axis. Reference tables may carry any
leading axes (typically ``(npts, nshape)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ElementTransform


@dataclass(frozen=True)
class PushedValue:
    value: np.ndarray
    derivative: np.ndarray | None = None
    curl: np.ndarray | None = None


def _jac(xf) -> np.ndarray:
    return xf.F if isinstance(xf, ElementTransform) else np.asarray(xf, dtype=float)


def _apply(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    if M.ndim == 2:
        return x @ M.T
    lead = x.shape[:-1]
    out = x.reshape(1, -1, 3) @ np.swapaxes(M, -1, -2)
    return out.reshape((M.shape[0],) + lead + (3,))


def _sandwich(L: np.ndarray, x: np.ndarray, R: np.ndarray) -> np.ndarray:
    # L x R^T on the last two axes of x
    if L.ndim == 2:
        return L @ x @ R.T
    lead = x.shape[:-2]
    xs = x.reshape((1, -1, 3, 3))
    out = L[:, None] @ xs @ np.swapaxes(R, -1, -2)[:, None]
    return out.reshape((L.shape[0],) + lead + (3, 3))


def _bcast(x: np.ndarray, F: np.ndarray) -> np.ndarray:
    if F.ndim == 2:
        return x
    return np.broadcast_to(x, (F.shape[0],) + x.shape)


def _scale(s, x: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return s.reshape(s.shape + (1,) * (x.ndim - s.ndim)) * x


def push_w(w_hat, grad_hat, xf) -> PushedValue:
    """Scalar H1 map: value unchanged, gradient ``F^{-T} grad_hat``."""
    F = _jac(xf)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    w = _bcast(np.asarray(w_hat, dtype=float), F)
    return PushedValue(w, _apply(FinvT, np.asarray(grad_hat, dtype=float)))


def push_v(v_hat, xf, strain_hat=None, curl_hat=None) -> PushedValue:
    """Covariant map: ``v = F^{-T} v_hat``, ``eps = F^{-T} eps_hat F^{-1}``,
    ``curl v = F curl_hat / J``."""
    F = _jac(xf)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    v = _apply(FinvT, np.asarray(v_hat, dtype=float))
    eps = None if strain_hat is None else _sandwich(FinvT, np.asarray(strain_hat, dtype=float), FinvT)
    curl = None
    if curl_hat is not None:
        J = np.linalg.det(F)
        curl = _scale(1.0 / J, _apply(F, np.asarray(curl_hat, dtype=float)))
    return PushedValue(v, eps, curl)


def push_sigma(tau_hat, xf) -> PushedValue:
    """Normal-normal preserving map ``tau = F tau_hat F^T / J^2``."""
    F = _jac(xf)
    J = np.linalg.det(F)
    tau = _sandwich(F, np.asarray(tau_hat, dtype=float), F)
    return PushedValue(_scale(1.0 / J**2, tau))
