"""Direct solution of the saddle-point system and discrete stability constants."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    SparseSymSystem,
    assemble_A,
    assemble_B,
    assemble_hcurl_gram,
    assemble_sigma_face_gram,
    assemble_sigma_mass,
    assemble_w_stiffness,
    gradient_matrix,
)
from .reference import W
from .space import FESpace

RESIDUAL_TOL = 1e-8
INERTIA_LIMIT = 3000
EIG_CAP = 4000


class SingularSystemError(RuntimeError):
    def __init__(self, message: str, inertia=None):
        super().__init__(message if inertia is None else f"{message}; inertia (+, -, 0) = {inertia}")
        self.inertia = inertia


class IllConditionedError(RuntimeError):
    pass


class StabilityCapError(ValueError):
    pass


@dataclass(frozen=True)
class SaddleSolution:
    sigma: np.ndarray
    u: np.ndarray
    residual_abs: float
    residual_rel: float
    inertia: tuple[int, int, int] | None = None
    n_sigma_free: int = 0
    n_v_free: int = 0


def inertia(M, tol: float = 1e-12) -> tuple[int, int, int]:
    """``(n_plus, n_minus, n_zero)`` of a symmetric matrix from its
    Bunch-Kaufman LDL^T factorization (Sylvester's law of inertia)."""
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return (0, 0, 0)
    _, d, _ = sla.ldl(M, lower=True, hermitian=True)
    ev = []
    i = 0
    n = len(d)
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            ev.extend(np.linalg.eigvalsh(d[i : i + 2, i : i + 2]))
            i += 2
        else:
            ev.append(d[i, i])
            i += 1
    ev = np.asarray(ev)
    scale = max(np.abs(ev).max(), 1e-300)
    zero = np.abs(ev) <= tol * scale
    return (int(np.sum((ev > 0) & ~zero)), int(np.sum((ev < 0) & ~zero)), int(np.sum(zero)))


def solve_saddle(system: SparseSymSystem, with_inertia: bool | None = None, residual_tol: float = RESIDUAL_TOL) -> SaddleSolution:
    """Factorize the free block system and solve.

    The relative residual is always checked; one step of iterative
    refinement is applied, and a residual above ``residual_tol`` raises.
    """
    K, r = system.reduced()
    n = K.shape[0]
    ns, nv = len(system.sigma_free), len(system.v_free)
    want_inertia = n <= INERTIA_LIMIT if with_inertia is None else with_inertia
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:
        inert = inertia(K) if n <= INERTIA_LIMIT else None
        raise SingularSystemError("factorization of the saddle-point matrix broke down", inert) from exc
    x = lu.solve(r)
    if not np.all(np.isfinite(x)):
        inert = inertia(K) if n <= INERTIA_LIMIT else None
        raise SingularSystemError("non-finite solution", inert)
    res = r - K @ x
    x += lu.solve(res)
    res = r - K @ x
    rnorm = float(np.linalg.norm(r))
    abs_res = float(np.linalg.norm(res))
    rel = abs_res / rnorm if rnorm > 0 else abs_res
    if rel > residual_tol:
        raise IllConditionedError(f"relative residual {rel:.3e} exceeds {residual_tol:.1e}")
    if rel > 1e-10:
        warnings.warn(f"saddle-point residual {rel:.3e} above 1e-10", RuntimeWarning, stacklevel=2)
    inert = inertia(K) if want_inertia else None
    sigma, u = system.expand(x)
    return SaddleSolution(sigma, u, abs_res, rel, inert, ns, nv)


# -- stability constants --------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    level: int
    h: float
    infsup_constant: float
    kernel_coercivity_constant: float
    continuity_constant: float
    kernel_dimension: int
    kernel_dual_max: float
    kernel_l2_ratio_min: float
    face_domination: float

    CSV_COLUMNS = ("level", "h", "infsup", "coercivity", "continuity", "kernel_dim", "face_domination")

    def csv_row(self) -> str:
        vals = (self.infsup_constant, self.kernel_coercivity_constant, self.continuity_constant)
        return ",".join(
            [str(self.level), f"{self.h:.12e}"]
            + [f"{v:.12e}" for v in vals]
            + [str(self.kernel_dimension), f"{self.face_domination:.12e}"]
        )


@dataclass(eq=False)
class StabilityMatrices:
    """Dense free-DOF matrices used by the eigenproblems."""

    A: np.ndarray
    B: np.ndarray
    M_l2: np.ndarray
    M_face: np.ndarray
    M_dual: np.ndarray
    N: np.ndarray
    G: np.ndarray
    K: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return self.M_l2 + self.M_face + self.M_dual


def stability_matrices(sigma_space: FESpace, v_space: FESpace, material, cap: int = EIG_CAP) -> StabilityMatrices:
    sf = sigma_space.dofmap.free
    vf = v_space.dofmap.free
    if len(sf) + len(vf) > cap:
        raise StabilityCapError(
            f"{len(sf) + len(vf)} free DOFs exceed the dense eigensolve cap of {cap}; use a coarser mesh"
        )
    w_space = FESpace(sigma_space.mesh, W, v_space.order + 1)
    wf = w_space.dofmap.free
    B = assemble_B(sigma_space, v_space)
    D = gradient_matrix(v_space, w_space)
    K = assemble_w_stiffness(w_space)[wf][:, wf].toarray()
    G = (B[sf] @ D[:, wf]).toarray()
    M_dual = G @ np.linalg.solve(K, G.T)
    M_dual = 0.5 * (M_dual + M_dual.T)
    return StabilityMatrices(
        A=assemble_A(sigma_space, material)[sf][:, sf].toarray(),
        B=B[sf][:, vf].toarray(),
        M_l2=assemble_sigma_mass(sigma_space)[sf][:, sf].toarray(),
        M_face=assemble_sigma_face_gram(sigma_space)[sf][:, sf].toarray(),
        M_dual=M_dual,
        N=assemble_hcurl_gram(v_space)[vf][:, vf].toarray(),
        G=G,
        K=K,
    )


def kernel_basis(B: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of ``{tau : B^T tau = 0}`` via the SVD of ``B^T``."""
    if B.size == 0:
        return np.eye(B.shape[0])
    _, s, vt = np.linalg.svd(B.T, full_matrices=True)
    tol = rel_tol * (s[0] if len(s) else 0.0)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


def stability_constants(sigma_space: FESpace, v_space: FESpace, material, level: int = 0, cap: int = EIG_CAP) -> StabilityReport:
    """Discrete inf-sup, kernel coercivity and continuity constants.

    ``inf-sup^2`` and ``continuity^2`` are the extreme eigenvalues of
    ``B^T M^{-1} B x = lambda N x``; coercivity is the smallest eigenvalue
    of ``Z^T A Z y = lambda Z^T M Z y`` on the kernel basis ``Z``.
    """
    mats = stability_matrices(sigma_space, v_space, material, cap)
    M = mats.M
    S = mats.B.T @ np.linalg.solve(M, mats.B)
    S = 0.5 * (S + S.T)
    lam = sla.eigh(S, mats.N, eigvals_only=True)
    Z = kernel_basis(mats.B)
    if Z.shape[1]:
        mu = sla.eigh(Z.T @ mats.A @ Z, Z.T @ M @ Z, eigvals_only=True)
        coerc = float(mu[0])
        # dual term from g = G^T z directly; Z^T M_dual Z would lose half the digits
        g = mats.G.T @ Z
        dual = np.sqrt(np.maximum(np.sum(g * np.linalg.solve(mats.K, g), axis=0), 0.0))
        l2 = np.sqrt(np.einsum("ik,ij,jk->k", Z, mats.M_l2, Z))
        kernel_dual = float(np.max(dual / l2))
        ratio = float(sla.eigh(Z.T @ mats.A @ Z, Z.T @ mats.M_l2 @ Z, eigvals_only=True)[0])
    else:
        coerc, kernel_dual, ratio = float("inf"), 0.0, float("inf")
    face_dom = float(sla.eigh(mats.M_face, mats.M_l2, eigvals_only=True)[-1])
    return StabilityReport(
        level=level,
        h=sigma_space.mesh.h,
        infsup_constant=float(np.sqrt(max(lam[0], 0.0))),
        kernel_coercivity_constant=coerc,
        continuity_constant=float(np.sqrt(lam[-1])),
        kernel_dimension=int(Z.shape[1]),
        kernel_dual_max=kernel_dual,
        kernel_l2_ratio_min=ratio,
        face_domination=face_dom,
    )


def face_domination_constant(sigma_space: FESpace) -> float:
    """Largest ``sum_F h_F ||tau_nn||_F^2 / ||tau||^2`` over the stress space."""
    Mf = assemble_sigma_face_gram(sigma_space).toarray()
    Ml = assemble_sigma_mass(sigma_space).toarray()
    return float(sla.eigh(Mf, Ml, eigvals_only=True)[-1])
