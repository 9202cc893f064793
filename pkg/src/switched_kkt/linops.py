"""Dense linear algebra for the active subsystem: B, the annihilator, definiteness checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .activeset import ActiveSet, assemble_active
from .errors import NumericalError, RankError

RANK_TOL = 1e-10
COND_MAX = 1e12


def check_full_row_rank(J, rank_tol=RANK_TOL):
    """Raise RankError unless ``sigma_min(J) >= rank_tol * sigma_max(J)``."""
    J = np.asarray(J, dtype=float)
    k, n = J.shape
    if k == 0:
        return np.zeros(0)
    if k > n:
        raise RankError(f"{k} active constraints cannot have full row rank in {n} variables")
    s = np.linalg.svd(J, compute_uv=False)
    if s[0] == 0.0 or s[-1] < rank_tol * s[0]:
        raise RankError(f"active constraint jacobian is rank deficient (sigma ratio {s[-1] / s[0] if s[0] else 0.0:.3g})")
    return s


def annihilator(J, rank_tol=RANK_TOL):
    """Orthonormal rows spanning the orthogonal complement of the row space of ``J``.

    Built from a column-pivoted Householder QR of ``J'``; the result is a
    deterministic function of ``J``.
    """
    J = np.asarray(J, dtype=float)
    k, n = J.shape
    check_full_row_rank(J, rank_tol)
    if k == 0:
        return np.eye(n)
    q, _, _ = scipy.linalg.qr(J.T, mode="full", pivoting=True)
    return np.ascontiguousarray(q[:, k:].T)


class BFactor:
    """LU factorisation of B with a 1-norm condition guard."""

    def __init__(self, B, cond_max=COND_MAX):
        B = np.asarray(B, dtype=float)
        self.size = B.shape[0]
        if self.size == 0:
            self.cond = 1.0
            return
        try:
            self.cond = float(np.linalg.cond(B, 1))
        except np.linalg.LinAlgError:
            self.cond = np.inf
        if not np.isfinite(self.cond) or self.cond > cond_max:
            raise NumericalError(f"B is ill-conditioned (cond_1 = {self.cond:.3g})")
        self._lu = scipy.linalg.lu_factor(B, check_finite=False)

    def solve(self, rhs, transpose=False):
        rhs = np.asarray(rhs, dtype=float)
        if self.size == 0:
            return np.zeros((0,) + rhs.shape[1:])
        return scipy.linalg.lu_solve(self._lu, rhs, trans=1 if transpose else 0, check_finite=False)


@dataclass(frozen=True)
class ActiveOperators:
    active: ActiveSet
    b_matrix: np.ndarray
    annihilator: np.ndarray
    j_matrix: np.ndarray
    a_matrix: np.ndarray
    g_vector: np.ndarray
    d_vector: np.ndarray
    grad: np.ndarray
    b_factor: BFactor

    @property
    def projector(self):
        """Orthogonal projector onto the tangent space, ``G' G``."""
        return self.annihilator.T @ self.annihilator


def build_operators(problem, z, active, grad=None) -> ActiveOperators:
    z = np.asarray(z, dtype=float)
    active = ActiveSet(active).validate(problem.p)
    if grad is None:
        grad = np.asarray(problem.gradient(z), dtype=float)
    data = assemble_active(problem, z, active, grad=grad)
    G = annihilator(data.jac)
    B = data.jac @ data.a.T
    return ActiveOperators(
        active=active,
        b_matrix=B,
        annihilator=G,
        j_matrix=data.jac,
        a_matrix=data.a,
        g_vector=data.g,
        d_vector=data.d,
        grad=grad,
        b_factor=BFactor(B),
    )


def sym_part(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def sym_min_eig(M) -> float:
    """Smallest eigenvalue of the symmetric part; ``+inf`` for an empty matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(sym_part(M))[0])


def concat_min_eig(a_matrix, annihilator_rows) -> float:
    """Smallest eigenvalue of ``[A; G]'[A; G]``."""
    stacked = np.vstack([np.asarray(a_matrix, dtype=float), np.asarray(annihilator_rows, dtype=float)])
    if stacked.shape[0] != stacked.shape[1]:
        raise ValueError(f"stacked matrix must be square, got {stacked.shape}")
    return float(np.linalg.eigvalsh(stacked.T @ stacked)[0])
