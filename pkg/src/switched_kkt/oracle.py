"""Brute-force reference solvers and finite-difference checkers used to validate the dynamics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .activeset import ActiveSet, assemble_active
from .dynamics import GainConfig, subsystem_field
from .errors import InfeasibleProblem
from .problem import QpData

MAX_ENUM_P = 20
FEAS_TOL = 1e-9
DUAL_TOL = 1e-10
DERIV_STEP = 1e-6


@dataclass(frozen=True)
class OracleSolution:
    z: np.ndarray
    active: ActiveSet
    lam: np.ndarray
    nu: np.ndarray
    objective: float


def qp_enumerate(qp: QpData) -> OracleSolution:
    """Solve a convex QP by trying every working set of inequalities.

    Ties in objective (to 1e-12 relative) go to the lexicographically
    smallest working set.
    """
    n, p, m = qp.n, qp.b_ineq.shape[0], qp.b_eq.shape[0]
    if p > MAX_ENUM_P:
        raise ValueError(f"enumeration is capped at p={MAX_ENUM_P}, got {p}")
    L, K = qp.l_matrix, qp.k_vector
    subsets = sorted(
        (c for k in range(min(p, n - m) + 1) for c in itertools.combinations(range(p), k)),
    )
    best = None
    for work in subsets:
        rows = np.vstack([qp.b_eq, qp.b_ineq[list(work)]])
        rhs_c = np.concatenate([qp.c_eq, qp.c_ineq[list(work)]])
        k = rows.shape[0]
        kkt = np.block([[L, rows.T], [rows, np.zeros((k, k))]])
        if np.linalg.cond(kkt) > 1e12:
            continue
        sol = np.linalg.solve(kkt, np.concatenate([-K, -rhs_c]))
        z, mu = sol[:n], sol[n:]
        scale = 1.0 + np.abs(qp.c_ineq).max(initial=0.0)
        if p and np.max(qp.b_ineq @ z + qp.c_ineq) > FEAS_TOL * scale:
            continue
        if np.any(mu[m:] < -DUAL_TOL):
            continue
        obj = float(qp.objective(z))
        if best is None or obj < best.objective - 1e-12 * max(1.0, abs(best.objective)):
            nu = np.zeros(p)
            nu[list(work)] = mu[m:]
            best = OracleSolution(z, ActiveSet(work), mu[:m].copy(), nu, obj)
    if best is None:
        raise InfeasibleProblem("no working set yields a primal and dual feasible point")
    return best


def directional_derivative_check(problem, z, active, gains: GainConfig = GainConfig(), tau=DERIV_STEP):
    """``|d/dtau g_A(z + tau h_A)|_0 + kappa1 g_A(z)|_inf`` via central differences."""
    z = np.asarray(z, dtype=float)
    active = ActiveSet(active)
    h = subsystem_field(problem, z, active, gains)
    g0 = assemble_active(problem, z, active).g
    gp = assemble_active(problem, z + tau * h, active).g
    gm = assemble_active(problem, z - tau * h, active).g
    rate = (gp - gm) / (2.0 * tau)
    return float(np.max(np.abs(rate + gains.kappa1 * g0), initial=0.0))


def reference_projector(J):
    """``I - J'(JJ')^{-1}J``, the orthogonal projector onto the null space of ``J``."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    n = J.shape[1]
    if J.shape[0] == 0:
        return np.eye(n)
    return np.eye(n) - J.T @ np.linalg.solve(J @ J.T, J)


def random_qp(rng, n=None, p=None, m=None, max_n=4, max_p=4):
    """Random convex QP with ``L = M'M + 0.1 I`` and a strictly feasible witness.

    Returns ``(qp, z0)`` where ``z0`` satisfies every inequality with margin.
    With ``m > 0`` the equalities are consistent with the inequalities but
    ``z0`` generally violates them.
    """
    n = int(rng.integers(2, max_n + 1)) if n is None else n
    p = int(rng.integers(1, max_p + 1)) if p is None else p
    m = int(rng.integers(0, min(1, n - 1) + 1)) if m is None else m
    M = rng.normal(size=(n, n))
    L = M.T @ M + 0.1 * np.eye(n)
    L = 0.5 * (L + L.T)
    K = rng.normal(size=n) * 2.0
    z0 = rng.normal(size=n) * 0.5
    B = rng.normal(size=(p, n))
    slack = rng.uniform(0.2, 1.5, size=p)
    c = -(B @ z0) - slack
    if not m:
        return QpData(L, K, np.zeros((0, n)), np.zeros(0), B, c), z0
    # the witness satisfies the equalities; the start is pushed off them but stays strictly inside
    B_eq = rng.normal(size=(m, n))
    c_eq = -(B_eq @ z0)
    delta = rng.normal(size=n)
    growth = np.max(B @ delta / slack)
    if growth > 0:
        delta *= 0.5 / growth
    return QpData(L, K, B_eq, c_eq, B, c), z0 + delta
