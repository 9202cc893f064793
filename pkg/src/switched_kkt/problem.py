"""Gradient-form optimisation problems and the built-in case studies.

A problem is ``min f(z)`` subject to

    g_eq(z)   = A_eq(z) grad f(z) + d_eq   = 0
    g_ineq(z) = A_ineq(z) grad f(z) + d_ineq <= 0

Constraint indices are 0-based everywhere in this package.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, FormatError, InvalidProblem, NumericalError

Vector = np.ndarray
Matrix = np.ndarray


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Problem:
    n: int
    m: int
    p: int
    objective: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    a_eq: Callable[[Vector], Matrix]
    a_ineq: Callable[[Vector], Matrix]
    d_eq: Vector
    d_ineq: Vector
    jac_g_eq: Optional[Callable[[Vector], Matrix]] = None
    jac_g_ineq: Optional[Callable[[Vector], Matrix]] = None
    hess_lagrangian: Optional[Callable[[Vector, Vector, Vector], Matrix]] = None
    name: str = "problem"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 0 or self.p < 0:
            raise InvalidProblem(f"bad dimensions n={self.n}, m={self.m}, p={self.p}")
        if self.m > self.n:
            raise InvalidProblem(f"m={self.m} equality constraints exceed n={self.n} variables")
        object.__setattr__(self, "d_eq", _frozen(np.reshape(self.d_eq, (self.m,))))
        object.__setattr__(self, "d_ineq", _frozen(np.reshape(self.d_ineq, (self.p,))))

    # thin conveniences over the module functions
    def g(self, z):
        return eval_g(self, z)

    def jac(self, z, which):
        return jac_g(self, z, which)


def _all_finite(a):
    # per-call numpy ufunc overhead dominates for the tiny arrays seen here
    if a.size <= 64:
        return all(map(math.isfinite, a.ravel().tolist()))
    return bool(np.isfinite(a).all())


def _check_finite(values, what):
    values = np.asarray(values, dtype=float)
    if _all_finite(values):
        return values
    bad = np.flatnonzero(~np.isfinite(values.ravel()))
    raise EvaluationError(f"non-finite {what}", index=int(bad[0]))


def _as_point(problem, z):
    if not (isinstance(z, np.ndarray) and z.dtype == np.float64 and z.shape == (problem.n,)):
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.shape != (problem.n,):
            raise InvalidProblem(f"expected a point of length {problem.n}, got {z.shape[0]}")
    if not _all_finite(z):
        raise EvaluationError("non-finite point", index=int(np.flatnonzero(~np.isfinite(z))[0]))
    return z


def _g_raw(problem, z, which, grad=None):
    if grad is None:
        grad = problem.gradient(z)
    if which == "equality":
        if problem.m == 0:
            return np.zeros(0)
        return problem.a_eq(z) @ grad + problem.d_eq
    if problem.p == 0:
        return np.zeros(0)
    return problem.a_ineq(z) @ grad + problem.d_ineq


def eval_g(problem: Problem, z) -> tuple[Vector, Vector]:
    """Return ``(g_eq(z), g_ineq(z))``."""
    z = _as_point(problem, z)
    grad = _check_finite(problem.gradient(z), "gradient")
    g_eq = _check_finite(_g_raw(problem, z, "equality", grad), "g_eq")
    g_ineq = _check_finite(_g_raw(problem, z, "inequality", grad), "g_ineq")
    return g_eq, g_ineq


def fd_step(z):
    return np.maximum(1e-6, 1e-7 * np.abs(z))


def fd_jacobian(fun, z, rows):
    """Central-difference Jacobian of a vector function with ``rows`` outputs."""
    z = np.asarray(z, dtype=float)
    steps = fd_step(z)
    jac = np.empty((rows, z.size))
    for i, h in enumerate(steps):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h
        zm[i] -= h
        jac[:, i] = (np.asarray(fun(zp)) - np.asarray(fun(zm))) / (2.0 * h)
    return jac


def jac_g(problem: Problem, z, which: str) -> Matrix:
    """Jacobian of ``g_eq`` (``which="equality"``) or ``g_ineq`` (``"inequality"``).

    Falls back to central differences when no analytic callback was given.
    """
    if which not in ("equality", "inequality"):
        raise ValueError(f"which must be 'equality' or 'inequality', not {which!r}")
    rows = problem.m if which == "equality" else problem.p
    if rows == 0:
        return np.zeros((0, problem.n))
    z = _as_point(problem, z)
    analytic = problem.jac_g_eq if which == "equality" else problem.jac_g_ineq
    if analytic is not None:
        jac = analytic(z)
    else:
        jac = fd_jacobian(lambda x: _g_raw(problem, x, which), z, rows)
    jac = np.asarray(jac, dtype=float)
    if jac.shape != (rows, problem.n):
        jac = np.reshape(jac, (rows, problem.n))
    return _check_finite(jac, f"{which} constraint jacobian")


# ---------------------------------------------------------------------------
# quadratic programs


@dataclass(frozen=True)
class QpData:
    """``min 1/2 z'Lz + K'z  s.t.  B_eq z + c_eq = 0,  B_ineq z + c_ineq <= 0``."""

    l_matrix: Matrix
    k_vector: Vector
    b_eq: Matrix
    c_eq: Vector
    b_ineq: Matrix
    c_ineq: Vector

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.l_matrix, dtype=float))
        n = L.shape[0]
        if L.shape != (n, n):
            raise InvalidProblem(f"L must be square, got {L.shape}")
        K = np.asarray(self.k_vector, dtype=float).reshape(-1)
        if K.shape != (n,):
            raise InvalidProblem(f"K has length {K.shape[0]}, expected {n}")
        blocks = {}
        for bname, cname in (("b_eq", "c_eq"), ("b_ineq", "c_ineq")):
            B = np.asarray(getattr(self, bname), dtype=float)
            c = np.asarray(getattr(self, cname), dtype=float).reshape(-1)
            if B.size == 0:
                B = np.zeros((0, n))
            if B.ndim != 2 or B.shape[1] != n:
                raise InvalidProblem(f"{bname} must have {n} columns, got shape {B.shape}")
            if c.shape != (B.shape[0],):
                raise InvalidProblem(f"{cname} has length {c.shape[0]}, expected {B.shape[0]}")
            blocks[bname], blocks[cname] = B, c
        if not np.all(np.isfinite(L)) or np.max(np.abs(L - L.T), initial=0.0) > 1e-12:
            raise InvalidProblem("L must be symmetric (to 1e-12)")
        if np.linalg.eigvalsh(L)[0] <= 0.0:
            raise InvalidProblem("L must be positive definite")
        if blocks["b_eq"].shape[0] > n:
            raise InvalidProblem("more equality constraints than variables")
        object.__setattr__(self, "l_matrix", _frozen(L))
        object.__setattr__(self, "k_vector", _frozen(K))
        for key, value in blocks.items():
            object.__setattr__(self, key, _frozen(value))

    @property
    def n(self):
        return self.l_matrix.shape[0]

    def objective(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * z @ self.l_matrix @ z + self.k_vector @ z


def qp_transform(qp: QpData, name="qp") -> Problem:
    """Recast a convex QP into gradient form.

    With ``grad f = Lz + K`` we have ``z = L^{-1}(grad f - K)``, hence
    ``A = B L^{-1}`` and ``d = c - B L^{-1} K`` for each constraint block.
    """
    L = qp.l_matrix
    try:
        chol = np.linalg.cholesky(L)
    except np.linalg.LinAlgError as exc:
        raise InvalidProblem("L is not positive definite") from exc
    l_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(qp.n)))
    l_inv = 0.5 * (l_inv + l_inv.T)
    K = qp.k_vector

    a_eq = _frozen(qp.b_eq @ l_inv)
    a_ineq = _frozen(qp.b_ineq @ l_inv)
    d_eq = qp.c_eq - qp.b_eq @ (l_inv @ K)
    d_ineq = qp.c_ineq - qp.b_ineq @ (l_inv @ K)
    b_eq, b_ineq = qp.b_eq, qp.b_ineq

    return Problem(
        n=qp.n,
        m=b_eq.shape[0],
        p=b_ineq.shape[0],
        objective=lambda z: float(0.5 * z @ L @ z + K @ z),
        gradient=lambda z: L @ z + K,
        a_eq=lambda z: a_eq,
        a_ineq=lambda z: a_ineq,
        d_eq=d_eq,
        d_ineq=d_ineq,
        jac_g_eq=lambda z: b_eq,
        jac_g_ineq=lambda z: b_ineq,
        hess_lagrangian=lambda z, lam, nu: L,
        name=name,
        meta={"qp": qp},
    )


def _matrix_field(obj, key, n_cols=None, vector=False):
    if key not in obj:
        raise FormatError("missing field", where=key)
    value = obj[key]
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"not numeric: {exc}", where=key) from exc
    if vector:
        if arr.ndim != 1:
            raise FormatError(f"expected a flat array, got {arr.ndim} dimensions", where=key)
        return arr
    if arr.size == 0:
        return np.zeros((0, n_cols or 0))
    if arr.ndim != 2:
        raise FormatError("expected an array of row arrays", where=key)
    return arr


def qp_from_dict(obj) -> QpData:
    if not isinstance(obj, dict):
        raise FormatError("top level must be a JSON object")
    L = _matrix_field(obj, "L")
    n = L.shape[1] if L.ndim == 2 else 0
    return QpData(
        l_matrix=L,
        k_vector=_matrix_field(obj, "K", vector=True),
        b_eq=_matrix_field(obj, "B_eq", n),
        c_eq=_matrix_field(obj, "c_eq", vector=True),
        b_ineq=_matrix_field(obj, "B_ineq", n),
        c_ineq=_matrix_field(obj, "c_ineq", vector=True),
    )


def qp_to_dict(qp: QpData) -> dict:
    return {
        "L": qp.l_matrix.tolist(),
        "K": qp.k_vector.tolist(),
        "B_eq": qp.b_eq.tolist(),
        "c_eq": qp.c_eq.tolist(),
        "B_ineq": qp.b_ineq.tolist(),
        "c_ineq": qp.c_ineq.tolist(),
    }


def load_qp_file(path) -> QpData:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, where=f"line {exc.lineno}") from exc
    return qp_from_dict(obj)


def save_qp_file(qp: QpData, path):
    Path(path).write_text(json.dumps(qp_to_dict(qp), indent=2) + "\n")


def paper_qp() -> QpData:
    with resources.files("switched_kkt").joinpath("data/paper_qp.json").open() as fh:
        return qp_from_dict(json.load(fh))


def qp_paper_problem() -> Problem:
    prob = qp_transform(paper_qp(), name="qp-paper")
    prob.meta["box"] = [(-3.0, 3.0), (-3.0, 3.0)]
    return prob


# ---------------------------------------------------------------------------
# Rosenbrock


def _rosen_f(z):
    return float(100.0 * (z[1] - z[0] ** 2) ** 2 + (1.0 - z[0]) ** 2)


def _rosen_grad(z):
    z1, z2 = z
    return np.array([
        -400.0 * z1 * (z2 - z1 ** 2) - 2.0 * (1.0 - z1),
        200.0 * (z2 - z1 ** 2),
    ])


def _rosen_hess(z):
    z1, z2 = z
    return np.array([
        [1200.0 * z1 ** 2 - 400.0 * z2 + 2.0, -400.0 * z1],
        [-400.0 * z1, 200.0],
    ])


def _rosen_inverse_map(z):
    # z = Phi(z) grad f(z) + (1, 1) holds identically for Rosenbrock's function
    z1 = z[0]
    return np.array([
        [0.5, z1],
        [0.5 * z1 + 0.5, z1 ** 2 + z1 + 1.0 / 200.0],
    ])


def rosenbrock_problem(b_ineq=None, c_ineq=None) -> Problem:
    """Rosenbrock's function under linear inequalities ``b_ineq z + c_ineq <= 0``.

    The default is the single constraint ``-2 z1 + z2 + 3/4 <= 0``, which
    recasts to ``A_ineq(z) = [-1/2 + z1/2, z1^2 - z1 + 1/200]``, ``d_ineq = -1/4``.
    Other linear constraints recast the same way through the inverse gradient
    map, but positivity of B is not guaranteed for them.
    """
    if b_ineq is None:
        b_ineq, c_ineq = [[-2.0, 1.0]], [0.75]
    B = _frozen(np.atleast_2d(np.asarray(b_ineq, dtype=float)))
    c = np.asarray(c_ineq, dtype=float).reshape(-1)
    if B.shape[1] != 2 or c.shape != (B.shape[0],):
        raise InvalidProblem("Rosenbrock constraints must be p x 2 with p offsets")
    d_ineq = c + B @ np.ones(2)

    return Problem(
        n=2,
        m=0,
        p=B.shape[0],
        objective=_rosen_f,
        gradient=_rosen_grad,
        a_eq=lambda z: np.zeros((0, 2)),
        a_ineq=lambda z: B @ _rosen_inverse_map(z),
        d_eq=np.zeros(0),
        d_ineq=d_ineq,
        jac_g_eq=lambda z: np.zeros((0, 2)),
        jac_g_ineq=lambda z: B,
        hess_lagrangian=lambda z, lam, nu: _rosen_hess(z),
        name="rosenbrock",
        meta={"box": [(-2.0, 2.0), (-2.0, 2.0)], "b_ineq": B, "c_ineq": c},
    )


# ---------------------------------------------------------------------------
# multi-zone building heating


@dataclass(frozen=True)
class HvacParams:
    """Thermal network data. Diagonal matrices are stored as 1-D arrays."""

    n1: int
    n2: int
    c1: Vector
    c2: Vector
    e11: Matrix
    e12: Matrix
    e22: Matrix
    r1_inv: Vector
    r2_inv: Vector
    a_diag: Vector
    t_supply: Vector
    t_ambient: object
    q_load: Vector
    t1_star: Vector
    t2_star: Vector
    l1: Vector
    l2: Vector
    lm: Vector
    eps_margin: float

    def __post_init__(self):
        n1, n2 = self.n1, self.n2
        if n1 < 1 or n2 < 1:
            raise InvalidProblem("zone counts must be positive")
        shapes = {
            "c1": (n1,), "c2": (n2,), "r1_inv": (n1,), "r2_inv": (n2,), "a_diag": (n1,),
            "t_supply": (n1,), "q_load": (n1,), "t1_star": (n1,), "t2_star": (n2,),
            "l1": (n1,), "l2": (n2,), "lm": (n1,),
            "e11": (n1, n1), "e12": (n1, n2), "e22": (n2, n2),
        }
        for key, shape in shapes.items():
            arr = np.asarray(getattr(self, key), dtype=float)
            try:
                arr = np.broadcast_to(arr, shape).copy()
            except ValueError as exc:
                raise InvalidProblem(f"{key} cannot be shaped {shape}") from exc
            object.__setattr__(self, key, _frozen(arr))
        ta = np.asarray(self.t_ambient, dtype=float)
        if ta.ndim == 0:
            ta = np.full(n1 + n2, float(ta))
        if ta.shape != (n1 + n2,):
            raise InvalidProblem("t_ambient must be a scalar or have n1 + n2 entries")
        object.__setattr__(self, "t_ambient", _frozen(ta))

        E = self.e_matrix
        if np.max(np.abs(E - E.T)) > 1e-10 or np.linalg.eigvalsh(0.5 * (E + E.T))[0] < -1e-10:
            raise InvalidProblem("conductance matrix E must be symmetric positive semidefinite")
        for key in ("c1", "c2", "r1_inv", "r2_inv", "a_diag", "l1", "l2", "lm"):
            if np.any(getattr(self, key) <= 0.0):
                raise InvalidProblem(f"{key} must be strictly positive")
        if not self.eps_margin > 0.0:
            raise InvalidProblem("eps_margin must be positive")

    @property
    def e_matrix(self):
        return np.block([[self.e11, self.e12], [self.e12.T, self.e22]])

    @classmethod
    def paper(cls, l1=1.0, l2=1.0, lm=0.1, eps_margin=1.0):
        """The scalar two-zone instance (one controlled, one uncontrolled room)."""
        return cls(
            n1=1, n2=1, c1=[1.0], c2=[1.0],
            e11=[[0.5]], e12=[[-0.5]], e22=[[0.5]],
            r1_inv=[0.5], r2_inv=[0.5], a_diag=[1.0],
            t_supply=[30.0], t_ambient=10.0, q_load=[0.0],
            t1_star=[23.0], t2_star=[23.0],
            l1=[l1], l2=[l2], lm=[lm], eps_margin=eps_margin,
        )


def thermal_balance(params: HvacParams, z):
    """Right side of the zone heat balance ``C dT/dt`` at ``z = [T1, T2, m]``."""
    n1, n2 = params.n1, params.n2
    t1, t2, m = z[:n1], z[n1:n1 + n2], z[n1 + n2:]
    temps = z[:n1 + n2]
    ta1, ta2 = params.t_ambient[:n1], params.t_ambient[n1:]
    flow = -params.e_matrix @ temps
    flow[:n1] += params.r1_inv * (ta1 - t1) + params.a_diag * (params.t_supply - t1) * m + params.q_load
    flow[n1:] += params.r2_inv * (ta2 - t2)
    return flow


def hvac_problem(params: Optional[HvacParams] = None) -> Problem:
    """Steady-state comfort/energy trade-off for a multi-zone building.

    Decision vector ``z = [T1, T2, m]``; the equalities are the thermal
    equilibrium conditions and the inequalities ``T1 - T^s + eps <= 0``.
    """
    P = params or HvacParams.paper()
    n1, n2 = P.n1, P.n2
    n = 2 * n1 + n2
    s1, s2, sm = slice(0, n1), slice(n1, n1 + n2), slice(n1 + n2, n)
    e11, e12, e22 = P.e11, P.e12, P.e22
    a = P.a_diag
    w_inv = np.concatenate([1.0 / P.l1, 1.0 / P.l2, 1.0 / P.lm])
    targets = np.concatenate([P.t1_star, P.t2_star])
    ta1, ta2 = P.t_ambient[:n1], P.t_ambient[n1:]

    weights = np.concatenate([P.l1, P.l2, P.lm])
    shift = np.concatenate([P.t1_star, P.t2_star, np.zeros(n1)])

    def objective(z):
        d = z - shift
        return float(0.5 * (d @ (weights * d)))

    def gradient(z):
        return weights * (z - shift)

    # rows: [-E11 - R1^-1 - A diag(m), -E12, A diag(supply_gap)]; [-E12', -E22 - R2^-1, 0]
    coupling_base = np.zeros((n1 + n2, n))
    coupling_base[s1, s1] = -e11 - np.diag(P.r1_inv)
    coupling_base[s1, s2] = -e12
    coupling_base[n1:, s1] = -e12.T
    coupling_base[n1:, s2] = -e22 - np.diag(P.r2_inv)
    rows1 = np.arange(n1)
    diag_flat = rows1 * n + rows1
    m_flat = rows1 * n + n1 + n2 + rows1
    # a_eq scales columns by L^-1, so its m-dependent and constant parts are fixed up front
    a_eq_base = coupling_base * w_inv
    a_eq_base[rows1, n1 + n2 + rows1] = a * (P.t_supply - P.t1_star) * w_inv[sm]
    a_diag_scaled = a * w_inv[s1]

    def a_eq(z):
        out = a_eq_base.copy()
        out.reshape(-1)[diag_flat] -= a_diag_scaled * z[sm]
        return out

    def jac_eq(z):
        out = coupling_base.copy()
        flat = out.reshape(-1)
        flat[diag_flat] -= a * z[sm]
        flat[m_flat] = a * (P.t_supply - z[s1])
        return out

    balance = np.block([[e11 + np.diag(P.r1_inv), e12], [e12.T, e22 + np.diag(P.r2_inv)]])
    d_eq = np.concatenate([P.r1_inv * ta1 + P.q_load, P.r2_inv * ta2]) - balance @ targets

    a_ineq_const = np.zeros((n1, n))
    a_ineq_const[:, s1] = np.diag(1.0 / P.l1)
    a_ineq_const = _frozen(a_ineq_const)
    jac_ineq_const = np.zeros((n1, n))
    jac_ineq_const[:, s1] = np.eye(n1)
    jac_ineq_const = _frozen(jac_ineq_const)
    d_ineq = P.t1_star - P.t_supply + P.eps_margin

    def hess_lagrangian(z, lam, nu):
        H = np.diag(np.concatenate([P.l1, P.l2, P.lm]))
        cross = -np.diag(a * np.asarray(lam)[:n1])
        H[s1, sm] += cross
        H[sm, s1] += cross
        return H

    lo = P.t_supply - P.eps_margin
    box = [(float(t) - 15.0, float(t)) for t in lo] + [(0.0, 40.0)] * n2 + [(0.0, 5.0)] * n1
    return Problem(
        n=n, m=n1 + n2, p=n1,
        objective=objective,
        gradient=gradient,
        a_eq=a_eq,
        a_ineq=lambda z: a_ineq_const,
        d_eq=d_eq,
        d_ineq=d_ineq,
        jac_g_eq=jac_eq,
        jac_g_ineq=lambda z: jac_ineq_const,
        hess_lagrangian=hess_lagrangian,
        name="hvac-paper" if params is None else "hvac",
        meta={"hvac": P, "box": box},
    )


def hvac_gain_condition(params: HvacParams) -> tuple[bool, float]:
    """Check the cost-weight inequality that makes every KKT point a strict local minimum.

    Returns ``(holds, margin)`` with ``margin`` the smallest eigenvalue of

        L1 + E12 S^-1 L2 S^-1 E12' - 1/(2 eps^2) Y A^-1 Lm A^-1 Y,

    where ``S = E22 + R2^-1`` and ``Y = E11 + R1^-1 - E12 S^-1 E12'``.
    """
    P = params
    S = P.e22 + np.diag(P.r2_inv)
    if np.linalg.cond(S) > 1e12:
        raise NumericalError("E22 + R2^-1 is singular")
    s_inv_e12t = np.linalg.solve(S, P.e12.T)
    Y = P.e11 + np.diag(P.r1_inv) - P.e12 @ s_inv_e12t
    first = np.diag(P.l1) + s_inv_e12t.T @ np.diag(P.l2) @ s_inv_e12t
    scaled = Y / P.a_diag  # Y A^-1
    third = scaled @ np.diag(P.lm) @ scaled.T / (2.0 * P.eps_margin ** 2)
    M = first - third
    margin = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    return margin > 0.0, margin


BUILTINS = {
    "qp-paper": qp_paper_problem,
    "rosenbrock": rosenbrock_problem,
    "hvac-paper": hvac_problem,
}


def builtin_problem(name: str) -> Problem:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InvalidProblem(f"unknown built-in {name!r}; choose from {sorted(BUILTINS)}") from None
