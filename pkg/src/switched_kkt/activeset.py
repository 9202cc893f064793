"""Active-set index machinery: boundary detection, selectors, stacked constraint data."""
from __future__ import annotations

from typing import Iterable, NamedTuple

import numpy as np

from .errors import StructuralError
from .problem import Problem, eval_g, jac_g

DEFAULT_TOL_ACTIVE = 1e-9


class ActiveSet(tuple):
    """Sorted tuple of distinct 0-based inequality indices."""

    def __new__(cls, indices: Iterable[int] = ()):
        if type(indices) is cls:
            return indices
        items = sorted({int(i) for i in indices})
        if items and items[0] < 0:
            raise ValueError(f"negative constraint index {items[0]}")
        return super().__new__(cls, items)

    def validate(self, p, m=0, n=None):
        if self and self[-1] >= p:
            raise ValueError(f"index {self[-1]} out of range for p={p}")
        if n is not None and m + len(self) > n:
            raise StructuralError(
                f"active set {list(self)} with m={m} needs {m + len(self)} > n={n} constraints"
            )
        return self

    def add(self, i):
        return ActiveSet((*self, i))

    def remove(self, i):
        return ActiveSet(j for j in self if j != i)

    def to_list(self):
        return list(self)

    def __repr__(self):
        return f"ActiveSet({list(self)})"


def active_indices(problem: Problem, z, tol_active: float = DEFAULT_TOL_ACTIVE, g_ineq=None) -> ActiveSet:
    """Numerical boundary set ``{i : |g_ineq,i(z)| <= tol_active}``."""
    if tol_active <= 0:
        raise ValueError("tol_active must be positive")
    if g_ineq is None:
        _, g_ineq = eval_g(problem, z)
    return ActiveSet(np.flatnonzero(np.abs(g_ineq) <= tol_active))


def indicator_matrix(active: ActiveSet, p: int) -> np.ndarray:
    active = ActiveSet(active).validate(p)
    E = np.zeros((len(active), p))
    E[np.arange(len(active)), list(active)] = 1.0
    return E


_EMPTY_ROWS = {}


def _empty_rows(n):
    out = _EMPTY_ROWS.get(n)
    if out is None:
        out = np.zeros((0, n))
        out.setflags(write=False)
        _EMPTY_ROWS[n] = out
    return out


class ActiveData(NamedTuple):
    g: np.ndarray  # (m+a,)
    a: np.ndarray  # (m+a, n)
    d: np.ndarray  # (m+a,)
    jac: np.ndarray  # (m+a, n)


def assemble_active(problem: Problem, z, active: ActiveSet, grad=None) -> ActiveData:
    """Stack equality rows over the selected inequality rows (equalities first)."""
    z = np.asarray(z, dtype=float)
    idx = list(ActiveSet(active).validate(problem.p))
    if grad is None:
        grad = problem.gradient(z)
    n = problem.n
    if problem.m:
        a_eq = np.reshape(problem.a_eq(z), (problem.m, n))
        j_eq = jac_g(problem, z, "equality")
    else:
        a_eq = j_eq = _empty_rows(n)
    g_eq = a_eq @ grad + problem.d_eq
    if not idx:
        return ActiveData(g_eq, a_eq, problem.d_eq, j_eq)
    a_ineq = problem.a_ineq(z)
    if a_ineq.shape != (problem.p, n):
        a_ineq = np.reshape(a_ineq, (problem.p, n))
    a_sel = a_ineq[idx]
    d_sel = problem.d_ineq[idx]
    g_sel = a_sel @ grad + d_sel
    j_sel = jac_g(problem, z, "inequality")[idx]
    if not problem.m:
        return ActiveData(g_sel, a_sel, d_sel, j_sel)
    return ActiveData(
        np.concatenate([g_eq, g_sel]),
        np.concatenate([a_eq, a_sel]),
        np.concatenate([problem.d_eq, d_sel]),
        np.concatenate([j_eq, j_sel]),
    )
