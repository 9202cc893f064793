"""Post-hoc certification of terminal points and sampled checks of the B-matrix assumption."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
import scipy.linalg

from .activeset import ActiveSet
from .dynamics import GainConfig
from .errors import CapabilityError, NumericalError, RankError, SamplingError
from .linops import COND_MAX, build_operators, concat_min_eig, sym_min_eig, sym_part
from .problem import eval_g, jac_g

DEFAULT_TOL_KKT = 1e-6
HESSIAN_FD_STEP = 1e-5

VERDICTS = ("kkt_pass", "kkt_fail", "kkt_pass_second_order")


class KKTResidual(NamedTuple):
    grad_residual: float
    eq_residual: float
    ineq_max: float
    nu_min: float
    comp_residual: float


@dataclass
class KKTReport:
    z_star: np.ndarray
    lambda_star: np.ndarray
    nu_star: np.ndarray
    active: ActiveSet
    grad_residual: float
    eq_residual: float
    ineq_max: float
    nu_min: float
    comp_residual: float
    second_order_eigmin: Optional[float]
    verdict: str
    tol_kkt: float = DEFAULT_TOL_KKT
    notes: List[str] = field(default_factory=list)

    @property
    def residual(self):
        return KKTResidual(self.grad_residual, self.eq_residual, self.ineq_max, self.nu_min, self.comp_residual)

    @property
    def passed(self):
        return self.verdict != "kkt_fail"

    def to_dict(self):
        return {
            "z_star": [float(v) for v in self.z_star],
            "lambda_star": [float(v) for v in self.lambda_star],
            "nu_star": [float(v) for v in self.nu_star],
            "active": list(self.active),
            "grad_residual": self.grad_residual,
            "eq_residual": self.eq_residual,
            "ineq_max": self.ineq_max,
            "nu_min": self.nu_min,
            "comp_residual": self.comp_residual,
            "second_order_eigmin": self.second_order_eigmin,
            "verdict": self.verdict,
            "tol_kkt": self.tol_kkt,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, obj):
        """Inverse of :meth:`to_dict`; raises KeyError/TypeError/ValueError on schema mismatch."""
        verdict = obj["verdict"]
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        eig = obj["second_order_eigmin"]
        return cls(
            z_star=np.array(obj["z_star"], dtype=float),
            lambda_star=np.array(obj["lambda_star"], dtype=float),
            nu_star=np.array(obj["nu_star"], dtype=float),
            active=ActiveSet(obj["active"]),
            grad_residual=float(obj["grad_residual"]),
            eq_residual=float(obj["eq_residual"]),
            ineq_max=float(obj["ineq_max"]),
            nu_min=float(obj["nu_min"]),
            comp_residual=float(obj["comp_residual"]),
            second_order_eigmin=None if eig is None else float(eig),
            verdict=verdict,
            tol_kkt=float(obj.get("tol_kkt", DEFAULT_TOL_KKT)),
            notes=list(obj.get("notes", [])),
        )


def recover_multipliers(problem, z_star, active):
    """Solve ``B_A' [lambda; nu_A] = d_A`` and scatter ``nu_A`` into a length-p vector."""
    ops = build_operators(problem, z_star, active)
    sol = ops.b_factor.solve(ops.d_vector, transpose=True)
    lam = np.array(sol[: problem.m], dtype=float)
    nu = np.zeros(problem.p)
    nu[list(ops.active)] = sol[problem.m:]
    return lam, nu


def lagrangian_gradient(problem, z, lam, nu):
    z = np.asarray(z, dtype=float)
    out = np.asarray(problem.gradient(z), dtype=float).copy()
    if problem.m:
        out += jac_g(problem, z, "equality").T @ np.asarray(lam, dtype=float)
    if problem.p:
        out += jac_g(problem, z, "inequality").T @ np.asarray(nu, dtype=float)
    return out


def kkt_residual(problem, z, lam, nu) -> KKTResidual:
    """Stationarity, feasibility, dual feasibility and complementarity residuals.

    Empty constraint blocks contribute 0 to ``eq_residual``, ``ineq_max``,
    ``nu_min`` and ``comp_residual``.
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if lam.size != problem.m or nu.size != problem.p:
        raise ValueError(f"multipliers have sizes ({lam.size}, {nu.size}), expected ({problem.m}, {problem.p})")
    g_eq, g_ineq = eval_g(problem, z)
    grad_l = lagrangian_gradient(problem, z, lam, nu)
    return KKTResidual(
        grad_residual=float(np.max(np.abs(grad_l), initial=0.0)),
        eq_residual=float(np.max(np.abs(g_eq), initial=0.0)),
        ineq_max=float(np.max(g_ineq)) if problem.p else 0.0,
        nu_min=float(np.min(nu)) if problem.p else 0.0,
        comp_residual=float(np.max(np.abs(nu * g_ineq), initial=0.0)),
    )


def lagrangian_hessian(problem, z, lam, nu, allow_fd=True):
    if problem.hess_lagrangian is not None:
        H = problem.hess_lagrangian(np.asarray(z, dtype=float), np.asarray(lam), np.asarray(nu))
        return np.reshape(np.asarray(H, dtype=float), (problem.n, problem.n))
    if not allow_fd:
        raise CapabilityError("no Hessian of the Lagrangian and finite differences disabled")
    z = np.asarray(z, dtype=float)
    H = np.empty((problem.n, problem.n))
    for j in range(problem.n):
        e = np.zeros(problem.n)
        e[j] = HESSIAN_FD_STEP
        H[:, j] = (lagrangian_gradient(problem, z + e, lam, nu) - lagrangian_gradient(problem, z - e, lam, nu)) / (
            2.0 * HESSIAN_FD_STEP
        )
    return sym_part(H)


def second_order_check(problem, z_star, lam, nu, active, allow_fd=True) -> float:
    """Smallest eigenvalue of ``G H_L G'``; ``+inf`` when the tangent space is trivial."""
    ops = build_operators(problem, z_star, active)
    G = ops.annihilator
    if G.shape[0] == 0:
        return math.inf
    H = lagrangian_hessian(problem, z_star, lam, nu, allow_fd=allow_fd)
    return float(np.linalg.eigvalsh(sym_part(G @ H @ G.T))[0])


def verdict_for(res: KKTResidual, eigmin, tol_kkt):
    ok = (
        res.grad_residual <= tol_kkt
        and res.eq_residual <= tol_kkt
        and res.comp_residual <= tol_kkt
        and res.ineq_max <= tol_kkt
        and res.nu_min >= -tol_kkt
    )
    if not ok:
        return "kkt_fail"
    return "kkt_pass_second_order" if eigmin is not None and eigmin > 0 else "kkt_pass"


def certify_point(problem, z_star, active, tol_kkt=DEFAULT_TOL_KKT, allow_fd=True) -> KKTReport:
    """Recover multipliers at ``z_star`` for ``active`` and grade the KKT conditions."""
    active = ActiveSet(active)
    z_star = np.asarray(z_star, dtype=float)
    lam, nu = recover_multipliers(problem, z_star, active)
    res = kkt_residual(problem, z_star, lam, nu)
    notes = []
    try:
        eigmin = second_order_check(problem, z_star, lam, nu, active, allow_fd=allow_fd)
        if math.isinf(eigmin):
            notes.append("tangent space is trivial; projected Hessian is empty")
    except CapabilityError as exc:
        eigmin = None
        notes.append(str(exc))
    return KKTReport(
        z_star=z_star.copy(),
        lambda_star=lam,
        nu_star=nu,
        active=active,
        verdict=verdict_for(res, eigmin, tol_kkt),
        second_order_eigmin=eigmin,
        tol_kkt=tol_kkt,
        notes=notes,
        **res._asdict(),
    )


# ---------------------------------------------------------------------------
# sampled assumption checks


@dataclass(frozen=True)
class Sampler:
    """Points in an axis-aligned box, drawn uniformly or on a tensor grid.

    For ``mode="grid"`` each axis gets ``round(count ** (1/n))`` points
    (at least two), so ``count = k**n`` gives ``k`` points per axis.
    """

    box: tuple
    count: int = 1000
    seed: int = 0
    mode: str = "uniform"

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if any(not lo <= hi for lo, hi in box):
            raise ValueError("every box interval needs lo <= hi")
        if self.count < 1:
            raise ValueError("count must be positive")
        if self.mode not in ("uniform", "grid"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        object.__setattr__(self, "box", box)

    def points(self):
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        n = lo.size
        if self.mode == "uniform":
            rng = np.random.default_rng(self.seed)
            return lo + (hi - lo) * rng.random((self.count, n))
        k = max(2, int(round(self.count ** (1.0 / n))))
        axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
        return np.array(list(itertools.product(*axes)))


@dataclass
class SubsetRecord:
    subset: ActiveSet
    samples_checked: int
    min_sym_eig: float
    beta1_est: float
    beta2_est: float
    phi_est: float
    worst_condition: float
    passed: bool

    def to_dict(self):
        out = asdict(self)
        out["subset"] = list(self.subset)
        out["pass"] = out.pop("passed")
        return out

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        obj["subset"] = ActiveSet(obj["subset"])
        obj["passed"] = bool(obj.pop("pass"))
        return cls(**obj)


@dataclass
class AssumptionReport:
    records: List[SubsetRecord]
    samples_drawn: int
    samples_rejected: int
    semantics: str = "minimum over sampled feasible points; not a uniform certificate"

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    def _finite_min(self, key):
        vals = [getattr(r, key) for r in self.records if math.isfinite(getattr(r, key))]
        return min(vals) if vals else math.inf

    @property
    def beta1(self):
        return self._finite_min("beta1_est")

    @property
    def beta2(self):
        return self._finite_min("beta2_est")

    @property
    def phi(self):
        return self._finite_min("phi_est")

    def record(self, subset):
        subset = ActiveSet(subset)
        for r in self.records:
            if r.subset == subset:
                return r
        raise KeyError(subset)

    def to_dict(self):
        return {
            "pass": self.passed,
            "samples_drawn": self.samples_drawn,
            "samples_rejected": self.samples_rejected,
            "semantics": self.semantics,
            "subsets": [r.to_dict() for r in self.records],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, obj):
        return cls(
            records=[SubsetRecord.from_dict(r) for r in obj["subsets"]],
            samples_drawn=int(obj["samples_drawn"]),
            samples_rejected=int(obj["samples_rejected"]),
            semantics=obj.get("semantics", ""),
        )


def default_subsets(problem, events=()):
    """Empty set, all admissible singletons, and any active set visited in ``events``."""
    found = {ActiveSet()}
    if problem.m < problem.n:
        found.update(ActiveSet([i]) for i in range(problem.p))
    for ev in events:
        found.add(ActiveSet(ev.sigma_after))
        found.add(ActiveSet(ev.sigma_before))
    return sorted(found, key=lambda s: (len(s), tuple(s)))


def enumerate_subsets(problem, max_card=None):
    """All subsets of the inequality indices up to ``max_card`` (capped at ``n - m``)."""
    cap = problem.n - problem.m
    if max_card is not None:
        cap = min(cap, max_card)
    cap = min(cap, problem.p)
    return [ActiveSet(c) for k in range(cap + 1) for c in itertools.combinations(range(problem.p), k)]


def _subset_sample(problem, z, subset):
    """(sym eig, beta1, lambda_min(BB'), phi, cond) at one point, or None on rank failure."""
    try:
        ops = build_operators(problem, z, subset)
    except (RankError, NumericalError):
        return None
    B = ops.b_matrix
    phi = concat_min_eig(ops.a_matrix, ops.annihilator)
    if B.size == 0:
        return math.inf, math.inf, math.inf, phi, 1.0
    cond = float(np.linalg.cond(B, 2))
    sym_eig = sym_min_eig(B)
    BBt = B @ B.T
    bbt_min = float(np.linalg.eigvalsh(BBt)[0])
    if bbt_min <= 0:
        return sym_eig, -math.inf, bbt_min, phi, math.inf
    beta1 = float(scipy.linalg.eigh(sym_part(B), 0.5 * sym_part(BBt), eigvals_only=True)[0])
    return sym_eig, beta1, bbt_min, phi, cond


def check_assumption1(problem, sampler: Sampler, subsets=None, events=()) -> AssumptionReport:
    """Sample the positivity of ``B_A`` and estimate the constants of the assumption chain.

    Points with any ``g_ineq > 0`` or that fail to evaluate are rejected.
    ``beta1`` is the smallest generalized eigenvalue of ``(sym B, B B'/2)``
    over samples, so ``sym B >= beta1 B B'/2`` holds at every sample.
    """
    if len(sampler.box) != problem.n:
        raise ValueError(f"sampling box has {len(sampler.box)} intervals, problem has n={problem.n}")
    subsets = default_subsets(problem, events) if subsets is None else [ActiveSet(s) for s in subsets]
    for s in subsets:
        s.validate(problem.p, problem.m, problem.n)
    points = sampler.points()
    feasible = []
    for z in points:
        try:
            _, g_ineq = eval_g(problem, z)
        except (ArithmeticError, ValueError):
            continue
        if problem.p == 0 or g_ineq.max() <= 0.0:
            feasible.append(z)
    if not feasible:
        raise SamplingError(f"none of the {len(points)} sampled points is feasible")

    records = []
    for subset in subsets:
        sym_eig = beta1 = bbt = phi = math.inf
        worst = 1.0
        for z in feasible:
            out = _subset_sample(problem, z, subset)
            if out is None:
                sym_eig, worst = min(sym_eig, -math.inf), math.inf
                continue
            s, b1, bb, ph, c = out
            sym_eig, beta1, bbt, phi = min(sym_eig, s), min(beta1, b1), min(bbt, bb), min(phi, ph)
            worst = max(worst, c)
        if math.isinf(beta1) and beta1 > 0:
            beta2 = math.inf
        else:
            beta2 = 0.5 * beta1 * bbt
        passed = sym_eig > 0 and worst < COND_MAX
        records.append(SubsetRecord(subset, len(feasible), sym_eig, beta1, beta2, phi, worst, passed))
    return AssumptionReport(records, samples_drawn=len(points), samples_rejected=len(points) - len(feasible))


def iss_radius(kappa1, kappa2, d_norm_sq, beta1, beta2, phi):
    """``kappa1 |d|^2 / (beta2 phi min(kappa1 beta1 / 2, kappa2))``."""
    if d_norm_sq == 0:
        return 0.0
    if not (beta2 > 0 and phi > 0 and beta1 > 0):
        raise CapabilityError("constants must be positive to bound the sublevel set")
    if math.isinf(beta2):
        return 0.0
    return kappa1 * d_norm_sq / (beta2 * phi * min(0.5 * kappa1 * beta1, kappa2))


def iss_bound(problem, gains: GainConfig, report: AssumptionReport) -> float:
    """Squared-gradient threshold outside which the sublevel sets of f are invariant."""
    if not report.passed:
        raise CapabilityError("assumption report does not pass")
    d = np.concatenate([problem.d_eq, problem.d_ineq])
    return iss_radius(gains.kappa1, gains.kappa2, float(d @ d), report.beta1, report.beta2, report.phi)
