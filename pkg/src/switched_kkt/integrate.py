"""Fixed-step RK4 integration of the switched system with constraint-crossing localisation."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .activeset import ActiveSet, active_indices
from .dynamics import GainConfig, subsystem_field
from .errors import (
    ChatterGuard,
    EvaluationError,
    InfeasibleStart,
    IntegrationFailure,
    NumericalError,
    StructuralError,
)
from .problem import eval_g
from .switchlaw import (
    DEFAULT_DWELL,
    DEFAULT_TOL_REMOVAL,
    SwitchEvent,
    SwitchState,
    try_additions,
    try_removals,
)

BISECTION_MAX_ITER = 64


@dataclass(frozen=True)
class SolverConfig:
    gains: GainConfig = GainConfig()
    delta_t: float = DEFAULT_DWELL
    step: float = 1e-3
    t_max: float = 50.0
    tol_active: float = 1e-9
    tol_event: float = 1e-10
    tol_stationary: float = 1e-8
    tol_invariance: float = 1e-6
    tol_removal: float = DEFAULT_TOL_REMOVAL
    stall_window: int = 50
    max_switches: int = 10_000

    def __post_init__(self):
        positive = ("delta_t", "step", "t_max", "tol_active", "tol_event", "tol_stationary",
                    "tol_invariance", "tol_removal")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if self.tol_event > self.tol_active:
            raise ValueError("tol_event must not exceed tol_active")
        if self.stall_window < 1 or self.max_switches < 0:
            raise ValueError("stall_window must be >= 1 and max_switches >= 0")


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray
    f: np.ndarray
    g_eq: np.ndarray
    g_ineq: np.ndarray
    sigma: List[ActiveSet]
    events: List[SwitchEvent]
    terminal: str  # "stationary" | "horizon" | "error"

    def __len__(self):
        return self.t.size

    @property
    def z_final(self):
        return self.z[-1]

    @property
    def sigma_final(self):
        return self.sigma[-1]

    def active_residual(self):
        """Per-sample ``||g_A||_inf`` for the active set recorded with the sample."""
        out = np.empty(self.t.size)
        for k, s in enumerate(self.sigma):
            parts = [np.abs(self.g_eq[k])]
            if s:
                parts.append(np.abs(self.g_ineq[k, list(s)]))
            stacked = np.concatenate(parts)
            out[k] = stacked.max() if stacked.size else 0.0
        return out

    def to_csv(self, target=None):
        """Write ``t,z0..,f,geq0..,gineq0..,sigma`` rows; returns the text when no target given."""
        n, m, p = self.z.shape[1], self.g_eq.shape[1], self.g_ineq.shape[1]
        header = ["t"] + [f"z{i}" for i in range(n)] + ["f"]
        header += [f"geq{i}" for i in range(m)] + [f"gineq{i}" for i in range(p)] + ["sigma"]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for k in range(self.t.size):
            nums = [self.t[k], *self.z[k], self.f[k], *self.g_eq[k], *self.g_ineq[k]]
            row = [format(float(v), ".17g") for v in nums]
            row.append(";".join(str(i) for i in self.sigma[k]))
            buf.write(",".join(row) + "\n")
        text = buf.getvalue()
        if target is None:
            return text
        with open(target, "w", newline="") as fh:
            fh.write(text)
        return None


class _Recorder:
    def __init__(self, problem):
        self.problem = problem
        self.rows = []

    def add(self, t, z, g_eq, g_ineq, sigma):
        self.rows.append((t, z.copy(), float(self.problem.objective(z)), g_eq, g_ineq, sigma))

    def relabel(self, sigma):
        # samples carry the active set used for the step that leaves them
        self.rows[-1] = self.rows[-1][:5] + (sigma,)

    def build(self, events, terminal):
        prob = self.problem
        rows = self.rows
        return Trajectory(
            t=np.array([r[0] for r in rows]),
            z=np.array([r[1] for r in rows]).reshape(len(rows), prob.n),
            f=np.array([r[2] for r in rows]),
            g_eq=np.array([r[3] for r in rows]).reshape(len(rows), prob.m),
            g_ineq=np.array([r[4] for r in rows]).reshape(len(rows), prob.p),
            sigma=[r[5] for r in rows],
            events=list(events),
            terminal=terminal,
        )


def rk4_step(problem, t, z, active, gains: GainConfig, h, k1=None):
    """Classical RK4 step with the active set frozen over all four stages."""
    z = np.asarray(z, dtype=float)
    if k1 is None:
        k1 = subsystem_field(problem, z, active, gains)
    k2 = subsystem_field(problem, z + 0.5 * h * k1, active, gains)
    k3 = subsystem_field(problem, z + 0.5 * h * k2, active, gains)
    k4 = subsystem_field(problem, z + h * k3, active, gains)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def locate_crossing(problem, t, z_pre, z_post, active, gains: GainConfig, i, tol_event, step, k1=None):
    """Bisect the sub-step length until ``|g_ineq,i| <= tol_event``.

    Each trial state is an RK4 sub-step of length ``tau`` from ``z_pre``,
    so the returned state lies on the discrete flow. Returns ``(t_cross, z_cross)``.
    """
    z_pre = np.asarray(z_pre, dtype=float)
    g_pre = eval_g(problem, z_pre)[1][i]
    g_post = eval_g(problem, z_post)[1][i]
    if g_pre > tol_event or g_post < 0.0:
        raise ValueError(
            f"constraint {i} does not cross zero over the step (g_pre={g_pre:.3g}, g_post={g_post:.3g})"
        )
    if g_pre >= -tol_event:
        return t, z_pre.copy()
    if g_post <= tol_event:
        return t + step, np.asarray(z_post, dtype=float).copy()
    if k1 is None:
        k1 = subsystem_field(problem, z_pre, active, gains)
    lo, hi = 0.0, step
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        z_mid = rk4_step(problem, t, z_pre, active, gains, mid, k1=k1)
        g_mid = eval_g(problem, z_mid)[1][i]
        if abs(g_mid) <= tol_event:
            return t + mid, z_mid
        if g_mid < 0.0:
            lo = mid
        else:
            hi = mid
    raise NumericalError(f"bisection for constraint {i} did not reach {tol_event:g} in {BISECTION_MAX_ITER} halvings")


def solve(problem, z0, config: Optional[SolverConfig] = None, certify_result=True, tol_kkt=1e-6):
    """Integrate from ``z0`` until stationary or ``t_max``.

    Returns ``(trajectory, report)``; ``report`` is None when
    ``certify_result`` is false. Numerical failures are re-raised as
    :class:`IntegrationFailure` carrying the samples recorded so far.
    """
    cfg = config or SolverConfig()
    gains = cfg.gains
    z = np.asarray(z0, dtype=float).reshape(-1).copy()
    g_eq, g_ineq = eval_g(problem, z)
    if problem.p and g_ineq.max() > cfg.tol_active:
        worst = int(np.argmax(g_ineq))
        raise InfeasibleStart(f"inequality {worst} is violated at the initial point (g = {g_ineq[worst]:.6g})")

    state = SwitchState(sigma=active_indices(problem, z, cfg.tol_active, g_ineq=g_ineq))
    state.sigma.validate(problem.p, problem.m, problem.n)
    rec = _Recorder(problem)
    t = 0.0
    rec.add(t, z, g_eq, g_ineq, state.sigma)
    terminal = "horizon"

    def switch_and_field(t, z, g_ineq):
        try_additions(problem, t, z, state, gains, cfg.tol_active, cfg.tol_removal, g_ineq=g_ineq)
        h = subsystem_field(problem, z, state.sigma, gains)
        quiet = np.max(np.abs(h), initial=0.0) <= cfg.tol_stationary
        before = state.removal_count
        try_removals(problem, t, z, state, gains, cfg.delta_t, cfg.tol_removal, check_pending=quiet)
        if state.removal_count != before:
            h = subsystem_field(problem, z, state.sigma, gains)
            quiet = False
        if state.switch_count > cfg.max_switches:
            raise ChatterGuard(f"more than {cfg.max_switches} switches by t={t:.6g}")
        return h, quiet and not state.pending_removal

    try:
        h, quiet = switch_and_field(t, z, g_ineq)
        rec.relabel(state.sigma)
        quiet_steps = 1 if quiet else 0
        while True:
            if quiet_steps >= cfg.stall_window:
                terminal = "stationary"
                break
            if t >= cfg.t_max * (1.0 - 1e-14):
                break
            dt = min(cfg.step, cfg.t_max - t)
            z_new = rk4_step(problem, t, z, state.sigma, gains, dt, k1=h)
            g_eq_new, g_ineq_new = eval_g(problem, z_new)
            crossing = [i for i in range(problem.p) if i not in state.sigma and g_ineq_new[i] > cfg.tol_event]
            if crossing:
                best = None
                for i in crossing:
                    found = locate_crossing(problem, t, z, z_new, state.sigma, gains, i, cfg.tol_event, dt, k1=h)
                    if best is None or found[0] < best[0]:
                        best = found
                t_next, z_next = best
                if t_next == t:
                    # already on the boundary; the switching law declined to add it
                    t_next, z_next = t + dt, z_new
                g_eq, g_ineq = eval_g(problem, z_next)
            else:
                t_next, z_next, g_eq, g_ineq = t + dt, z_new, g_eq_new, g_ineq_new
            t, z = t_next, z_next
            rec.add(t, z, g_eq, g_ineq, state.sigma)
            h, quiet = switch_and_field(t, z, g_ineq)
            rec.relabel(state.sigma)
            quiet_steps = quiet_steps + 1 if quiet else 0
    except (NumericalError, EvaluationError, StructuralError) as exc:
        raise IntegrationFailure(exc, rec.build(state.event_log, "error")) from exc

    trajectory = rec.build(state.event_log, terminal)
    report = None
    if certify_result:
        from .certify import certify_point

        report = certify_point(problem, trajectory.z_final, trajectory.sigma_final, tol_kkt=tol_kkt)
    return trajectory, report
