"""Switching law: adds boundary constraints immediately, removes them under a dwell guard."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .activeset import DEFAULT_TOL_ACTIVE, ActiveSet, active_indices
from .dynamics import GainConfig, subsystem_field
from .errors import StructuralError
from .problem import eval_g, jac_g

DEFAULT_TOL_REMOVAL = 1e-10
DEFAULT_DWELL = 0.1


@dataclass(frozen=True)
class SwitchEvent:
    time: float
    kind: str  # "add" | "remove"
    index: int
    sigma_before: ActiveSet
    sigma_after: ActiveSet

    def to_dict(self):
        return {"t": self.time, "kind": self.kind, "index": self.index, "sigma_after": list(self.sigma_after)}

    @classmethod
    def from_dict(cls, obj):
        after = ActiveSet(obj["sigma_after"])
        idx = int(obj["index"])
        before = after.remove(idx) if obj["kind"] == "add" else after.add(idx)
        return cls(float(obj["t"]), obj["kind"], idx, before, after)


@dataclass
class SwitchState:
    sigma: ActiveSet = field(default_factory=ActiveSet)
    t_last_removal: float = -math.inf
    removal_count: int = 0
    addition_count: int = 0
    event_log: List[SwitchEvent] = field(default_factory=list)
    pending_removal: bool = False

    @property
    def switch_count(self):
        return self.removal_count + self.addition_count

    def _record(self, t, kind, index, after):
        self.event_log.append(SwitchEvent(float(t), kind, int(index), self.sigma, after))
        self.sigma = after
        if kind == "add":
            self.addition_count += 1
        else:
            self.removal_count += 1
            self.t_last_removal = float(t)


def try_additions(problem, t, z, state: SwitchState, gains: GainConfig = GainConfig(),
                  tol_active=DEFAULT_TOL_ACTIVE, tol_removal=DEFAULT_TOL_REMOVAL, g_ineq=None):
    """Add every boundary index whose constraint would grow along the current flow.

    Repeats until no index fires, since each addition changes the flow. An
    index is added when its rate is ``>= -tol_removal``, the complement of
    the removal test, so the two rules never disagree on the same flow.
    """
    if problem.p == 0:
        return state
    z = np.asarray(z, dtype=float)
    if g_ineq is None:
        _, g_ineq = eval_g(problem, z)
    if g_ineq.max() < -tol_active:
        return state
    boundary = active_indices(problem, z, tol_active, g_ineq=g_ineq)
    candidates = [i for i in boundary if i not in state.sigma]
    if not candidates:
        return state
    jac = jac_g(problem, z, "inequality")
    changed = True
    while changed:
        changed = False
        h = subsystem_field(problem, z, state.sigma, gains)
        for i in candidates:
            if i in state.sigma:
                continue
            if jac[i] @ h >= -tol_removal:
                after = state.sigma.add(i)
                if problem.m + len(after) > problem.n:
                    raise StructuralError(
                        f"adding constraint {i} at t={t:.6g} would activate {problem.m + len(after)} "
                        f"constraints in {problem.n} variables"
                    )
                state._record(t, "add", i, after)
                changed = True
                break
    return state


def removal_rates(problem, z, sigma, gains: GainConfig = GainConfig()):
    """Rate of each active inequality along the flow with that index dropped."""
    jac = jac_g(problem, z, "inequality")
    return {i: float(jac[i] @ subsystem_field(problem, z, sigma.remove(i), gains)) for i in sigma}


def try_removals(problem, t, z, state: SwitchState, gains: GainConfig = GainConfig(),
                 delta_t=DEFAULT_DWELL, tol_removal=DEFAULT_TOL_REMOVAL, check_pending=False):
    """Drop at most one active index whose constraint would decrease once released.

    Removals need ``t > T_s + delta_t`` where ``T_s`` is the previous removal
    time. With ``check_pending`` the rates are evaluated even when the dwell
    guard blocks, and ``state.pending_removal`` reports a blocked candidate.
    """
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    state.pending_removal = False
    if not state.sigma:
        return state
    dwell_ok = t > state.t_last_removal + delta_t
    if not dwell_ok and not check_pending:
        return state
    z = np.asarray(z, dtype=float)
    jac = jac_g(problem, z, "inequality")
    for i in state.sigma:
        rate = jac[i] @ subsystem_field(problem, z, state.sigma.remove(i), gains)
        if rate < -tol_removal:
            if dwell_ok:
                state._record(t, "remove", i, state.sigma.remove(i))
            else:
                state.pending_removal = True
            return state
    return state


def dwell_time_audit(events, horizon, p, delta_t):
    """Count switches in the open window ``(tau, t)`` against ``p + 2 (t - tau) / delta_t``."""
    tau, t = horizon
    if tau > t:
        raise ValueError("window start must not exceed its end")
    count = sum(1 for ev in events if tau < ev.time < t)
    bound = p + 2.0 * (t - tau) / delta_t
    return count, bound, count <= bound


def audit_event_log(events, p, delta_t):
    """Check the average dwell-time bound on every window spanned by two events.

    Windows are taken as the closure ``[t_i, t_j]``, the supremum over open
    windows, which is the tightest case. Also checks that consecutive
    removals are separated by more than ``delta_t``.
    """
    times = [ev.time for ev in events]
    if any(b < a for a, b in zip(times, times[1:])):
        return False
    for i in range(len(times)):
        for j in range(i, len(times)):
            if j - i + 1 > p + 2.0 * (times[j] - times[i]) / delta_t:
                return False
    removals = [ev.time for ev in events if ev.kind == "remove"]
    return all(b - a > delta_t for a, b in zip(removals, removals[1:]))


def events_to_jsonl(events) -> str:
    return "".join(json.dumps(ev.to_dict()) + "\n" for ev in events)


def events_from_jsonl(text):
    return [SwitchEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
