"""Command-line driver: ``switched-kkt {solve,check,verify}``.

Exit codes: 0 success, 1 certification failure, 2 input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certify import (
    KKTReport,
    Sampler,
    check_assumption1,
    default_subsets,
    enumerate_subsets,
    kkt_residual,
    verdict_for,
)
from .dynamics import GainConfig
from .errors import (
    ChatterGuard,
    FormatError,
    InfeasibleStart,
    IntegrationFailure,
    InvalidProblem,
    NumericalError,
    SamplingError,
    StructuralError,
)
from .integrate import SolverConfig, solve
from .problem import BUILTINS, builtin_problem, hvac_gain_condition, load_qp_file, qp_transform
from .switchlaw import audit_event_log, events_to_jsonl

EXIT_OK, EXIT_CERT, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
VERIFY_TOL = 1e-9
ENUM_MAX_P = 12

DEFAULT_Z0 = {
    "qp-paper": (-0.25, 0.0),
    "rosenbrock": (1.0, -1.0),
    "hvac-paper": (23.0, 23.0, 1.0),
}

# options whose values may start with '-' (e.g. "--z0 -0.25,0")
_VALUE_FLAGS = ("--z0", "--box")


class InputError(Exception):
    pass


def _normalise_argv(argv):
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def _floats(text, what):
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise InputError(f"{what}: {exc}") from exc
    if not vals or not all(math.isfinite(v) for v in vals):
        raise InputError(f"{what} needs finite comma-separated numbers")
    return vals


def _add_problem_args(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in problem")
    group.add_argument("--qp", metavar="FILE", help="QP in JSON form (keys L, K, B_eq, c_eq, B_ineq, c_ineq)")


def _load_problem(selector):
    """``selector`` is ``{"builtin": name}`` or ``{"qp": path}``."""
    if selector.get("builtin"):
        return builtin_problem(selector["builtin"])
    if selector.get("qp"):
        try:
            return qp_transform(load_qp_file(selector["qp"]), name=Path(selector["qp"]).stem)
        except OSError as exc:
            raise InputError(f"cannot read {selector['qp']}: {exc.strerror}") from exc
    raise InputError("no problem selected")


def _selector(args):
    if args.builtin:
        return {"builtin": args.builtin}
    return {"qp": str(Path(args.qp).resolve())}


def build_parser():
    parser = argparse.ArgumentParser(prog="switched-kkt", description="Switched gradient-flow optimisation solver.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="integrate the switched dynamics and certify the end point")
    _add_problem_args(p_solve)
    p_solve.add_argument("--z0", help="initial point, comma separated (built-ins have defaults)")
    p_solve.add_argument("--kappa1", type=float, default=1.0)
    p_solve.add_argument("--kappa2", type=float, default=1.0)
    p_solve.add_argument("--dwell", type=float, default=0.1, help="minimum time between removals")
    p_solve.add_argument("--step", type=float, default=1e-3, help="RK4 step")
    p_solve.add_argument("--tmax", type=float, default=50.0)
    p_solve.add_argument("--tol-kkt", type=float, default=1e-6)
    p_solve.add_argument("--tol-stationary", type=float, default=SolverConfig.tol_stationary)
    p_solve.add_argument("--max-switches", type=int, default=10_000)
    p_solve.add_argument("--out", default=".", help="output directory")

    p_check = sub.add_parser("check", help="sample positivity of B over a box")
    _add_problem_args(p_check)
    p_check.add_argument("--box", help="lo0,hi0,lo1,hi1,... (built-ins have defaults)")
    p_check.add_argument("--samples", type=int, default=1000)
    p_check.add_argument("--grid", action="store_true", help="tensor grid instead of uniform draws")
    p_check.add_argument("--out", default=".")

    p_verify = sub.add_parser("verify", help="recompute the residuals stored in a report.json")
    p_verify.add_argument("report")
    return parser


def _solver_config(args):
    try:
        return SolverConfig(
            gains=GainConfig(args.kappa1, args.kappa2),
            delta_t=args.dwell,
            step=args.step,
            t_max=args.tmax,
            tol_stationary=args.tol_stationary,
            max_switches=args.max_switches,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _config_dict(cfg):
    return {
        "kappa1": cfg.gains.kappa1,
        "kappa2": cfg.gains.kappa2,
        "delta_t": cfg.delta_t,
        "step": cfg.step,
        "t_max": cfg.t_max,
        "tol_active": cfg.tol_active,
        "tol_event": cfg.tol_event,
        "tol_stationary": cfg.tol_stationary,
        "stall_window": cfg.stall_window,
        "max_switches": cfg.max_switches,
    }


def _write_run(out, trajectory):
    out.mkdir(parents=True, exist_ok=True)
    trajectory.to_csv(out / "trajectory.csv")
    (out / "events.jsonl").write_text(events_to_jsonl(trajectory.events))


def cmd_solve(args):
    selector = _selector(args)
    problem = _load_problem(selector)
    if args.z0 is not None:
        z0 = _floats(args.z0, "--z0")
    elif args.builtin in DEFAULT_Z0:
        z0 = list(DEFAULT_Z0[args.builtin])
    else:
        raise InputError("--z0 is required for QP files")
    if len(z0) != problem.n:
        raise InputError(f"--z0 has {len(z0)} entries, problem has n={problem.n}")
    cfg = _solver_config(args)
    out = Path(args.out)
    try:
        traj, report = solve(problem, z0, cfg, tol_kkt=args.tol_kkt)
    except IntegrationFailure as exc:
        _write_run(out, exc.trajectory)
        print(f"error: integration failed: {exc.cause}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_run(out, traj)
    doc = {
        "problem": selector,
        "z0": [float(v) for v in z0],
        "config": _config_dict(cfg),
        "terminal": traj.terminal,
        "t_final": float(traj.t[-1]),
        "switches": len(traj.events),
        "dwell_audit": audit_event_log(traj.events, problem.p, cfg.delta_t),
        "kkt": report.to_dict(),
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    z = ", ".join(f"{v:.6g}" for v in report.z_star)
    print(f"{problem.name}: z* = ({z}), active = {list(report.active)}, t = {traj.t[-1]:.4g} ({traj.terminal})")
    print(f"verdict: {report.verdict}")
    return EXIT_OK if report.passed else EXIT_CERT


def _fmt(v):
    return f"{v:12.5g}" if isinstance(v, float) else f"{v!s:>12}"


def cmd_check(args):
    selector = _selector(args)
    problem = _load_problem(selector)
    if args.box is not None:
        vals = _floats(args.box, "--box")
        if len(vals) != 2 * problem.n:
            raise InputError(f"--box needs {2 * problem.n} numbers for n={problem.n}")
        box = list(zip(vals[::2], vals[1::2]))
    elif "box" in problem.meta:
        box = problem.meta["box"]
    else:
        raise InputError("--box is required for QP files")
    seed = int(os.environ.get("SWITCHED_KKT_SEED", "0"))
    try:
        sampler = Sampler(tuple(box), args.samples, seed, "grid" if args.grid else "uniform")
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    subsets = enumerate_subsets(problem) if problem.p <= ENUM_MAX_P else default_subsets(problem)
    report = check_assumption1(problem, sampler, subsets)
    doc = report.to_dict()
    doc["problem"] = selector
    doc["seed"] = seed
    if "hvac" in problem.meta:
        holds, margin = hvac_gain_condition(problem.meta["hvac"])
        doc["gain_condition"] = {"holds": holds, "margin": margin}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "assumption_report.json").write_text(json.dumps(doc, indent=2) + "\n")

    cols = ("subset", "min_sym_eig", "beta1", "beta2", "phi", "cond", "pass")
    print(" ".join(f"{c:>12}" for c in cols))
    for r in report.records:
        row = (str(list(r.subset)), r.min_sym_eig, r.beta1_est, r.beta2_est, r.phi_est, r.worst_condition, r.passed)
        print(" ".join(_fmt(v) for v in row))
    print(f"{report.samples_drawn - report.samples_rejected} feasible of {report.samples_drawn} samples")
    ok = report.passed and doc.get("gain_condition", {}).get("holds", True)
    return EXIT_OK if ok else EXIT_CERT


def _close(a, b):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= VERIFY_TOL


def cmd_verify(args):
    try:
        doc = json.loads(Path(args.report).read_text())
        stored = KKTReport.from_dict(doc["kkt"])
        problem = _load_problem(doc["problem"])
    except OSError as exc:
        raise InputError(f"cannot read report: {exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"report does not match the schema: {exc!r}") from exc
    if stored.z_star.size != problem.n or stored.lambda_star.size != problem.m or stored.nu_star.size != problem.p:
        raise InputError("stored vectors do not match the problem dimensions")
    fresh = kkt_residual(problem, stored.z_star, stored.lambda_star, stored.nu_star)
    bad = [k for k, v in fresh._asdict().items() if not _close(v, getattr(stored, k))]
    if verdict_for(fresh, stored.second_order_eigmin, stored.tol_kkt) != stored.verdict:
        bad.append("verdict")
    for key in bad:
        print(f"mismatch: {key}", file=sys.stderr)
    if bad:
        return EXIT_CERT
    print(f"verified: {stored.verdict}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "verify": cmd_verify}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_normalise_argv(argv))
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (InputError, InfeasibleStart, FormatError, InvalidProblem, SamplingError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ChatterGuard, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
