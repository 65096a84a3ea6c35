"""Command-line interface: ``phoct <subcommand> [options]``.

Exit codes: 0 success, 1 numeric failure or infeasible problem, 2 usage
error (bad flags, malformed files, unmet preconditions).
"""

import argparse
import json
import sys as _sys
from pathlib import Path

import numpy as np

from . import io
from .builtins import NAMES, builtin_system
from .core import energy_balance_residual, validate_system
from .errors import ConstraintError, DecompositionError, PreconditionError, StructureError
from .ocp import OCPProblem, solve_ocp, solve_time_optimal
from .pmp import integrate_adjoint, pmp_consistency, solve_steady_state, verify_steady_kkt
from .sim import cost_supplied_energy, cost_via_balance, default_grid, simulate
from .spectral import decompose, decomposition_report, kernel_geometry
from .turnpike import horizon_sweep

DEFAULTS = {
    "x0": None,
    "xt": None,
    "horizon": None,
    "horizons": None,
    "grid": None,
    "density": 100.0,
    "eps_reg": 0.0,
    "eps": 0.1,
    "seed": 0,
    "method": "ipm",
    "control": None,
    "anchor": None,
    "step": 1e-2,
    "t_cap": 200.0,
    "workers": 1,
}


class UsageError(Exception):
    pass


def _floats(text, field):
    if isinstance(text, (list, tuple)):
        vals = text
    else:
        vals = [v for v in str(text).replace(";", ",").split(",") if v.strip()]
    try:
        return np.array([float(v) for v in vals])
    except ValueError:
        raise UsageError(f"{field}: expected comma-separated numbers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--system", metavar="FILE", help="system JSON file")
    src.add_argument("--builtin", metavar="NAME", help=f"builtin example: {', '.join(NAMES)}")
    common.add_argument("--problem", metavar="FILE", help="problem JSON file (solve)")
    common.add_argument("--config", metavar="FILE", help="JSON file with option values; flags win")
    common.add_argument("--box", type=float, help="symmetric input bound for builtin systems")
    common.add_argument("--x0", help="initial state, comma separated")
    common.add_argument("--xt", help="target state, comma separated")
    common.add_argument("--horizon", type=float, help="horizon T")
    common.add_argument("--horizons", help="comma-separated horizons (sweep)")
    common.add_argument("--grid", type=int, help="number of grid intervals N")
    common.add_argument("--density", type=float, help="intervals per unit time (sweep, default 100)")
    common.add_argument("--eps-reg", type=float, help="control regularization weight")
    common.add_argument("--eps", type=float, help="turnpike distance threshold (default 0.1)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="random seed (simulate --control random)")
    common.add_argument("--method", choices=["ipm", "apg"], help="OCP solver")
    common.add_argument("--control", help="simulate: constant control values or 'random'")
    common.add_argument("--anchor", help="steady: state to project onto the optimal steady set")
    common.add_argument("--step", type=float, help="timeopt: grid step (default 0.01)")
    common.add_argument("--t-cap", type=float, help="timeopt: largest horizon tried (default 200)")
    common.add_argument("--workers", type=int, help="sweep: concurrent horizon solves")
    common.add_argument("--adjoint", action="store_true", default=None,
                        help="solve: append switching functions to the CSV")
    for key in ("struct", "imag", "eq", "stat"):
        common.add_argument(f"--tol-{key}", type=float, dest=f"tol_{key}")

    parser = argparse.ArgumentParser(prog="phoct", description="Energy-optimal control of linear pH systems.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in [
        ("validate", "check structural properties"),
        ("decompose", "conservative/dissipative subspace decomposition"),
        ("simulate", "simulate a ZOH control"),
        ("solve", "solve the energy-optimal transfer"),
        ("timeopt", "minimum-time transfer of a lossless system"),
        ("steady", "optimal steady state and KKT residuals"),
        ("sweep", "turnpike statistics over several horizons"),
    ]:
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def merge_config(args):
    """Fill options absent from the command line from ``--config``, then defaults."""
    cfg = {}
    if args.config:
        try:
            cfg = io.read_json(args.config)
        except OSError as exc:
            raise UsageError(f"config: cannot read {args.config} ({exc.strerror})") from None
        if not isinstance(cfg, dict):
            raise UsageError("config: expected a JSON object")
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if attr in ("command", "config") or not hasattr(args, attr):
            raise UsageError(f"config.{key}: unknown option")
        if getattr(args, attr) is None:
            if attr in ("x0", "xt", "horizons", "anchor") and isinstance(value, list):
                value = ",".join(str(v) for v in value)
            setattr(args, attr, value)
    if args.system and args.builtin:
        raise UsageError("system: give either --system or --builtin, not both")
    for key, value in DEFAULTS.items():
        if getattr(args, key) is None:
            setattr(args, key, value)
    if args.adjoint is None:
        args.adjoint = False
    return args


def load_system(args):
    if args.builtin:
        try:
            return builtin_system(args.builtin, box=args.box)
        except KeyError as exc:
            raise UsageError(f"builtin: {exc.args[0]}") from None
    if args.system:
        try:
            return io.read_system(args.system), {}
        except OSError as exc:
            raise UsageError(f"system: cannot read {args.system} ({exc.strerror})") from None
    raise UsageError("system: one of --system or --builtin is required")


def _state(args, key, defaults, n, field):
    text = getattr(args, key)
    if text is None:
        if field in defaults:
            return defaults[field]
        raise UsageError(f"{key}: required")
    v = _floats(text, key)
    if v.size != n:
        raise UsageError(f"{key}: expected {n} values, got {v.size}")
    return v


def _out(args):
    if not args.out:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, doc, name):
    out = _out(args)
    text = io.dumps(doc)
    if out is not None:
        (out / name).write_text(text + "\n")
    print(text)


def cmd_validate(args):
    sys, _ = load_system(args)
    rep = validate_system(sys, tol_struct=args.tol_struct)
    _emit(args, rep.to_dict(), "validation.json")
    return 0 if rep.passed else 1


def cmd_decompose(args):
    sys, _ = load_system(args)
    kw = {} if args.tol_imag is None else {"tol_imag": args.tol_imag}
    try:
        dec = decompose(sys, **kw)
    except DecompositionError as exc:
        _emit(args, {"error": str(exc), "residuals": exc.residuals}, "decomposition.json")
        return 1
    geom = kernel_geometry(sys)
    doc = decomposition_report(dec)
    doc["kernel"] = {"basis": geom.K, "dim": geom.dim, "c1": geom.c1, "c2": geom.c2,
                     "degenerate": geom.degenerate}
    _emit(args, doc, "decomposition.json")
    return 0


def cmd_simulate(args):
    sys, defaults = load_system(args)
    x0 = _state(args, "x0", defaults, sys.n, "x0")
    if args.horizon is None:
        raise UsageError("horizon: required")
    N = args.grid or default_grid(args.horizon)
    h = args.horizon / N
    if args.control in (None, "zero"):
        U = np.zeros((sys.m, N))
    elif args.control == "random":
        rng = np.random.default_rng(args.seed)
        pick = rng.integers(0, 2, size=(sys.m, N))
        U = np.where(pick == 1, sys.u_hi[:, None], sys.u_lo[:, None])
    else:
        u = _floats(args.control, "control")
        if u.size != sys.m:
            raise UsageError(f"control: expected {sys.m} values, got {u.size}")
        U = np.repeat(u[:, None], N, axis=1)
    try:
        traj = simulate(sys, x0, U, h)
    except ConstraintError as exc:
        raise UsageError(f"control: {exc}") from None
    out = _out(args)
    geom = kernel_geometry(sys)
    if out is not None:
        io.write_trajectory_csv(out / "trajectory.csv", sys, traj, geom)
    doc = {"T": traj.T, "N": traj.N, "cost_supply": cost_supplied_energy(traj),
           "cost_via_balance": cost_via_balance(sys, traj),
           "energy_balance_residual": energy_balance_residual(sys, traj), "x_final": traj.X[:, -1]}
    _emit(args, doc, "summary.json")
    return 0


def _problem(args):
    if args.problem:
        try:
            return io.read_problem(args.problem)
        except OSError as exc:
            raise UsageError(f"problem: cannot read {args.problem} ({exc.strerror})") from None
    sys, defaults = load_system(args)
    x0 = _state(args, "x0", defaults, sys.n, "x0")
    xt = _state(args, "xt", defaults, sys.n, "x_target")
    if args.horizon is None:
        raise UsageError("horizon: required")
    kw = {}
    if args.tol_eq is not None:
        kw["tol_eq_rel"] = args.tol_eq
    if args.tol_stat is not None:
        kw["tol_stat"] = args.tol_stat
    return OCPProblem(sys, x0, args.horizon, args.grid, x_target=xt, eps_reg=args.eps_reg, **kw)


def cmd_solve(args):
    prob = _problem(args)
    sol = solve_ocp(prob, method=args.method)
    sys = prob.sys
    geom = kernel_geometry(sys)
    doc = sol.summary()
    S = None
    if args.adjoint or sol.converged:
        adj = integrate_adjoint(sys, sol.traj, sol.multiplier_terminal)
        doc["pmp_violation_fraction"] = pmp_consistency(sys, sol.traj, adj).violation_fraction
        S = adj.S if args.adjoint else None
    out = _out(args)
    if out is not None:
        io.write_trajectory_csv(out / "trajectory.csv", sys, sol.traj, geom, switching=S)
    _emit(args, doc, "summary.json")
    return 0 if sol.converged else 1


def cmd_timeopt(args):
    sys, defaults = load_system(args)
    x0 = _state(args, "x0", defaults, sys.n, "x0")
    xt = _state(args, "xt", defaults, sys.n, "x_target")
    kw = {} if args.tol_eq is None else {"tol_rel": args.tol_eq}
    res = solve_time_optimal(sys, x0, xt, h=args.step, T_cap=args.t_cap, **kw)
    doc = {"status": res.status, "T_min": res.T_min, "gap": res.gap, "bracket": list(res.bracket),
           "evaluations": [list(e) for e in res.evaluations]}
    if res.traj is not None:
        doc["cost_supply"] = cost_supplied_energy(res.traj)
        out = _out(args)
        if out is not None:
            io.write_trajectory_csv(out / "trajectory.csv", sys, res.traj, kernel_geometry(sys))
    _emit(args, doc, "timeopt.json")
    return 0 if res.status == "reached" else 1


def cmd_steady(args):
    sys, _ = load_system(args)
    anchor = None if args.anchor is None else _floats(args.anchor, "anchor")
    if anchor is not None and anchor.size != sys.n:
        raise UsageError(f"anchor: expected {sys.n} values, got {anchor.size}")
    sss = solve_steady_state(sys, anchor=anchor)
    kkt = verify_steady_kkt(sys, sss)
    _emit(args, {"steady_state": sss.to_dict(), "kkt": kkt}, "steady.json")
    return 0 if kkt["passed"] else 1


def cmd_sweep(args):
    sys, defaults = load_system(args)
    x0 = _state(args, "x0", defaults, sys.n, "x0")
    xt = _state(args, "xt", defaults, sys.n, "x_target")
    if args.horizons is None:
        raise UsageError("horizons: required")
    Ts = _floats(args.horizons, "horizons")
    if Ts.size == 0 or np.any(Ts <= 0):
        raise UsageError("horizons: need positive values")
    rep = horizon_sweep(sys, x0, xt, Ts, eps=args.eps, density=args.density,
                        method=args.method, workers=args.workers)
    out = _out(args)
    if out is not None:
        geom = kernel_geometry(sys)
        for e in rep.entries:
            io.write_trajectory_csv(out / f"trajectory_T{e.T:g}.csv", sys, e.solution.traj, geom)
        io.write_json(out / "sweep.json", rep.to_dict())
    print(rep.table())
    print(json.dumps(io._clean({"reference_T": rep.reference_T, "C_emp": rep.C_emp,
                                "bounded": rep.bounded, "bounded_after_ref": rep.bounded_after_ref})))
    return 0 if rep.all_converged else 1


COMMANDS = {
    "validate": cmd_validate,
    "decompose": cmd_decompose,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "timeopt": cmd_timeopt,
    "steady": cmd_steady,
    "sweep": cmd_sweep,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        args = merge_config(args)
        return COMMANDS[args.command](args)
    except (UsageError, io.ConfigError, PreconditionError, StructureError) as exc:
        print(f"phoct {args.command}: error: {exc}", file=_sys.stderr)
        return 2


def main():
    _sys.exit(run())
