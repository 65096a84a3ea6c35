"""JSON system/problem files, trajectory CSV and JSON reports.

System file::

    {"n": 3, "m": 1, "J": [[...], ...], "R": [[...]], "Q": [[...]],
     "B": [[...]], "u_lo": [...], "u_hi": [...]}

Problem file: either a system file with the extra keys below, or
``{"system": <system object or path>, ...}`` or ``{"builtin": "msd-r1", ...}``::

    "x0": [...], "T": 30.0, "N": 3000, "eps_reg": 0.0,
    "terminal": {"target": [...]} | {"x_ref": [...], "W": [[...]]},
    "tolerances": {"tol_eq_rel": 1e-6, "tol_stat": 1e-6}

Floats are written with Python's shortest round-trip representation, so a
system written and re-read is bit-identical.
"""

import json
import math
from pathlib import Path

import numpy as np

from .builtins import builtin_system
from .core import PHSystem, hamiltonian
from .errors import StructureError
from .ocp import OCPProblem
from .spectral import dist_to_kernel

SYSTEM_KEYS = ("J", "R", "Q", "B", "u_lo", "u_hi")


class ConfigError(ValueError):
    """Malformed input document; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2)


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from None


def _matrix(doc, key, shape=None):
    if key not in doc:
        raise ConfigError(key, "missing")
    try:
        a = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, "not a numeric array") from None
    if shape is not None and a.shape != shape:
        raise ConfigError(key, f"has shape {a.shape}, expected {shape}")
    return a


def system_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("system", "expected an object")
    B = _matrix(doc, "B")
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n, m = B.shape
    if "n" in doc and int(doc["n"]) != n:
        raise ConfigError("n", f"is {doc['n']} but B has {n} rows")
    if "m" in doc and int(doc["m"]) != m:
        raise ConfigError("m", f"is {doc['m']} but B has {m} columns")
    mats = {k: _matrix(doc, k, (n, n)) for k in ("J", "R", "Q")}
    lo = _matrix(doc, "u_lo", (m,))
    hi = _matrix(doc, "u_hi", (m,))
    try:
        return PHSystem(mats["J"], mats["R"], mats["Q"], B, lo, hi)
    except StructureError as exc:
        raise ConfigError("system", str(exc)) from None


def system_to_dict(sys):
    return sys.to_dict()


def write_system(path, sys):
    write_json(path, system_to_dict(sys))


def read_system(path):
    return system_from_dict(read_json(path))


def _vector(doc, key, n):
    v = _matrix(doc, key).reshape(-1)
    if v.shape != (n,):
        raise ConfigError(key, f"has length {v.size}, expected {n}")
    return v


def problem_from_dict(doc, base=None):
    """Build an :class:`OCPProblem` from a problem document.

    ``base`` resolves a relative ``"system"`` path.
    """
    defaults = {}
    if "builtin" in doc:
        try:
            sys, defaults = builtin_system(doc["builtin"])
        except KeyError as exc:
            raise ConfigError("builtin", str(exc)) from None
    elif "system" in doc:
        s = doc["system"]
        if isinstance(s, str):
            p = Path(s)
            if base is not None and not p.is_absolute():
                p = Path(base) / p
            sys = read_system(p)
        else:
            sys = system_from_dict(s)
    else:
        sys = system_from_dict(doc)
    n = sys.n
    x0 = _vector(doc, "x0", n) if "x0" in doc else defaults.get("x0")
    if x0 is None:
        raise ConfigError("x0", "missing")
    if "T" not in doc:
        raise ConfigError("T", "missing")
    kw = {}
    term = doc.get("terminal")
    if term is None:
        if "x_target" not in defaults:
            raise ConfigError("terminal", "missing")
        kw["x_target"] = defaults["x_target"]
    elif "target" in term:
        kw["x_target"] = _vector(term, "target", n)
    else:
        if "W" not in term:
            raise ConfigError("terminal", "needs 'target' or 'W' (with optional 'x_ref')")
        kw["W"] = _matrix(term, "W", (n, n))
        if "x_ref" in term:
            kw["x_ref"] = _vector(term, "x_ref", n)
    tol = doc.get("tolerances", {})
    for key in tol:
        if key not in ("tol_eq_rel", "tol_stat"):
            raise ConfigError(f"tolerances.{key}", "unknown tolerance")
    try:
        return OCPProblem(sys, x0, float(doc["T"]), doc.get("N"), eps_reg=float(doc.get("eps_reg", 0.0)),
                          **kw, **{k: float(v) for k, v in tol.items()})
    except (ValueError, TypeError) as exc:
        raise ConfigError("problem", str(exc)) from None


def read_problem(path):
    return problem_from_dict(read_json(path), base=Path(path).parent)


def problem_to_dict(prob):
    doc = {"system": system_to_dict(prob.sys), "x0": prob.x0, "T": prob.T, "N": prob.N,
           "eps_reg": prob.eps_reg,
           "tolerances": {"tol_eq_rel": prob.tol_eq_rel, "tol_stat": prob.tol_stat}}
    if prob.fixed_end:
        doc["terminal"] = {"target": prob.x_target}
    else:
        doc["terminal"] = {"x_ref": prob.x_ref, "W": prob.W}
    return _clean(doc)


def trajectory_rows(sys, traj, geom=None, switching=None):
    """Header and numeric rows of the trajectory table."""
    n, m, N = sys.n, sys.m, traj.N
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)]
    header += [f"y_{i + 1}" for i in range(m)] + ["H", "dist_ker"]
    if switching is not None:
        header += [f"s_{i + 1}" for i in range(m)]
    if N > 0:
        U = np.concatenate([traj.U, traj.U[:, -1:]], axis=1)
    else:
        U = np.zeros((m, 1))
    if geom is None or geom.degenerate:
        dist = np.zeros(N + 1)
    else:
        dist = dist_to_kernel(geom, traj.X)
    cols = [traj.t[None, :], traj.X, U, traj.Y, hamiltonian(sys, traj.X)[None, :], dist[None, :]]
    if switching is not None:
        cols.append(np.asarray(switching))
    return header, np.vstack(cols).T


def write_trajectory_csv(path, sys, traj, geom=None, switching=None):
    """Write one row per grid point; floats with 17 significant digits.

    The control column of the last row repeats the last interval's value.
    """
    header, rows = trajectory_rows(sys, traj, geom, switching)
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path):
    """Return ``(header, data)`` of a trajectory CSV."""
    with open(path) as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data
