"""Costates, switching functions, singular controls and optimal steady states.

For the supplied-energy problem the control Hamiltonian is
``lambda0 u^T B^T Q x + lambda^T (A x + B u)`` with ``A = (J - R) Q``, so::

    dlambda/dt = -lambda0 Q B u + Q (J + R) lambda
    s(t)       = B^T (lambda0 Q x + lambda)

and a minimizing control sits at ``u_lo`` where ``s > 0`` and at ``u_hi``
where ``s < 0``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space

from .core import psd_sqrt
from .errors import PreconditionError
from .qp import solve_qp
from .sim import zoh


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    """Costate samples ``L`` (n, N+1) and switching samples ``S`` (m, N+1)."""

    lambda0: float
    t: np.ndarray
    L: np.ndarray
    S: np.ndarray


def switching(sys, X, L, lambda0=1.0):
    """``B^T (lambda0 Q x + lambda)`` column-wise."""
    return sys.B.T @ (lambda0 * (sys.Q @ X) + L)


def adjoint_matrix(sys):
    """Generator ``Q (J + R)`` of the homogeneous costate flow."""
    return sys.Q @ (sys.J + sys.R)


def integrate_adjoint(sys, traj, lambda_T, lambda0=1.0):
    """Integrate the costate backward from ``lambda(T) = lambda_T`` exactly under ZOH.

    Parameters
    ----------
    sys : PHSystem
    traj : Trajectory
    lambda_T : array_like (n,)
    lambda0 : float
        Cost multiplier, ``>= 0``.
    """
    if lambda0 < 0:
        raise PreconditionError("lambda0 must be nonnegative")
    lambda_T = np.asarray(lambda_T, dtype=float)
    # backward in time the costate obeys dlam/dtau = -Q(J+R) lam + lambda0 Q B u
    Ab, Bb = zoh(-adjoint_matrix(sys), lambda0 * sys.Q @ sys.B, traj.h)
    N = traj.N
    L = np.empty((sys.n, N + 1))
    L[:, N] = lambda_T
    BU = Bb @ traj.U
    lam = lambda_T
    for k in range(N - 1, -1, -1):
        lam = Ab @ lam + BU[:, k]
        L[:, k] = lam
    return AdjointTrajectory(float(lambda0), traj.t.copy(), L, switching(sys, traj.X, L, lambda0))


def midpoint_switching(sys, traj, adj):
    """Switching function at the cell midpoints ``(m, N)``, propagated exactly."""
    h2 = 0.5 * traj.h
    Af, Bf = zoh(sys.A, sys.B, h2)
    Ab, Bb = zoh(-adjoint_matrix(sys), adj.lambda0 * sys.Q @ sys.B, h2)
    Xm = Af @ traj.X[:, :-1] + Bf @ traj.U
    Lm = Ab @ adj.L[:, 1:] + Bb @ traj.U
    return switching(sys, Xm, Lm, adj.lambda0)


@dataclass
class PMPReport:
    violation_fraction: float
    violations: int
    cells: int
    tol_sw: float
    s_mid: np.ndarray = field(repr=False)


def pmp_consistency(sys, traj, adj, tol_sw=None, rel_tol_sw=1e-4, u_tol=1e-6):
    """Fraction of (channel, cell) pairs whose control contradicts the switching sign.

    A cell violates the minimum condition when ``s_i > tol_sw`` but
    ``u_i != u_lo_i``, or ``s_i < -tol_sw`` but ``u_i != u_hi_i``; equality is
    tested to ``u_tol * (u_hi - u_lo)``. ``s`` is evaluated at the cell
    midpoints. ``tol_sw`` defaults to ``rel_tol_sw * max |s|``.
    """
    s = midpoint_switching(sys, traj, adj)
    if tol_sw is None:
        tol_sw = rel_tol_sw * (float(np.max(np.abs(s))) if s.size else 0.0)
    width = (sys.u_hi - sys.u_lo)[:, None]
    at_lo = np.abs(traj.U - sys.u_lo[:, None]) <= u_tol * width
    at_hi = np.abs(traj.U - sys.u_hi[:, None]) <= u_tol * width
    bad = ((s > tol_sw) & ~at_lo) | ((s < -tol_sw) & ~at_hi)
    cells = bad.size
    return PMPReport(float(bad.sum()) / max(cells, 1), int(bad.sum()), cells, float(tol_sw), s)


def switching_derivative(sys, x, lam, lambda0=1.0):
    """``ds/dt = B^T (lambda0 Q A x - A^T lambda)``; independent of ``u``."""
    A = sys.A
    return sys.B.T @ (lambda0 * sys.Q @ A @ x - A.T @ lam)


def switching_second_derivative(sys, x, lam, u, lambda0=1.0):
    """``d2s/dt2 = B^T (lambda0 Q A^2 x + (A^2)^T lambda) - 2 lambda0 B^T Q R Q B u``."""
    A2 = sys.A @ sys.A
    D = sys.dissipation
    return sys.B.T @ (lambda0 * sys.Q @ A2 @ x + A2.T @ lam) - 2.0 * lambda0 * sys.B.T @ D @ sys.B @ u


def singular_control(sys, x, lam, I, u_A=None):
    """Control on the channels ``I`` that keeps their switching functions at zero.

    Solves ``d2s_I/dt2 = 0`` with the cost multiplier normalized to one::

        u_I = M^{-1} B_I^T [ 1/2 (Q A^2 x + (A^2)^T lam) - Q R Q B_A u_A ],
        M   = B_I^T Q R Q B_I

    where ``A`` collects the remaining channels, held at ``u_A``.

    Raises
    ------
    PreconditionError
        ``M`` is not positive definite, i.e. some combination of the columns
        ``B_I`` lies in ``ker(R Q)``.
    """
    I = np.atleast_1d(np.asarray(I, dtype=int))
    rest = np.setdiff1d(np.arange(sys.m), I)
    u_A = np.zeros(rest.size) if u_A is None else np.atleast_1d(np.asarray(u_A, dtype=float))
    if u_A.shape != (rest.size,):
        raise PreconditionError(f"u_A must have {rest.size} entries")
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    D = sys.dissipation
    A2 = sys.A @ sys.A
    BI, BA = sys.B[:, I], sys.B[:, rest]
    M = BI.T @ D @ BI
    w = np.linalg.eigvalsh(M) if M.size else np.array([1.0])
    if w[0] <= 1e-12 * max(1.0, float(np.abs(D).max())):
        raise PreconditionError(
            "B_I^T Q R Q B_I is singular: im(B_I) meets ker(R Q), the singular control is not determined"
        )
    v = 0.5 * (sys.Q @ A2 @ x + A2.T @ lam)
    return np.linalg.solve(M, BI.T @ v - BI.T @ D @ BA @ u_A)


def singular_arcs(S, h, tol_sw, min_length=0.5):
    """Maximal runs of grid points with ``|s_i| < tol_sw`` lasting at least ``min_length``.

    Returns a list of ``(channel, k_start, k_end)`` with inclusive grid indices.
    """
    arcs = []
    for i, row in enumerate(np.atleast_2d(S)):
        small = np.abs(row) < tol_sw
        k = 0
        n = small.size
        while k < n:
            if not small[k]:
                k += 1
                continue
            j = k
            while j + 1 < n and small[j + 1]:
                j += 1
            if (j - k) * h >= min_length - 1e-12:
                arcs.append((i, k, j))
            k = j + 1
    return arcs


def kalman_matrix(A, b):
    n = A.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


def is_normal(sys, rel_tol=1e-10):
    """Per-column full-rank test of ``(b_i, A b_i, ..., A^{n-1} b_i)``.

    When every flag is true no extremal is abnormal, so the cost multiplier
    can be taken as one.
    """
    flags = []
    for i in range(sys.m):
        sv = np.linalg.svd(kalman_matrix(sys.A, sys.B[:, i]), compute_uv=False)
        flags.append(bool(sv[-1] > rel_tol * sv[0]) if sv[0] > 0 else False)
    return np.array(flags)


@dataclass
class SteadyStateSolution:
    """Optimal steady pair with its multiplier.

    ``family`` is a basis (columns over ``(x, u)``) of all steady pairs with
    zero cost, ignoring the box.
    """

    x_hat: np.ndarray
    u_hat: np.ndarray
    lambda_hat: np.ndarray
    cost: float
    family: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "x_hat": self.x_hat.tolist(),
            "u_hat": self.u_hat.tolist(),
            "lambda_hat": self.lambda_hat.tolist(),
            "cost": self.cost,
            "family_dim": int(self.family.shape[1]),
        }


def steady_pairs(sys, rcond=None):
    """Orthonormal basis of ``{(x, u) : A x + B u = 0}``."""
    return null_space(np.hstack([sys.A, sys.B]), rcond=rcond)


def solve_steady_state(sys, anchor=None, rel_tol=1e-10):
    """Minimize the steady supply ``u^T B^T Q x`` over steady pairs with ``u`` in the box.

    On steady pairs the supply equals ``||R^{1/2} Q x||^2``, so the minimum
    value is zero and the minimizers are the steady pairs with
    ``R Q x = 0``. Without ``anchor`` the origin is returned; with ``anchor``
    the minimizer whose state is closest to it.

    The multiplier is ``lambda_hat = -Q x_hat``.
    """
    n, m = sys.n, sys.m
    Nb = steady_pairs(sys)
    Nx, Nu = Nb[:n], Nb[n:]
    Z = np.zeros((Nb.shape[1], 0))
    if Nb.shape[1]:
        RhQ = psd_sqrt(sys.R) @ sys.Q
        _, sv, Vt = np.linalg.svd(RhQ @ Nx)
        thr = rel_tol * max(1.0, float(np.linalg.norm(RhQ, 2)))
        rank = int(np.sum(sv > thr))
        Z = Vt[rank:].T
    family = Nb @ Z
    x_hat, u_hat = np.zeros(n), np.zeros(m)
    if anchor is not None and family.shape[1]:
        Fx, Fu = family[:n], family[n:]
        anchor = np.asarray(anchor, dtype=float)
        d, *_ = np.linalg.lstsq(Fx, anchor, rcond=None)
        if np.any(Fu @ d > sys.u_hi) or np.any(Fu @ d < sys.u_lo):
            # project the anchor onto the box-feasible part of the family
            k = family.shape[1]
            P = sp.csc_matrix(Fx.T @ Fx)
            G = sp.csc_matrix(np.vstack([Fu, -Fu]))
            res = solve_qp(P, -Fx.T @ anchor, sp.csc_matrix((0, k)), np.zeros(0), G,
                           np.concatenate([sys.u_hi, -sys.u_lo]))
            d = res.z
        x_hat = Fx @ d
        u_hat = np.clip(Fu @ d, sys.u_lo, sys.u_hi)
    cost = float(u_hat @ sys.B.T @ sys.Q @ x_hat)
    return SteadyStateSolution(x_hat, u_hat, -sys.Q @ x_hat, cost, family)


def verify_steady_kkt(sys, sss, tol=1e-8):
    """Residuals of the steady-state optimality conditions.

    Keys: ``steady`` (``||A x + B u||``), ``box``, ``B(Qx+lam)``,
    ``J(Qx+lam)``, ``R lam``, ``RQx``, ``vi`` (violation of the variational
    inequality ``min_{v in box} (v - u)^T B^T (Q x + lam) >= 0``) and the
    overall ``passed`` flag.
    """
    x, u, lam = sss.x_hat, sss.u_hat, sss.lambda_hat
    p = sys.Q @ x + lam
    c = sys.B.T @ p
    vi_min = float(np.sum(np.minimum(sys.u_lo * c, sys.u_hi * c)) - u @ c)
    res = {
        "steady": float(np.linalg.norm(sys.A @ x + sys.B @ u)),
        "box": float(max(0.0, np.max(sys.u_lo - u), np.max(u - sys.u_hi))),
        "B(Qx+lam)": float(np.linalg.norm(c)),
        "J(Qx+lam)": float(np.linalg.norm(sys.J @ p)),
        "R lam": float(np.linalg.norm(sys.R @ lam)),
        "RQx": float(np.linalg.norm(sys.R @ sys.Q @ x)),
        "vi": max(0.0, -vi_min),
    }
    res["passed"] = all(v <= tol for v in res.values())
    return res


@dataclass
class ArcCheck:
    channel: int
    t_start: float
    t_end: float
    cells: int
    bang_cells: int
    max_error: float
    max_abs_s: float


def _runs(mask):
    """``(start, stop)`` index pairs of the True runs of a boolean vector."""
    d = np.diff(np.concatenate([[0], mask.astype(int), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def check_singular_arcs(sys, traj, adj, tol_sw=1e-4, min_length=0.5, trim=1, u_tol=1e-6):
    """Compare the solver control with the singular formula on detected arcs.

    Arcs are runs of grid points with ``|s_i| < tol_sw`` lasting at least
    ``min_length``. Inside an arc, cells whose control sits on a bound are
    bang cells on the approach to a junction (``s`` vanishes quadratically
    there) and are counted but not compared. Of each remaining run of
    interior cells, ``trim`` cells are dropped at both ends: under ZOH the
    junction falls inside those cells, whose control blends the two regimes.
    The formula is evaluated at the cell midpoints with the other channels
    held at their solver values.

    Returns
    -------
    list of ArcCheck
    """
    h2 = 0.5 * traj.h
    Af, Bf = zoh(sys.A, sys.B, h2)
    Ab, Bb = zoh(-adjoint_matrix(sys), adj.lambda0 * sys.Q @ sys.B, h2)
    width = sys.u_hi - sys.u_lo
    out = []
    for i, a, b in singular_arcs(adj.S, traj.h, tol_sw, min_length):
        u = traj.U[i, a:b]
        bang = (np.abs(u - sys.u_lo[i]) <= u_tol * width[i]) | (np.abs(u - sys.u_hi[i]) <= u_tol * width[i])
        cells = [np.arange(a + p + trim, a + q - trim) for p, q in _runs(~bang)]
        cells = np.concatenate(cells) if cells else np.zeros(0, dtype=int)
        err = 0.0
        if cells.size:
            xm = Af @ traj.X[:, cells] + Bf @ traj.U[:, cells]
            lm = Ab @ adj.L[:, cells + 1] + Bb @ traj.U[:, cells]
            rest = np.setdiff1d(np.arange(sys.m), [i])
            for j, k in enumerate(cells):
                u_s = singular_control(sys, xm[:, j], lm[:, j], [i], traj.U[rest, k])[0]
                err = max(err, abs(u_s - traj.U[i, k]))
        out.append(ArcCheck(i, float(traj.t[a]), float(traj.t[b]), int(cells.size), int(bang.sum()),
                            float(err), float(np.max(np.abs(adj.S[i, a:b + 1])))))
    return out
