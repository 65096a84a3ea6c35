"""Exact zero-order-hold simulation and the two evaluations of the supplied energy."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import hamiltonian, output, psd_sqrt
from .errors import ConstraintError, PreconditionError, StructureError
from .quadrature import quadratic_trapezoid, supply_trapezoid, zoh_quadratic_integral


@dataclass(frozen=True, eq=False)
class DiscreteDynamics:
    """``x_{k+1} = Ad x_k + Bd u_k`` for a fixed step ``h``."""

    Ad: np.ndarray
    Bd: np.ndarray
    h: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled trajectory on a uniform grid.

    Attributes
    ----------
    h : float
        Grid step.
    t : ndarray, shape (N + 1,)
    X : ndarray, shape (n, N + 1)
        States at the grid points.
    U : ndarray, shape (m, N)
        Control held on ``[t_k, t_{k+1})``.
    Y : ndarray, shape (m, N + 1)
        Outputs ``B^T Q x`` at the grid points.
    """

    h: float
    t: np.ndarray
    X: np.ndarray
    U: np.ndarray
    Y: np.ndarray

    @property
    def N(self):
        return self.U.shape[1]

    @property
    def T(self):
        return self.h * self.N


def zoh(A, B, h):
    """``(e^{hA}, int_0^h e^{sA} ds B)`` from one augmented exponential."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = expm(M * h)
    return E[:n, :n], E[:n, n:]


def discretize_zoh(sys, h):
    """Exact discretization of ``sys`` for ZOH inputs of step ``h``."""
    if not h > 0:
        raise PreconditionError(f"step must be positive, got {h}")
    Ad, Bd = zoh(sys.A, sys.B, h)
    return DiscreteDynamics(Ad, Bd, float(h))


def default_grid(T):
    """Number of intervals used for experiment reproduction."""
    return max(200, int(np.ceil(100.0 * T - 1e-9)))


def check_box(sys, U, tol=0.0):
    U = np.asarray(U, dtype=float)
    lo = sys.u_lo[:, None] - tol
    hi = sys.u_hi[:, None] + tol
    bad = (U < lo) | (U > hi)
    if np.any(bad):
        i, k = np.argwhere(bad)[0]
        raise ConstraintError(
            f"control u[{i}, {k}] = {U[i, k]:.6g} outside [{sys.u_lo[i]:.6g}, {sys.u_hi[i]:.6g}]"
        )


def propagate(Ad, Bd, x0, U):
    """Run the discrete recursion; returns states ``(n, N + 1)``."""
    N = U.shape[1]
    X = np.empty((Ad.shape[0], N + 1))
    X[:, 0] = x0
    BU = Bd @ U
    x = X[:, 0]
    for k in range(N):
        x = Ad @ x + BU[:, k]
        X[:, k + 1] = x
    return X


def simulate(sys, x0, U, h, dyn=None, box_tol=0.0):
    """Simulate ``sys`` from ``x0`` under the ZOH control grid ``U``.

    Parameters
    ----------
    sys : PHSystem
    x0 : array_like, shape (n,)
    U : array_like, shape (m, N)
    h : float
    dyn : DiscreteDynamics, optional
        Reuse a discretization computed for the same ``h``.
    box_tol : float
        Slack admitted on the box check.

    Raises
    ------
    ConstraintError
        A control sample lies outside the box.
    """
    x0 = np.asarray(x0, dtype=float)
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U.reshape(sys.m, -1)
    if x0.shape != (sys.n,):
        raise StructureError(f"x0 has shape {x0.shape}, expected ({sys.n},)")
    if U.shape[0] != sys.m:
        raise StructureError(f"U has {U.shape[0]} rows, expected {sys.m}")
    check_box(sys, U, box_tol)
    if dyn is None:
        dyn = discretize_zoh(sys, h)
    X = propagate(dyn.Ad, dyn.Bd, x0, U)
    N = U.shape[1]
    return Trajectory(float(h), h * np.arange(N + 1), X, U.copy(), output(sys, X))


def cost_supplied_energy(traj):
    """Supplied energy ``int u^T y dt`` by the trapezoidal rule."""
    return supply_trapezoid(traj.U, traj.Y, traj.h)


def dissipated_energy(sys, traj):
    """``int ||R^{1/2} Q x||^2 dt`` by the trapezoidal rule."""
    Rh = psd_sqrt(sys.R)
    M = sys.Q @ Rh @ Rh @ sys.Q
    return quadratic_trapezoid(traj.X, M, traj.h)


def cost_via_balance(sys, traj):
    """Supplied energy rewritten as boundary energy change plus dissipation."""
    dH = hamiltonian(sys, traj.X[:, -1]) - hamiltonian(sys, traj.X[:, 0])
    return dH + dissipated_energy(sys, traj)


def supply_weight(sys):
    """Weight on ``z = (x, u)`` with ``z^T M z = u^T B^T Q x``."""
    n, m = sys.n, sys.m
    C = sys.Q @ sys.B
    M = np.zeros((n + m, n + m))
    M[:n, n:] = 0.5 * C
    M[n:, :n] = 0.5 * C.T
    return M


def state_weight(sys, S):
    """Embed an ``n x n`` state weight into the ``(x, u)`` space."""
    n, m = sys.n, sys.m
    M = np.zeros((n + m, n + m))
    M[:n, :n] = 0.5 * (S + S.T)
    return M


def supplied_energy_exact(sys, traj):
    """``int u^T y dt`` integrated exactly between the grid points."""
    return zoh_quadratic_integral(sys.A, sys.B, supply_weight(sys), traj.h, traj.X, traj.U)


def state_quadratic_exact(sys, traj, S):
    """``int x^T S x dt`` integrated exactly between the grid points."""
    return zoh_quadratic_integral(sys.A, sys.B, state_weight(sys, S), traj.h, traj.X, traj.U)


def piecewise_constant(values, switch_every):
    """Repeat each column of ``values`` ``switch_every`` times along time."""
    return np.repeat(np.asarray(values, dtype=float), switch_every, axis=1)
