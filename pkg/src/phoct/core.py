"""Linear port-Hamiltonian systems.

A system is the quadruple ``(J, R, Q, B)`` with box input constraints::

    dx/dt = (J - R) Q x + B u,    y = B^T Q x,    u_lo <= u <= u_hi

with ``J`` skew-symmetric, ``R`` symmetric positive semidefinite, ``Q``
symmetric positive definite and ``B`` of full column rank.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError, StructureError
from .quadrature import quadratic_trapezoid, supply_trapezoid

EPS_PD = 1e-12


def _frozen(a, ndim):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise StructureError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PHSystem:
    """Immutable pH system with a per-channel input box.

    Matrices are copied to read-only float arrays on construction, so a
    ``PHSystem`` can be shared freely between threads.
    """

    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        object.__setattr__(self, "B", _frozen(B, 2))
        for name in ("J", "R", "Q"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2))
        for name in ("u_lo", "u_hi"):
            object.__setattr__(self, name, _frozen(np.atleast_1d(getattr(self, name)), 1))
        n, m = self.B.shape
        for name in ("J", "R", "Q"):
            if getattr(self, name).shape != (n, n):
                raise StructureError(
                    f"{name} has shape {getattr(self, name).shape}, expected ({n}, {n})"
                )
        for name in ("u_lo", "u_hi"):
            if getattr(self, name).shape != (m,):
                raise StructureError(
                    f"{name} has shape {getattr(self, name).shape}, expected ({m},)"
                )

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def A(self):
        """System matrix ``(J - R) Q``."""
        return (self.J - self.R) @ self.Q

    @property
    def dissipation(self):
        """``Q R Q``: the quadratic form of the dissipated power."""
        D = self.Q @ self.R @ self.Q
        return 0.5 * (D + D.T)

    def with_box(self, u_lo, u_hi):
        return PHSystem(self.J, self.R, self.Q, self.B, u_lo, u_hi)

    def with_R(self, R):
        return PHSystem(self.J, R, self.Q, self.B, self.u_lo, self.u_hi)

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "J": self.J.tolist(),
            "R": self.R.tolist(),
            "Q": self.Q.tolist(),
            "B": self.B.tolist(),
            "u_lo": self.u_lo.tolist(),
            "u_hi": self.u_hi.tolist(),
        }


@dataclass(frozen=True)
class Check:
    value: float
    tol: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    """Residual of every structural property together with its tolerance."""

    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    @property
    def residuals(self):
        return {k: c.value for k, c in self.checks.items()}

    def failures(self):
        return [k for k, c in self.checks.items() if not c.passed]

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": {
                k: {"value": c.value, "tol": c.tol, "passed": c.passed}
                for k, c in self.checks.items()
            },
        }


def _inf_norm(M):
    return float(np.max(np.sum(np.abs(M), axis=1))) if M.size else 0.0


def structure_tol(M, rel=1e-10):
    """Scale-aware tolerance ``rel * (1 + ||M||_inf)``."""
    return rel * (1.0 + _inf_norm(M))


def validate_system(sys, tol_struct=None, eps_pd=EPS_PD):
    """Check every structural property of ``sys``.

    Parameters
    ----------
    sys : PHSystem
    tol_struct : float, optional
        Absolute tolerance for the symmetry/skewness/semidefiniteness checks.
        Defaults to ``1e-10 * (1 + ||M||_inf)`` per matrix.
    eps_pd : float
        Lower bound required for the smallest eigenvalue of ``Q``.

    Returns
    -------
    ValidationReport
    """
    checks = {}

    def tol(M):
        return structure_tol(M) if tol_struct is None else float(tol_struct)

    def add(name, value, t, passed=None):
        value = float(value)
        checks[name] = Check(value, float(t), value <= t if passed is None else bool(passed))

    J, R, Q, B = sys.J, sys.R, sys.Q, sys.B
    add("J_skew", _inf_norm(J + J.T), tol(J))
    add("R_sym", _inf_norm(R - R.T), tol(R))
    add("R_psd", max(0.0, -np.linalg.eigvalsh(0.5 * (R + R.T))[0]), tol(R))
    add("Q_sym", _inf_norm(Q - Q.T), tol(Q))
    q_min = np.linalg.eigvalsh(0.5 * (Q + Q.T))[0]
    add("Q_pd", max(0.0, eps_pd - q_min), 0.0, passed=q_min >= eps_pd)
    rank = np.linalg.matrix_rank(B) if B.size else 0
    add("B_rank", sys.m - rank, 0.0)
    # positive value = amount by which 0 fails to be interior to the box
    margin = np.minimum(-sys.u_lo, sys.u_hi)
    box_violation = -float(np.min(margin)) if margin.size else 0.0
    add("box_interior", box_violation, 0.0, passed=box_violation < 0.0)
    return ValidationReport(checks)


def psd_sqrt(M):
    """Symmetric square root of a symmetric PSD matrix (negative eigenvalues clamped)."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def spd_sqrt(M):
    """Symmetric square root of an SPD matrix and its inverse."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w[0] <= 0.0:
        raise PreconditionError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    s = np.sqrt(w)
    return (V * s) @ V.T, (V / s) @ V.T


def hamiltonian(sys, x):
    """Stored energy ``1/2 x^T Q x``.

    ``x`` may be a single state ``(n,)`` or a batch of column states
    ``(n, K)``; in the latter case an array of ``K`` energies is returned.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != sys.n:
        raise StructureError(f"state has leading dimension {x.shape[0]}, expected {sys.n}")
    if x.ndim == 1:
        return 0.5 * float(x @ sys.Q @ x)
    return 0.5 * np.einsum("ik,ij,jk->k", x, sys.Q, x)


def output(sys, x):
    """Collocated output ``y = B^T Q x`` (works column-wise on batches)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != sys.n:
        raise StructureError(f"state has leading dimension {x.shape[0]}, expected {sys.n}")
    return sys.B.T @ (sys.Q @ x)


def to_spherical(sys):
    """Change to energy coordinates ``x~ = Q^{1/2} x`` where the energy is ``|x~|^2/2``.

    Returns
    -------
    (PHSystem, ndarray)
        The transformed system (``Q~ = I``) and the transform ``Q^{1/2}``.
    """
    Qh, _ = spd_sqrt(sys.Q)
    J = Qh @ sys.J @ Qh
    R = Qh @ sys.R @ Qh
    J = 0.5 * (J - J.T)
    R = 0.5 * (R + R.T)
    return PHSystem(J, R, np.eye(sys.n), Qh @ sys.B, sys.u_lo, sys.u_hi), Qh


def dissipated_power(sys, X):
    """Samples of ``||R^{1/2} Q x||^2`` along the columns of ``X``."""
    Rh = psd_sqrt(sys.R)
    Z = Rh @ (sys.Q @ np.asarray(X, dtype=float))
    return np.sum(Z * Z, axis=0)


def energy_balance_residual(sys, traj):
    """Defect of the integrated energy balance along a sampled trajectory.

    Returns ``|H(x_N) - H(x_0) - int (u^T y - ||R^{1/2} Q x||^2) dt|`` with
    the integral taken by the trapezoidal rule on the trajectory grid.
    """
    X, U, h = traj.X, traj.U, traj.h
    Y = output(sys, X)
    supplied = supply_trapezoid(U, Y, h)
    Rh = psd_sqrt(sys.R)
    lost = quadratic_trapezoid(X, sys.Q @ Rh @ Rh @ sys.Q, h)
    dH = hamiltonian(sys, X[:, -1]) - hamiltonian(sys, X[:, 0])
    return abs(dH - (supplied - lost))
