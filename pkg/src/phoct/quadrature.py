"""Path integrals along sampled zero-order-hold trajectories.

Two families live here. The trapezoidal rules work on grid samples only and
are second order in the step. The ``zoh_*`` integrals are exact for
piecewise-constant inputs: on each cell the augmented state ``z = (x, u)``
obeys ``dz/dt = F z`` with ``F = [[A, B], [0, 0]]``, so the integral of a
quadratic form in ``z`` is a quadratic form in the cell's initial value
(Van Loan's block exponential).
"""

import numpy as np
from scipy.linalg import expm


def supply_trapezoid(U, Y, h):
    """Trapezoidal integral of ``u^T y`` with piecewise-constant ``u``.

    ``U`` has shape ``(m, N)`` and ``Y`` has shape ``(m, N + 1)``; cell ``k``
    contributes ``h/2 * u_k^T (y_k + y_{k+1})``.
    """
    U = np.asarray(U, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if U.shape[1] == 0:
        return 0.0
    return float(0.5 * h * np.sum(U * (Y[:, :-1] + Y[:, 1:])))


def quadratic_samples(X, M):
    """Values ``x_k^T M x_k`` for every column of ``X``."""
    X = np.asarray(X, dtype=float)
    return np.einsum("ik,ij,jk->k", X, M, X)


def trapezoid(values, h):
    """Composite trapezoid of equally spaced samples."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] < 2:
        return 0.0
    return float(h * (values.sum(axis=-1) - 0.5 * (values[..., 0] + values[..., -1])))


def quadratic_trapezoid(X, M, h):
    """Trapezoidal integral of ``x^T M x`` along the sampled states."""
    return trapezoid(quadratic_samples(X, M), h)


def zoh_gramian(A, B, M, h):
    """Return ``G`` with ``int_0^h z(t)^T M z(t) dt = z(0)^T G z(0)`` for one cell.

    ``M`` is a symmetric ``(n + m) x (n + m)`` weight on ``z = (x, u)``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    p = n + m
    F = np.zeros((p, p))
    F[:n, :n] = A
    F[:n, n:] = B
    C = np.zeros((2 * p, 2 * p))
    C[:p, :p] = -F.T
    C[:p, p:] = M
    C[p:, p:] = F
    E = expm(C * h)
    G = E[p:, p:].T @ E[:p, p:]
    return 0.5 * (G + G.T)


def zoh_quadratic_integral(A, B, M, h, X, U):
    """Exact integral of ``z^T M z`` over a ZOH trajectory.

    Parameters
    ----------
    A, B : ndarray
        Continuous-time dynamics ``dx/dt = A x + B u``.
    M : ndarray
        Symmetric weight on ``z = (x, u)``.
    h : float
        Cell length.
    X, U : ndarray
        States ``(n, N + 1)`` and controls ``(m, N)``.
    """
    U = np.asarray(U, dtype=float)
    if U.shape[1] == 0:
        return 0.0
    G = zoh_gramian(A, B, M, h)
    Z = np.vstack([np.asarray(X, dtype=float)[:, :-1], U])
    return float(np.einsum("ik,ij,jk->", Z, G, Z))
