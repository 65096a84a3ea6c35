"""Convex QP kernels used by the optimal control transcriptions.

``solve_qp`` is a primal-dual interior-point method (Mehrotra
predictor-corrector) for sparse problems::

    minimize    1/2 z^T P z + q^T z
    subject to  A z = b,  G z <= h

``fista_box`` and ``augmented_lagrangian`` implement the first-order route:
accelerated projected gradient on a box with adaptive restart, wrapped in a
multiplier method for linear equality constraints.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu


@dataclass
class QPResult:
    z: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(P, q, A, b, G, h, tol=1e-10, gap_tol=1e-16, max_iter=100, reg=1e-10, z0=None):
    """Interior-point solve of a sparse convex QP.

    Parameters
    ----------
    P : sparse (nz, nz)
        Symmetric positive semidefinite.
    q : ndarray (nz,)
    A, b : sparse (me, nz), ndarray (me,)
        Equality constraints.
    G, h : sparse (mi, nz), ndarray (mi,)
        Inequality constraints; ``mi`` must be positive.
    tol : float
        Relative tolerance on the primal and dual residuals.
    gap_tol : float
        Tolerance on the mean complementarity ``s^T lam / mi``. It is much
        tighter than ``tol`` because near weakly active bounds both the slack
        and the multiplier only shrink like its square root.
    reg : float
        Static regularization of the KKT matrix; removed by iterative
        refinement.
    z0 : ndarray, optional
        Primal starting point.

    Returns
    -------
    QPResult
        ``y`` multiplies ``A z - b`` and ``lam >= 0`` multiplies ``G z - h`` in
        the Lagrangian ``f + y^T (A z - b) + lam^T (G z - h)``.
    """
    P = sp.csc_matrix(P)
    A = sp.csc_matrix(A)
    G = sp.csc_matrix(G)
    nz, me, mi = P.shape[0], A.shape[0], G.shape[0]
    q = np.asarray(q, dtype=float)
    b = np.asarray(b, dtype=float)
    h = np.asarray(h, dtype=float)

    z = np.zeros(nz) if z0 is None else np.asarray(z0, dtype=float).copy()
    y = np.zeros(me)
    s = np.maximum(h - G @ z, 1.0)
    lam = np.ones(mi)

    bscale = 1.0 + (np.max(np.abs(b)) if me else 0.0) + np.max(np.abs(h))
    qscale = 1.0 + np.max(np.abs(q))
    At = A.T.tocsc()
    Gt = G.T.tocsc()
    Ireg = sp.identity(nz, format="csc") * reg
    Jreg = sp.identity(me, format="csc") * reg

    status = "max_iter"
    it = 0
    rp = rd = mu = np.inf
    for it in range(1, max_iter + 1):
        r_d = P @ z + q + At @ y + Gt @ lam
        r_p = A @ z - b
        r_g = G @ z + s - h
        mu = float(s @ lam) / mi
        rp = max(np.max(np.abs(r_p)) if me else 0.0, np.max(np.abs(r_g)))
        rd = float(np.max(np.abs(r_d)))
        if rp <= tol * bscale and rd <= tol * qscale and mu <= gap_tol:
            status = "optimal"
            break

        W = lam / s
        H11 = (P + Gt @ sp.diags(W) @ G).tocsc()
        K0 = sp.bmat([[H11, At], [A, None]], format="csc")
        K = sp.bmat([[H11 + Ireg, At], [A, -Jreg]], format="csc")
        try:
            lu = splu(K, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
        except RuntimeError:
            status = "singular"
            break

        def kkt_solve(r_c):
            rhs = np.concatenate([-r_d - Gt @ (W * r_g - r_c / s), -r_p])
            sol = lu.solve(rhs)
            for _ in range(3):
                sol = sol + lu.solve(rhs - K0 @ sol)
            dz, dy = sol[:nz], sol[nz:]
            ds = -r_g - G @ dz
            dl = W * (r_g + G @ dz) - r_c / s
            return dz, dy, ds, dl

        r_c = s * lam
        dz, dy, ds, dl = kkt_solve(r_c)
        a_aff = min(_max_step(s, ds), _max_step(lam, dl))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dl)) / mi
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        r_c = s * lam + ds * dl - sigma * mu
        dz, dy, ds, dl = kkt_solve(r_c)
        alpha = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(lam, dl)))
        if alpha < 1e-12:
            status = "stalled"
            break
        z += alpha * dz
        y += alpha * dy
        s += alpha * ds
        lam += alpha * dl
    return QPResult(z, y, lam, s, status, it, float(rp), float(rd), float(mu))


def power_iteration(matvec, shape, iters=50, seed=0):
    """Largest eigenvalue estimate of a symmetric PSD operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = matvec(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def projected_step_norm(u, grad, lo, hi):
    """Stationarity measure ``||u - proj(u - grad)||_inf``."""
    return float(np.max(np.abs(u - np.clip(u - grad, lo, hi)))) if u.size else 0.0


def fista_box(grad, u0, lo, hi, L, tol, max_iter, check_every=10):
    """Accelerated projected gradient on a box with gradient-based restart.

    Stops once ``||u - proj(u - grad(u))||_inf <= tol``.

    Returns
    -------
    (ndarray, int, float)
        Final iterate, iterations used, final stationarity measure.
    """
    u = np.clip(u0, lo, hi)
    y = u.copy()
    t = 1.0
    step = 1.0 / L
    stat = np.inf
    k = 0
    for k in range(1, max_iter + 1):
        g = grad(y)
        u_new = np.clip(y - step * g, lo, hi)
        if np.sum((y - u_new) * (u_new - u)) > 0.0:
            t = 1.0
            y = u_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = u_new + ((t - 1.0) / t_new) * (u_new - u)
            t = t_new
        u = u_new
        if k % check_every == 0:
            stat = projected_step_norm(u, grad(u), lo, hi)
            if stat <= tol:
                break
    else:
        stat = projected_step_norm(u, grad(u), lo, hi)
    return u, k, stat


@dataclass
class ALResult:
    u: np.ndarray
    multiplier: np.ndarray
    rho: float
    status: str
    inner_iterations: int
    outer_iterations: int
    residual: float
    stationarity: float


def augmented_lagrangian(grad_f, hess_vec, cons, cons_jac_t, u0, lo, hi, tol_eq, tol_stat,
                         rho0=1.0, rho_max=1e8, max_outer=30, max_inner=50000, power_iters=50):
    """Multiplier method for ``min f(u)`` s.t. ``c(u) = 0`` (affine), ``lo <= u <= hi``.

    ``L(u) = f(u) + lam^T c(u) + rho/2 ||c(u)||^2``; each outer pass minimizes
    ``L`` with :func:`fista_box` using the step ``1 / L_max`` from power
    iteration on the Hessian of ``L``, then updates ``lam += rho c``. The
    penalty grows tenfold whenever ``||c||`` fails to shrink by a factor four.

    Parameters
    ----------
    grad_f, hess_vec : callable
        Gradient of the objective and Hessian-vector product.
    cons, cons_jac_t : callable
        ``c(u)`` and ``v -> (dc/du)^T v``.
    """
    lam = np.zeros_like(cons(u0))
    u = np.clip(u0, lo, hi)
    rho = rho0
    prev = np.inf
    total = 0
    status = "max_iter"
    stat = np.inf
    res = np.linalg.norm(cons(u))
    outer = 0
    for outer in range(1, max_outer + 1):
        def grad_L(v, lam=lam, rho=rho):
            return grad_f(v) + cons_jac_t(lam + rho * cons(v))

        def hv(v, rho=rho):
            return hess_vec(v) + rho * cons_jac_t(cons(v) - cons(np.zeros_like(v)))

        Lmax = 1.05 * power_iteration(hv, u.shape, power_iters) + 1e-14
        u, k, stat = fista_box(grad_L, u, lo, hi, Lmax, 0.1 * tol_stat, max_inner)
        total += k
        c = cons(u)
        res = float(np.linalg.norm(c))
        lam = lam + rho * c
        stat = projected_step_norm(u, grad_f(u) + cons_jac_t(lam), lo, hi)
        if res <= tol_eq and stat <= tol_stat:
            status = "converged"
            break
        if res > 0.25 * prev:
            if rho >= rho_max:
                if res > tol_eq:
                    status = "infeasible"
                    break
            rho = min(10.0 * rho, rho_max)
        prev = res
    return ALResult(u, lam, rho, status, total, outer, res, stat)
