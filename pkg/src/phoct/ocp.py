"""Minimal-energy-supply optimal control with box constraints.

The supplied energy ``int u^T y dt`` is an indefinite bilinear form, but the
energy balance rewrites it as::

    C(u) = H(x(T)) - H(x(0)) + int x^T Q R Q x dt

which is convex. Every solver here works on this form, discretized with
exact ZOH dynamics and the trapezoidal rule for the dissipation integral.
The objective is always ``C`` (plus the optional terminal cost and control
regularization), so the terminal multiplier is the costate of the
supplied-energy problem at ``t = T``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve

from .core import hamiltonian
from .errors import PreconditionError, StructureError
from .qp import augmented_lagrangian, fista_box, power_iteration, projected_step_norm, solve_qp
from .sim import Trajectory, cost_supplied_energy, cost_via_balance, default_grid, discretize_zoh, simulate


@dataclass(frozen=True, eq=False)
class OCPProblem:
    """Energy-optimal transfer problem on ``[0, T]`` with ``N`` ZOH intervals.

    Exactly one terminal condition is used: a fixed target ``x_target`` or
    the cost ``1/2 (x - x_ref)^T W (x - x_ref)``. With neither given the end
    state is free (``W = 0``).
    """

    sys: object
    x0: np.ndarray
    T: float
    N: int = None
    x_target: np.ndarray = None
    x_ref: np.ndarray = None
    W: np.ndarray = None
    eps_reg: float = 0.0
    tol_eq_rel: float = 1e-6
    tol_stat: float = 1e-6

    def __post_init__(self):
        n = self.sys.n
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("x0", np.asarray(self.x0, dtype=float).reshape(-1))
        if self.x0.shape != (n,):
            raise StructureError(f"x0 has length {self.x0.size}, expected {n}")
        if not self.T > 0:
            raise PreconditionError(f"horizon must be positive, got {self.T}")
        set_("T", float(self.T))
        set_("N", default_grid(self.T) if self.N is None else int(self.N))
        if self.N < 1:
            raise PreconditionError(f"need at least one interval, got N={self.N}")
        if self.eps_reg < 0:
            raise PreconditionError("eps_reg must be nonnegative")
        if self.x_target is not None:
            if self.x_ref is not None or self.W is not None:
                raise PreconditionError("give either a terminal target or a terminal cost, not both")
            set_("x_target", np.asarray(self.x_target, dtype=float).reshape(-1))
            if self.x_target.shape != (n,):
                raise StructureError(f"x_target has length {self.x_target.size}, expected {n}")
        else:
            W = np.zeros((n, n)) if self.W is None else np.asarray(self.W, dtype=float)
            if W.shape != (n, n):
                raise StructureError(f"W has shape {W.shape}, expected ({n}, {n})")
            W = 0.5 * (W + W.T)
            if W.size and np.linalg.eigvalsh(W)[0] < -1e-10 * (1 + np.abs(W).max()):
                raise PreconditionError("terminal weight W must be positive semidefinite")
            x_ref = np.zeros(n) if self.x_ref is None else np.asarray(self.x_ref, dtype=float).reshape(-1)
            if x_ref.shape != (n,):
                raise StructureError(f"x_ref has length {x_ref.size}, expected {n}")
            set_("W", W)
            set_("x_ref", x_ref)

    @property
    def h(self):
        return self.T / self.N

    @property
    def fixed_end(self):
        return self.x_target is not None

    @property
    def tol_eq(self):
        ref = self.x_target if self.fixed_end else self.x_ref
        return self.tol_eq_rel * (1.0 + float(np.linalg.norm(ref)))

    def terminal_cost(self, x):
        if self.fixed_end:
            return 0.0
        d = np.asarray(x) - self.x_ref
        return 0.5 * float(d @ self.W @ d)

    def terminal_gradient(self, x):
        if self.fixed_end:
            return np.zeros(self.sys.n)
        return self.W @ (np.asarray(x) - self.x_ref)

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if "x_target" in kw and kw["x_target"] is not None:
            d["x_ref"] = d["W"] = None
        if ("W" in kw or "x_ref" in kw) and kw.get("x_target") is None:
            d["x_target"] = None
        d.update(kw)
        return OCPProblem(**d)


def trapezoid_weights(N, h):
    w = np.full(N + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


class CondensedQP:
    """State-eliminated transcription in the stacked control ``u`` of shape ``(N, m)``.

    The objective is ``1/2 u^T H u + g^T u + const`` and, for a fixed end
    state, the terminal constraint is ``E u = r``. Products with ``H`` and
    ``E^T`` are available matrix-free through FFT convolutions with the
    impulse response ``G_i = Ad^i Bd``; :meth:`dense` assembles the matrices
    explicitly for small problems.
    """

    def __init__(self, prob, dyn=None):
        self.prob = prob
        sys = prob.sys
        self.n, self.m, self.N = sys.n, sys.m, prob.N
        self.dyn = dyn if dyn is not None else discretize_zoh(sys, prob.h)
        Ad, Bd = self.dyn.Ad, self.dyn.Bd
        n, N = self.n, self.N
        powers = np.empty((N + 1, n, n))
        powers[0] = np.eye(n)
        for i in range(N):
            powers[i + 1] = Ad @ powers[i]
        self.G = powers[:N] @ Bd
        self.free = powers @ prob.x0
        self.w = trapezoid_weights(N, prob.h)
        self.D = sys.dissipation
        S = sys.Q if prob.fixed_end else sys.Q + prob.W
        self.S_end = 0.5 * (S + S.T)

    def _conv(self, U):
        out = np.zeros((self.N, self.n))
        for c in range(self.m):
            out += fftconvolve(self.G[:, :, c], U[:, c:c + 1], axes=0)[: self.N]
        return out

    def states(self, U, homogeneous=False):
        """States ``(N + 1, n)`` driven by ``U``; zero initial state if ``homogeneous``."""
        X = np.zeros((self.N + 1, self.n)) if homogeneous else self.free.copy()
        X[1:] += self._conv(np.asarray(U).reshape(self.N, self.m))
        return X

    def adjoint(self, Z):
        """``g_j = sum_{k > j} G_{k-1-j}^T Z_k`` for a cotangent ``Z`` of shape ``(N + 1, n)``."""
        out = np.zeros((self.N, self.m))
        Zr = Z[1:][::-1]
        for c in range(self.m):
            acc = np.zeros(self.N)
            for i in range(self.n):
                acc += fftconvolve(self.G[:, i, c], Zr[:, i])[: self.N]
            out[:, c] = acc[::-1]
        return out

    def _cotangent(self, X, homogeneous):
        Z = 2.0 * self.w[:, None] * (X @ self.D)
        Z[-1] += X[-1] @ self.S_end
        if not homogeneous and not self.prob.fixed_end:
            Z[-1] -= self.prob.W @ self.prob.x_ref
        return Z

    def objective(self, U):
        p = self.prob
        X = self.states(U)
        run = float(np.sum(self.w * np.einsum("ki,ij,kj->k", X, self.D, X)))
        xN = X[-1]
        val = run + hamiltonian(p.sys, xN) - hamiltonian(p.sys, p.x0) + p.terminal_cost(xN)
        return val + p.eps_reg * p.h * float(np.sum(np.asarray(U) ** 2))

    def gradient(self, U):
        U = np.asarray(U).reshape(self.N, self.m)
        X = self.states(U)
        return self.adjoint(self._cotangent(X, False)) + 2.0 * self.prob.eps_reg * self.prob.h * U

    def hess_vec(self, V):
        V = np.asarray(V).reshape(self.N, self.m)
        X = self.states(V, homogeneous=True)
        return self.adjoint(self._cotangent(X, True)) + 2.0 * self.prob.eps_reg * self.prob.h * V

    def terminal_state(self, U):
        return self.states(U)[-1]

    def terminal_adjoint(self, v):
        Z = np.zeros((self.N + 1, self.n))
        Z[-1] = v
        return self.adjoint(Z)

    def lipschitz(self, iters=50):
        return power_iteration(self.hess_vec, (self.N, self.m), iters)

    def dense(self):
        """Explicit ``(H, g, const, E, r)`` with ``u`` stacked time-major.

        ``E`` and ``r`` are ``None`` for the terminal-cost variant.
        """
        p = self.prob
        n, m, N = self.n, self.m, self.N
        Phi = np.zeros((N + 1, n, N * m))
        for k in range(1, N + 1):
            for j in range(k):
                Phi[k, :, j * m:(j + 1) * m] = self.G[k - 1 - j]
        F = self.free
        H = 2.0 * np.einsum("k,kia,ij,kjb->ab", self.w, Phi, self.D, Phi)
        H += Phi[-1].T @ self.S_end @ Phi[-1]
        H += 2.0 * p.eps_reg * p.h * np.eye(N * m)
        g = 2.0 * np.einsum("k,kia,ij,kj->a", self.w, Phi, self.D, F) + Phi[-1].T @ (self.S_end @ F[-1])
        const = float(np.sum(self.w * np.einsum("ki,ij,kj->k", F, self.D, F)))
        const += 0.5 * F[-1] @ self.S_end @ F[-1] - hamiltonian(p.sys, p.x0)
        if p.fixed_end:
            return 0.5 * (H + H.T), g, const, Phi[-1].copy(), p.x_target - F[-1]
        g -= Phi[-1].T @ (p.W @ p.x_ref)
        const += -p.x_ref @ p.W @ F[-1] + 0.5 * p.x_ref @ p.W @ p.x_ref
        return 0.5 * (H + H.T), g, const, None, None


def transcribe(prob, dyn=None):
    """Condensed quadratic program of ``prob`` (see :class:`CondensedQP`)."""
    return CondensedQP(prob, dyn)


def _block_coo(offsets_r, offsets_c, block):
    """Triplets placing the dense ``block`` at each (row, col) offset pair."""
    p, q = block.shape
    r = offsets_r[:, None, None] + np.arange(p)[None, :, None]
    c = offsets_c[:, None, None] + np.arange(q)[None, None, :]
    shape = (offsets_r.size, p, q)
    return (np.broadcast_to(r, shape).ravel(), np.broadcast_to(c, shape).ravel(),
            np.broadcast_to(block, shape).ravel())


class BandedQP:
    """Sparse transcription over ``z = (x_0, u_0, x_1, u_1, ..., x_N)``.

    Used by the interior-point path. ``mode`` selects the objective:
    ``"ocp"`` for the energy-supply problem of ``prob`` and ``"gap"`` for
    ``1/2 ||x_N - target||^2`` (reachability test, no terminal equality).
    """

    def __init__(self, prob, dyn=None, mode="ocp", target=None):
        sys = prob.sys
        n, m, N, h = sys.n, sys.m, prob.N, prob.h
        self.n, self.m, self.N = n, m, N
        self.nb = nb = n + m
        self.nz = nz = N * nb + n
        dyn = dyn if dyn is not None else discretize_zoh(sys, h)
        self.dyn = dyn
        k = np.arange(N)
        xo = k * nb
        uo = k * nb + n
        xN = N * nb

        rows, cols, vals = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        self.const = 0.0
        q = np.zeros(nz)
        if mode == "ocp":
            w = trapezoid_weights(N, h)
            D = sys.dissipation
            for wk, off in ((w[0], np.array([0])), (h, xo[1:])):
                if off.size:
                    put(*_block_coo(off, off, 2.0 * wk * D))
            S = 2.0 * w[-1] * D + (sys.Q if prob.fixed_end else sys.Q + prob.W)
            put(*_block_coo(np.array([xN]), np.array([xN]), 0.5 * (S + S.T)))
            if prob.eps_reg > 0:
                put(*_block_coo(uo, uo, 2.0 * prob.eps_reg * h * np.eye(m)))
            if not prob.fixed_end:
                q[xN:xN + n] = -prob.W @ prob.x_ref
                self.const += 0.5 * prob.x_ref @ prob.W @ prob.x_ref
            self.const -= hamiltonian(sys, prob.x0)
            fixed = prob.fixed_end
            target = prob.x_target
        elif mode == "gap":
            put(*_block_coo(np.array([xN]), np.array([xN]), np.eye(n)))
            target = np.asarray(target, dtype=float)
            q[xN:xN + n] = -target
            self.const = 0.5 * float(target @ target)
            fixed = False
        else:
            raise ValueError(f"unknown mode {mode!r}")
        self.P = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nz, nz)
        )
        self.q = q

        rows, cols, vals = [], [], []
        put(np.arange(n), np.arange(n), np.ones(n))
        r0 = n + k * n
        put(*_block_coo(r0, xo, -dyn.Ad))
        put(*_block_coo(r0, uo, -dyn.Bd))
        put(*_block_coo(r0, xo + nb, np.eye(n)))
        me = n + N * n
        b = np.concatenate([prob.x0, np.zeros(N * n)])
        if fixed:
            put(me + np.arange(n), xN + np.arange(n), np.ones(n))
            b = np.concatenate([b, target])
            me += n
        self.A = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(me, nz)
        )
        self.b = b
        self.terminal_rows = slice(me - n, me) if fixed else None

        ui = (uo[:, None] + np.arange(m)[None, :]).ravel()
        self.u_index = ui
        nu = ui.size
        Gr = np.concatenate([np.arange(nu), nu + np.arange(nu)])
        Gv = np.concatenate([np.ones(nu), -np.ones(nu)])
        self.G = sp.csc_matrix((Gv, (Gr, np.concatenate([ui, ui]))), shape=(2 * nu, nz))
        self.h = np.concatenate([np.tile(sys.u_hi, N), -np.tile(sys.u_lo, N)])

    def start(self, x0):
        """Dynamically consistent starting point with ``u = 0``."""
        z = np.zeros(self.nz)
        x = np.asarray(x0, dtype=float)
        for k in range(self.N + 1):
            z[k * self.nb:k * self.nb + self.n] = x
            x = self.dyn.Ad @ x
        return z

    def controls(self, z):
        """Controls as an ``(m, N)`` array."""
        return z[self.u_index].reshape(self.N, self.m).T

    def solve(self, x0, tol=1e-10, max_iter=100):
        return solve_qp(self.P, self.q, self.A, self.b, self.G, self.h, tol=tol,
                        max_iter=max_iter, z0=self.start(x0))


@dataclass
class OCPSolution:
    """Optimal trajectory with both cost evaluations and solver diagnostics.

    ``multiplier_terminal`` is the costate of the supplied-energy problem at
    ``t = T``: the terminal-equality multiplier for a fixed end state, or
    ``W (x_N - x_ref)`` for the terminal-cost variant.
    """

    traj: Trajectory
    cost_primal: float
    cost_supply: float
    objective: float
    terminal_residual: float
    multiplier_terminal: np.ndarray
    iterations: int
    status: str
    stationarity: float
    method: str
    info: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == "converged"

    def summary(self):
        return {
            "status": self.status,
            "method": self.method,
            "T": self.traj.T,
            "N": self.traj.N,
            "cost_primal": self.cost_primal,
            "cost_supply": self.cost_supply,
            "objective": self.objective,
            "terminal_residual": self.terminal_residual,
            "stationarity": self.stationarity,
            "iterations": self.iterations,
            "multiplier_terminal": np.asarray(self.multiplier_terminal).tolist(),
            **self.info,
        }


def certificate(cqp, U, nu):
    """Projected-gradient stationarity of the Lagrangian at ``U`` (shape ``(m, N)``)."""
    p = cqp.prob
    Ut = np.asarray(U).T
    grad = cqp.gradient(Ut)
    if p.fixed_end:
        grad = grad + cqp.terminal_adjoint(nu)
    lo = np.broadcast_to(p.sys.u_lo, Ut.shape)
    hi = np.broadcast_to(p.sys.u_hi, Ut.shape)
    return projected_step_norm(Ut, grad, lo, hi)


def terminal_gap(sys, x0, target, T, N, dyn=None, tol=1e-11):
    """Smallest ``||x_N - target||`` over box controls, with the minimizing controls."""
    prob = OCPProblem(sys, x0, T, N)
    bq = BandedQP(prob, dyn, mode="gap", target=target)
    res = bq.solve(x0, tol=tol, max_iter=150)
    U = np.clip(bq.controls(res.z), sys.u_lo[:, None], sys.u_hi[:, None])
    traj = simulate(sys, x0, U, prob.h, dyn=bq.dyn)
    return float(np.linalg.norm(traj.X[:, -1] - target)), traj, res.status


def _finish(prob, cqp, U, nu, iterations, status, method, info=None):
    sys = prob.sys
    U = np.clip(U, sys.u_lo[:, None], sys.u_hi[:, None])
    traj = simulate(sys, prob.x0, U, prob.h, dyn=cqp.dyn)
    xN = traj.X[:, -1]
    if prob.fixed_end:
        resid = float(np.linalg.norm(xN - prob.x_target))
        mult = np.asarray(nu, dtype=float)
    else:
        resid = 0.0
        mult = prob.terminal_gradient(xN)
    stat = certificate(cqp, U, mult)
    objective = cqp.objective(U.T)
    if status == "solved":
        ok = stat <= prob.tol_stat and resid <= prob.tol_eq
        status = "converged" if ok else "inaccurate"
    return OCPSolution(
        traj=traj,
        cost_primal=cost_via_balance(sys, traj),
        cost_supply=cost_supplied_energy(traj),
        objective=objective,
        terminal_residual=resid,
        multiplier_terminal=mult,
        iterations=int(iterations),
        status=status,
        stationarity=stat,
        method=method,
        info=info or {},
    )


def solve_ocp(prob, method="ipm", u_init=None, ipm_tol=1e-10, max_iter=100,
              max_inner=50000, max_outer=30):
    """Solve the energy-optimal control problem.

    Parameters
    ----------
    prob : OCPProblem
    method : {"ipm", "apg"}
        ``"ipm"`` runs the sparse interior-point method on the banded
        transcription. ``"apg"`` runs accelerated projected gradient inside an
        augmented-Lagrangian loop on the condensed transcription.
    u_init : ndarray (m, N), optional
        Warm start for ``"apg"``; zero by default.

    Returns
    -------
    OCPSolution
        ``status`` is ``"converged"`` when the box holds exactly, the
        terminal residual is at most ``prob.tol_eq`` and the projected
        gradient of the Lagrangian is at most ``prob.tol_stat``. Otherwise it
        is ``"infeasible"`` (the target is not reachable within the box on
        this grid), ``"inaccurate"`` or ``"max_iter"``.
    """
    sys = prob.sys
    dyn = discretize_zoh(sys, prob.h)
    cqp = CondensedQP(prob, dyn)
    if method == "ipm":
        bq = BandedQP(prob, dyn)
        res = bq.solve(prob.x0, tol=ipm_tol, max_iter=max_iter)
        U = bq.controls(res.z)
        nu = res.y[bq.terminal_rows] if prob.fixed_end else None
        status = "solved" if res.status == "optimal" else res.status
        info = {"ipm_status": res.status}
        if status != "solved" and prob.fixed_end:
            gap, gtraj, _ = terminal_gap(sys, prob.x0, prob.x_target, prob.T, prob.N, dyn)
            info["reachability_gap"] = gap
            if gap > prob.tol_eq:
                status = "infeasible"
                U = gtraj.U
                nu = np.zeros(sys.n)
        return _finish(prob, cqp, U, nu, res.iterations, status, "ipm", info)
    if method == "apg":
        shape = (prob.N, sys.m)
        lo = np.broadcast_to(sys.u_lo, shape)
        hi = np.broadcast_to(sys.u_hi, shape)
        u0 = np.zeros(shape) if u_init is None else np.asarray(u_init, dtype=float).T.copy()
        if prob.fixed_end:
            r = prob.x_target
            res = augmented_lagrangian(
                cqp.gradient, cqp.hess_vec,
                lambda u: cqp.terminal_state(u) - r,
                cqp.terminal_adjoint,
                u0, lo, hi, prob.tol_eq, prob.tol_stat,
                max_outer=max_outer, max_inner=max_inner,
            )
            status = {"converged": "solved"}.get(res.status, res.status)
            return _finish(prob, cqp, res.u.T, res.multiplier,
                           res.inner_iterations, status, "apg",
                           {"outer_iterations": res.outer_iterations, "penalty": res.rho})
        L = 1.05 * cqp.lipschitz() + 1e-14
        u, k, stat = fista_box(cqp.gradient, u0, lo, hi, L, 0.1 * prob.tol_stat, max_inner)
        status = "solved" if stat <= prob.tol_stat else "max_iter"
        return _finish(prob, cqp, u.T, None, k, status, "apg")
    raise ValueError(f"unknown method {method!r}")


def solve_regularized(sys, x0, T, eps_reg, N=None, x_ref=None, W=None, method="ipm"):
    """Regularized free-endpoint problem.

    Minimizes ``int (||R^{1/2} Q x||^2 + eps ||u||^2) dt + H(x(T))`` plus the
    optional terminal cost ``1/2 (x - x_ref)^T W (x - x_ref)``; strictly
    convex in ``u`` for ``eps_reg > 0``.
    """
    if not eps_reg > 0:
        raise PreconditionError("regularized problem needs eps_reg > 0")
    prob = OCPProblem(sys, x0, T, N, x_ref=x_ref, W=W, eps_reg=eps_reg)
    return solve_ocp(prob, method=method)


@dataclass
class TimeOptimalResult:
    """Outcome of the minimum-time search.

    ``T_min`` is the smallest checked horizon with reachability gap at most
    ``tol``; ``bracket`` is ``(largest infeasible, T_min)``.
    """

    T_min: float
    traj: Trajectory
    status: str
    gap: float
    bracket: tuple
    evaluations: list


def solve_time_optimal(sys, x0, x_target, h=1e-2, T_cap=200.0, tol=None, tol_rel=1e-6,
                       bisect_width=None, require_lossless=True):
    """Minimum time to steer ``x0`` to ``x_target`` with box controls.

    Horizons ``0.25 * 2**k`` are tested until the target is reachable, then the
    last bracket is bisected down to ``bisect_width`` (default ``h``). Each test
    computes the least terminal distance over box controls on a grid of
    step about ``h``.

    Returns
    -------
    TimeOptimalResult
        ``status`` is ``"reached"`` or ``"not_reached"`` (no feasible horizon up
        to ``T_cap``).
    """
    x0 = np.asarray(x0, dtype=float)
    x_target = np.asarray(x_target, dtype=float)
    if require_lossless and np.abs(sys.R).max() > 1e-10 * (1.0 + np.abs(sys.R).max()):
        raise PreconditionError("time-optimal search is defined for lossless systems (R = 0)")
    if tol is None:
        tol = tol_rel * (1.0 + float(np.linalg.norm(x_target)))
    bisect_width = h if bisect_width is None else bisect_width
    evals = []
    if np.linalg.norm(x_target - x0) <= tol:
        traj = Trajectory(h, np.zeros(1), x0.reshape(-1, 1), np.zeros((sys.m, 0)),
                          sys.B.T @ sys.Q @ x0.reshape(-1, 1))
        return TimeOptimalResult(0.0, traj, "reached", float(np.linalg.norm(x_target - x0)),
                                 (0.0, 0.0), evals)

    def test(T):
        N = max(1, int(np.ceil(T / h - 1e-9)))
        gap, traj, _ = terminal_gap(sys, x0, x_target, T, N)
        evals.append((T, gap))
        return gap, traj

    lo_T, hi_T, best = 0.0, None, None
    T = 0.25
    while T <= T_cap * (1 + 1e-12):
        gap, traj = test(T)
        if gap <= tol:
            hi_T, best = T, (gap, traj)
            break
        lo_T = T
        T *= 2.0
    if hi_T is None:
        return TimeOptimalResult(np.inf, None, "not_reached", float(evals[-1][1]), (lo_T, np.inf), evals)
    while hi_T - lo_T > bisect_width:
        mid = 0.5 * (lo_T + hi_T)
        gap, traj = test(mid)
        if gap <= tol:
            hi_T, best = mid, (gap, traj)
        else:
            lo_T = mid
    return TimeOptimalResult(hi_T, best[1], "reached", best[0], (lo_T, hi_T), evals)
