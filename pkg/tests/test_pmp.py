import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from phoct.builtins import builtin_system
from phoct.core import PHSystem
from phoct.errors import PreconditionError
from phoct.generators import random_ph_system, random_skew, random_spd
from phoct.ocp import OCPProblem, solve_ocp
from phoct.pmp import (
    SteadyStateSolution,
    adjoint_matrix,
    check_singular_arcs,
    integrate_adjoint,
    is_normal,
    kalman_matrix,
    pmp_consistency,
    singular_arcs,
    singular_control,
    solve_steady_state,
    switching_second_derivative,
    verify_steady_kkt,
)
from phoct.sim import simulate


@pytest.fixture(scope="module")
def msd_solution():
    sys, d = builtin_system("msd-r1")
    sol = solve_ocp(OCPProblem(sys, d["x0"], 30.0, 3000, x_target=d["x_target"]))
    assert sol.converged
    return sys, sol


def test_zero_costate_gives_collocated_switching():
    sys, d = builtin_system("msd-r1")
    traj = simulate(sys, d["x0"], np.zeros((1, 100)), 0.05)
    adj = integrate_adjoint(sys, traj, np.zeros(3))
    assert np.abs(adj.L).max() == 0.0
    np.testing.assert_allclose(adj.S, sys.B.T @ sys.Q @ traj.X, atol=1e-15)


def test_lossless_costate_keeps_weighted_norm():
    rng = np.random.default_rng(4)
    Q = random_spd(rng, 4)
    sys = PHSystem(random_skew(rng, 4), np.zeros((4, 4)), Q, rng.standard_normal((4, 1)), [-1], [1])
    traj = simulate(sys, rng.standard_normal(4), np.zeros((1, 200)), 0.05)
    adj = integrate_adjoint(sys, traj, rng.standard_normal(4))
    norms = np.einsum("ik,ij,jk->k", adj.L, np.linalg.inv(Q), adj.L)
    np.testing.assert_allclose(norms, norms[-1], rtol=1e-11)


def test_abnormal_costate_matches_matrix_exponential():
    sys, d = builtin_system("msd-r1")
    traj = simulate(sys, d["x0"], np.full((1, 50), 0.7), 0.1)
    e1 = np.array([1.0, 0.0, 0.0])
    adj = integrate_adjoint(sys, traj, e1, lambda0=0.0)
    G = adjoint_matrix(sys)
    T = traj.T
    for k in range(0, 51, 5):
        ref = expm(-(T - traj.t[k]) * G) @ e1
        assert np.abs(adj.L[:, k] - ref).max() < 1e-10
    with pytest.raises(PreconditionError):
        integrate_adjoint(sys, traj, e1, lambda0=-1.0)


def _unit_switching(u_value):
    """Integrator ``x' = u``: the costate obeys ``lam' = -u`` so ``s = x + lam`` is constant."""
    sys = PHSystem([[0.0]], [[0.0]], [[1.0]], [[1.0]], [-1.0], [1.0])
    traj = simulate(sys, np.zeros(1), np.full((1, 20), u_value), 0.1)
    adj = integrate_adjoint(sys, traj, np.array([1.0 - traj.X[0, -1]]))
    np.testing.assert_allclose(adj.S, 1.0, atol=1e-14)
    return sys, traj, adj


def test_consistency_on_synthetic_bang():
    assert pmp_consistency(*_unit_switching(-1.0)).violation_fraction == 0.0
    assert pmp_consistency(*_unit_switching(1.0)).violation_fraction == 1.0


def test_optimal_solution_satisfies_minimum_condition(msd_solution):
    sys, sol = msd_solution
    adj = integrate_adjoint(sys, sol.traj, sol.multiplier_terminal)
    assert pmp_consistency(sys, sol.traj, adj).violation_fraction < 0.05


def test_singular_control_examples():
    sys, _ = builtin_system("msd-r1")
    assert singular_control(sys, np.zeros(3), np.zeros(3), [0])[0] == 0.0
    A = sys.J - sys.R
    np.testing.assert_allclose(A @ A @ [1.0, 0.0, 0.0], [1.0, -1.0, 2.0])
    assert singular_control(sys, np.array([1.0, 0.0, 0.0]), np.zeros(3), [0])[0] == 0.5
    lossless, _ = builtin_system("msd-lossless")
    with pytest.raises(PreconditionError):
        singular_control(lossless, np.ones(3), np.zeros(3), [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_singular_control_zeroes_second_derivative(n, seed):
    rng = np.random.default_rng(seed)
    R = random_spd(rng, n)
    sys = PHSystem(random_skew(rng, n), R, random_spd(rng, n), rng.standard_normal((n, 2)),
                   -np.ones(2), np.ones(2))
    x, lam = rng.standard_normal(n), rng.standard_normal(n)
    uA = rng.uniform(-1, 1, 1)
    uI = singular_control(sys, x, lam, [1], u_A=uA)
    u = np.array([uA[0], uI[0]])
    sdd = switching_second_derivative(sys, x, lam, u)
    scale = 1 + np.abs(sys.A).max() ** 2 * (np.abs(x).max() + np.abs(lam).max())
    assert abs(sdd[1]) <= 1e-8 * scale


def test_detected_singular_arcs_match_formula(msd_solution):
    sys, sol = msd_solution
    adj = integrate_adjoint(sys, sol.traj, sol.multiplier_terminal)
    arcs = check_singular_arcs(sys, sol.traj, adj, tol_sw=1e-4, min_length=0.5)
    assert arcs
    assert max(a.max_error for a in arcs) <= 5e-2


def test_singular_arc_runs():
    S = np.array([[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
    assert singular_arcs(S, 0.5, 1e-3, min_length=1.0) == [(0, 1, 3)]
    assert singular_arcs(S, 0.5, 1e-3, min_length=1.5) == []


def test_normality():
    sys, _ = builtin_system("msd-r1")
    K = np.column_stack([sys.B[:, 0], sys.A @ sys.B[:, 0], sys.A @ sys.A @ sys.B[:, 0]])
    assert is_normal(sys)[0] == (np.linalg.matrix_rank(K) == 3)
    trivial = PHSystem(np.zeros((3, 3)), np.zeros((3, 3)), np.eye(3), [[1.0], [0.0], [0.0]], [-1], [1])
    assert not is_normal(trivial)[0]
    # A = -diag(1, 2, 3) has distinct eigenvalues and b has all eigen-components nonzero
    distinct = PHSystem(np.zeros((3, 3)), np.diag([1.0, 2.0, 3.0]), np.eye(3), np.ones((3, 1)), [-1], [1])
    assert is_normal(distinct)[0]
    assert np.linalg.matrix_rank(kalman_matrix(distinct.A, np.ones(3))) == 3


def test_steady_state_of_strictly_dissipative_systems():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        sys = PHSystem(random_skew(rng, n), random_spd(rng, n), random_spd(rng, n),
                       rng.standard_normal((n, 1)), [-1], [1])
        sss = solve_steady_state(sys, anchor=rng.standard_normal(n))
        assert np.linalg.norm(sss.x_hat) + np.linalg.norm(sss.u_hat) <= 1e-12
        assert verify_steady_kkt(sys, sss)["passed"]


def test_steady_state_of_mass_spring_damper():
    sys, _ = builtin_system("msd-r1")
    sss = solve_steady_state(sys, anchor=np.array([1.0, 1.0, 1.0]))
    np.testing.assert_allclose(sss.x_hat, [1.0, 1.0, 0.0], atol=1e-12)
    assert abs(sss.u_hat[0]) <= 1e-12 and abs(sss.cost) <= 1e-12
    assert sss.family.shape[1] == 1
    assert verify_steady_kkt(sys, sss)["passed"]
    origin = solve_steady_state(sys)
    assert np.all(origin.x_hat == 0) and verify_steady_kkt(sys, origin)["passed"]


def test_steady_kkt_detects_perturbation():
    sys, _ = builtin_system("msd-r1")
    x = np.array([1.0, 1.0, 0.0])
    ok = SteadyStateSolution(x, np.zeros(1), -x, 0.0, np.zeros((4, 0)))
    assert verify_steady_kkt(sys, ok)["passed"]
    xp = x + 0.1 * np.array([1.0, -1.0, 0.0])
    bad = verify_steady_kkt(sys, SteadyStateSolution(xp, np.zeros(1), -x, 0.0, np.zeros((4, 0))))
    assert not bad["passed"]
    assert bad["RQx"] == pytest.approx(0.1 * np.linalg.norm(sys.R @ [1.0, -1.0, 0.0]))
    zero = SteadyStateSolution(np.zeros(3), np.zeros(1), np.zeros(3), 0.0, np.zeros((4, 0)))
    res = verify_steady_kkt(sys, zero)
    assert all(v == 0 for k, v in res.items() if k != "passed")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_steady_states_pass_kkt_on_random_systems(n, seed):
    rng = np.random.default_rng(seed)
    sys = random_ph_system(rng, n, 1)
    sss = solve_steady_state(sys, anchor=rng.standard_normal(n))
    assert verify_steady_kkt(sys, sss)["passed"]
