import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phoct.builtins import builtin_system
from phoct.core import PHSystem, energy_balance_residual, hamiltonian
from phoct.errors import ConstraintError, PreconditionError
from phoct.generators import random_ph_system
from phoct.quadrature import zoh_quadratic_integral
from phoct.sim import (
    cost_supplied_energy,
    cost_via_balance,
    discretize_zoh,
    piecewise_constant,
    simulate,
    supplied_energy_exact,
    zoh,
)


def test_zoh_zero_matrix():
    B = np.array([[1.0], [2.0]])
    Ad, Bd = zoh(np.zeros((2, 2)), B, 0.3)
    np.testing.assert_array_equal(Ad, np.eye(2))
    np.testing.assert_allclose(Bd, 0.3 * B, atol=1e-16)


def test_zoh_rotation_quarter_turn():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    Ad, _ = zoh(A, np.zeros((2, 1)), np.pi / 2)
    np.testing.assert_allclose(Ad, A, atol=1e-14)


def test_zoh_semigroup():
    sys, _ = builtin_system("msd-r1")
    a = discretize_zoh(sys, 0.2)
    b = discretize_zoh(sys, 0.1)
    np.testing.assert_allclose(a.Ad, b.Ad @ b.Ad, atol=1e-12)
    np.testing.assert_allclose(a.Bd, b.Ad @ b.Bd + b.Bd, atol=1e-12)
    with pytest.raises(PreconditionError):
        discretize_zoh(sys, 0.0)


def test_lossless_free_flow_conserves_energy():
    sys, d = builtin_system("msd-lossless")
    traj = simulate(sys, d["x0"], np.zeros((1, 5000)), 1e-3)
    H = hamiltonian(sys, traj.X)
    assert np.max(np.abs(H - H[0])) < 1e-10
    assert energy_balance_residual(sys, traj) < 1e-10


def test_damped_free_flow_loses_energy():
    sys, _ = builtin_system("msd-r1")
    traj = simulate(sys, np.array([1.0, 0.0, 0.0]), np.zeros((1, 5000)), 1e-3)
    assert np.all(np.diff(hamiltonian(sys, traj.X)) <= 1e-15)
    assert energy_balance_residual(sys, traj) < 1e-6
    forced = simulate(sys, np.array([1.0, 0.0, 0.0]), np.full((1, 5000), sys.u_hi[0]), 1e-3)
    assert energy_balance_residual(sys, forced) < 1e-5


def test_empty_horizon_and_box_violation():
    sys, d = builtin_system("msd-r1")
    traj = simulate(sys, d["x0"], np.zeros((1, 0)), 0.1)
    assert traj.N == 0 and traj.X.shape == (3, 1)
    np.testing.assert_array_equal(traj.X[:, 0], d["x0"])
    assert cost_supplied_energy(traj) == 0.0
    with pytest.raises(ConstraintError):
        simulate(sys, d["x0"], np.full((1, 3), 2.5), 0.1)


def test_cost_examples():
    sys, _ = builtin_system("msd-r1")
    traj = simulate(sys, np.zeros(3), np.zeros((1, 10)), 0.1)
    assert cost_supplied_energy(traj) == 0.0 and cost_via_balance(sys, traj) == 0.0
    rng = np.random.default_rng(3)
    # random piecewise-constant control in [-1, 1], held for 0.1 time units
    U = piecewise_constant(rng.uniform(-1, 1, (1, 100)), 10)
    traj = simulate(sys, np.ones(3), U, 1e-2)
    assert abs(cost_supplied_energy(traj) - cost_via_balance(sys, traj)) < 1e-4


def test_boundary_term_of_msd_endpoints():
    sys, d = builtin_system("msd-r1")
    dH = hamiltonian(sys, d["x_target"]) - hamiltonian(sys, d["x0"])
    assert dH == pytest.approx(0.5 * 2.93 - 1.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_two_cost_evaluations_converge_quadratically(n, seed):
    rng = np.random.default_rng(seed)
    sys = random_ph_system(rng, n, 1)
    x0 = rng.standard_normal(n)
    V = rng.uniform(sys.u_lo[0], sys.u_hi[0], (1, 8))
    gaps = []
    for h, rep in ((1e-2, 25), (5e-3, 50)):
        traj = simulate(sys, x0, piecewise_constant(V, rep), h)
        gaps.append(abs(cost_supplied_energy(traj) - cost_via_balance(sys, traj)))
    if gaps[0] > 1e-11:
        assert gaps[1] <= gaps[0] / 3.0


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_exact_integral_matches_fine_quadrature(n, seed):
    rng = np.random.default_rng(seed)
    sys = random_ph_system(rng, n, 1)
    x0 = rng.standard_normal(n)
    V = rng.uniform(sys.u_lo[0], sys.u_hi[0], (1, 4))
    coarse = simulate(sys, x0, V, 0.5)
    fine = simulate(sys, x0, piecewise_constant(V, 500), 1e-3)
    assert abs(supplied_energy_exact(sys, coarse) - cost_supplied_energy(fine)) < 1e-5


def test_exact_integral_is_exact_for_constant_state():
    # A = 0: x constant, integral of x^T M x over [0, h] is h x^T M x
    sys = PHSystem(np.zeros((2, 2)), np.zeros((2, 2)), np.eye(2), [[0.0], [0.0]], [-1], [1])
    X = np.array([[1.0, 1.0], [2.0, 2.0]])
    M = np.zeros((3, 3))
    M[:2, :2] = np.eye(2)
    assert zoh_quadratic_integral(sys.A, sys.B, M, 0.7, X, np.zeros((1, 1))) == pytest.approx(0.7 * 5.0)
