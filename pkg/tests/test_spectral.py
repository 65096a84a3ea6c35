import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from phoct.builtins import builtin_system
from phoct.core import PHSystem
from phoct.errors import DecompositionError, PreconditionError
from phoct.generators import random_ph_system
from phoct.spectral import (
    decay_envelope,
    decompose,
    decomposition_report,
    dist_to_kernel,
    imaginary_semisimple,
    kernel_geometry,
    reachable_bound,
    slowest_period,
)

S2 = np.sqrt(2.0)


def test_msd_r1_has_one_conservative_direction():
    sys, _ = builtin_system("msd-r1")
    dec = decompose(sys)
    assert (dec.d1, dec.d2) == (1, 2)
    v = dec.V1[:, 0] * np.sign(dec.V1[0, 0])
    np.testing.assert_allclose(v, [1 / S2, 1 / S2, 0], atol=1e-12)
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(dec.A2)), [-1 - 1j, -1 + 1j], atol=1e-12)
    assert dec.hurwitz_margin == pytest.approx(1.0)


def test_lossless_is_fully_conservative():
    sys, _ = builtin_system("msd-lossless")
    dec = decompose(sys)
    assert (dec.d1, dec.d2) == (3, 0)
    assert dec.hurwitz_margin == np.inf
    rep = decomposition_report(dec)
    assert rep["hurwitz_margin"] is None


def test_unstable_matrix_is_rejected():
    # R negative definite: not a pH system, the check catches the right half-plane spectrum
    sys = PHSystem(np.zeros((2, 2)), -np.eye(2), np.eye(2), np.eye(2)[:, :1], [-1], [1])
    with pytest.raises(DecompositionError):
        decompose(sys)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31 - 1), st.data())
def test_decomposition_recovers_conservative_dimension(n, seed, data):
    d1 = data.draw(st.integers(0, n))
    rng = np.random.default_rng(seed)
    sys = random_ph_system(rng, n, 1, d1=d1)
    dec = decompose(sys)
    assert dec.d1 == d1
    V = np.hstack([dec.V1, dec.V2])
    np.testing.assert_allclose(V.T @ sys.Q @ V, np.eye(n), atol=1e-10)
    for z, r1, r2 in imaginary_semisimple(sys.A):
        assert r1 == r2


def test_semisimple_detects_jordan_block():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    [(z, r1, r2)] = imaginary_semisimple(A)
    assert z == 0 and (r1, r2) == (1, 0)


def test_kernel_geometry_msd_r1():
    sys, _ = builtin_system("msd-r1")
    g = kernel_geometry(sys)
    assert g.dim == 2 and not g.degenerate
    assert g.c1 == pytest.approx(S2) and g.c2 == pytest.approx(S2)
    assert dist_to_kernel(g, np.array([1.0, 0.0, 0.0])) == pytest.approx(1 / S2)
    assert dist_to_kernel(g, np.array([1.0, -1.0, 0.0])) == pytest.approx(S2)
    assert dist_to_kernel(g, np.array([2.0, 2.0, -3.0])) == pytest.approx(0.0, abs=1e-15)


def test_kernel_geometry_msd_r2_and_identity():
    sys, _ = builtin_system("msd-r2")
    g = kernel_geometry(sys)
    assert dist_to_kernel(g, np.array([1.0, -1.0, 5.0])) == pytest.approx(0.0, abs=1e-14)
    assert dist_to_kernel(g, np.array([1.0, 1.0, 0.0])) == pytest.approx(S2)
    ident = PHSystem(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2), [-1, -1], [1, 1])
    g = kernel_geometry(ident)
    assert g.dim == 0 and g.c1 == pytest.approx(1.0) and g.c2 == pytest.approx(1.0)
    lossless, _ = builtin_system("msd-lossless")
    assert kernel_geometry(lossless).degenerate


def test_decay_envelope_examples():
    assert decay_envelope(-np.eye(3)) == pytest.approx((1.0, 1.0))
    M, mu = decay_envelope(np.diag([-1.0, -3.0]))
    # P = diag(1/2, 1/6)
    assert M == pytest.approx(np.sqrt(3.0)) and mu == pytest.approx(1.0)
    A2 = np.array([[-1.0, 1.0], [-1.0, -1.0]])
    M, mu = decay_envelope(A2)
    for t in np.linspace(0.0, 20.0, 401):
        assert np.linalg.norm(expm(t * A2), 2) * np.exp(mu * t) <= M * (1 + 1e-12)
    with pytest.raises(PreconditionError):
        decay_envelope(np.array([[0.0]]))


def test_reachable_bound_scaling():
    sys, d = builtin_system("msd-r1")
    dec = decompose(sys)
    zero_box = sys.with_box([0.0], [0.0])
    x_in_m1 = np.array([1.0, 1.0, 0.0])
    assert reachable_bound(zero_box, dec, x_in_m1) == pytest.approx(0.0, abs=1e-14)
    b1 = reachable_bound(sys, dec, x_in_m1)
    b2 = reachable_bound(sys.with_box(2 * sys.u_lo, 2 * sys.u_hi), dec, x_in_m1)
    assert b2 == pytest.approx(2 * b1)
    assert np.isfinite(reachable_bound(sys, dec, d["x0"]))


def test_slowest_period():
    sys, _ = builtin_system("msd-r1")
    assert slowest_period(sys) == pytest.approx(2 * np.pi)
    diag = PHSystem(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2), [-1, -1], [1, 1])
    assert slowest_period(diag) is None
