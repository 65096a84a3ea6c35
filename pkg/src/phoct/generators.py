"""Random port-Hamiltonian systems with a prescribed conservative dimension."""

import numpy as np

from .core import PHSystem


def random_skew(rng, k, scale=1.0):
    X = rng.standard_normal((k, k)) * scale
    return 0.5 * (X - X.T)


def random_orthogonal(rng, k):
    Qm, Rm = np.linalg.qr(rng.standard_normal((k, k)))
    return Qm * np.sign(np.diag(Rm))


def random_spd(rng, k, cond=10.0):
    w = np.exp(rng.uniform(0.0, np.log(cond), size=k))
    V = random_orthogonal(rng, k)
    return (V * w) @ V.T


def random_ph_system(rng, n, m, d1=None, box=(0.5, 1.0), q_cond=10.0, unit_scale=True, max_tries=50):
    """Draw a pH system whose conservative subspace has dimension ``d1``.

    The construction runs in energy coordinates: an orthonormal splitting
    ``W1 | W2`` carries a skew block on ``W1`` and a complement ``J2 - R2``
    that is Hurwitz with a margin of at least ``1e-2`` of its spectral
    radius. A random SPD ``Q`` then maps the structure back to original
    coordinates.

    Parameters
    ----------
    rng : numpy.random.Generator
    n, m : int
        State and input dimensions, ``1 <= m <= n``.
    d1 : int, optional
        Conservative dimension; drawn uniformly from ``0..n`` if omitted.
    box : (float, float)
        Range for the magnitudes of the per-channel bounds.
    unit_scale : bool
        Normalize, in energy coordinates, ``||J~ - R~||_2 = 1`` and
        ``||B~||_2 = 1``. Energy quantities are invariant under the change
        of coordinates, so this fixes the time scale and the input gain of
        the corpus independently of ``Q``.
    """
    if d1 is None:
        d1 = int(rng.integers(0, n + 1))
    d2 = n - d1
    for _ in range(max_tries):
        W = random_orthogonal(rng, n)
        W1, W2 = W[:, :d1], W[:, d1:]
        J1 = random_skew(rng, d1, 2.0 / np.sqrt(max(d1, 1)))
        J2 = random_skew(rng, d2, 2.0 / np.sqrt(max(d2, 1)))
        if d2:
            r = int(rng.integers(1, d2 + 1))
            L = rng.standard_normal((d2, r)) / np.sqrt(r)
            R2 = L @ L.T + (0.05 * np.eye(d2) if rng.random() < 0.5 else 0.0)
            eig = np.linalg.eigvals(J2 - R2)
            if np.max(eig.real) > -1e-2 * max(np.max(np.abs(eig)), 1e-12):
                continue
        else:
            R2 = np.zeros((0, 0))
        Jt = W1 @ J1 @ W1.T + W2 @ J2 @ W2.T
        Rt = W2 @ R2 @ W2.T
        Bt = rng.standard_normal((n, m)) / np.sqrt(n)
        if unit_scale:
            a = np.linalg.norm(Jt - Rt, 2)
            if a > 0:
                Jt, Rt = Jt / a, Rt / a
            Bt = Bt / np.linalg.norm(Bt, 2)
        Q = random_spd(rng, n, q_cond)
        w, V = np.linalg.eigh(Q)
        Qi_h = (V / np.sqrt(w)) @ V.T
        J = Qi_h @ Jt @ Qi_h
        R = Qi_h @ Rt @ Qi_h
        J = 0.5 * (J - J.T)
        R = 0.5 * (R + R.T)
        B = Qi_h @ Bt
        lo = -rng.uniform(*box, size=m)
        hi = rng.uniform(*box, size=m)
        return PHSystem(J, R, Q, B, lo, hi)
    raise RuntimeError("could not draw a system with a Hurwitz dissipative block")


def random_corpus(seed, count, n_max=8, m_max=3):
    """Deterministic list of random systems with ``n <= n_max`` and ``m <= m_max``."""
    rng = np.random.default_rng(seed)
    systems = []
    for _ in range(count):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, min(m_max, n) + 1))
        systems.append(random_ph_system(rng, n, m))
    return systems
