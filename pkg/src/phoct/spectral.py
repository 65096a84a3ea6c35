"""Conservative/dissipative splitting of the state space and related geometry.

The conservative subspace ``M1`` is spanned by the real and imaginary parts of
the eigenvectors of ``A = (J - R) Q`` on the imaginary axis; ``M2`` is its
``Q``-orthogonal complement. In ``Q``-orthonormal coordinates for ``M1 + M2``
the dynamics split into a skew block ``J1`` and a Hurwitz block ``J2 - R2``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space, schur, solve_continuous_lyapunov

from .core import to_spherical
from .errors import DecompositionError, NumericError, PreconditionError

TOL_IMAG = 1e-9


@dataclass(frozen=True, eq=False)
class SubspaceDecomposition:
    """``Q``-orthogonal splitting ``R^n = M1 (+) M2``.

    ``V1`` and ``V2`` are ``Q``-orthonormal bases; coordinates of a state
    ``x`` are ``V1^T Q x`` and ``V2^T Q x``. Blocks are the matrices of
    ``JQ``, ``RQ`` and of the input map in those coordinates.
    """

    V1: np.ndarray
    V2: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    R2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    hurwitz_margin: float
    eigenvalues: np.ndarray
    imaginary: np.ndarray
    borderline: np.ndarray
    residuals: dict = field(default_factory=dict)
    basis_method: str = "eigenvectors"

    @property
    def d1(self):
        return self.V1.shape[1]

    @property
    def d2(self):
        return self.V2.shape[1]

    @property
    def A2(self):
        return self.J2 - self.R2

    def components(self, Q, X):
        """Coordinates ``(V1^T Q X, V2^T Q X)`` of states (columns of ``X``)."""
        QX = Q @ np.asarray(X, dtype=float)
        return self.V1.T @ QX, self.V2.T @ QX


def _mgs(vectors, drop_tol=1e-8):
    """Twice-iterated modified Gram-Schmidt, dropping dependent vectors."""
    basis = []
    for v in vectors:
        nv = np.linalg.norm(v)
        if nv < 1e-14:
            continue
        w = v / nv
        for _ in range(2):
            for q in basis:
                w = w - (q @ w) * q
        nw = np.linalg.norm(w)
        if nw > drop_tol:
            basis.append(w / nw)
    if not basis:
        return np.zeros((len(vectors[0]) if vectors else 0, 0))
    return np.column_stack(basis)


def _schur_basis(At, thr):
    n = At.shape[0]
    T, Z, sdim = schur(At, output="real", sort=lambda re, im: abs(re) <= thr)
    return Z[:, :sdim] if sdim else np.zeros((n, 0))


def decompose(sys, tol_imag=TOL_IMAG):
    """Split the state space of ``sys`` into conservative and dissipative parts.

    Parameters
    ----------
    sys : PHSystem
        A validated system.
    tol_imag : float
        An eigenvalue ``lam`` of ``A`` counts as imaginary when
        ``|Re lam| <= tol_imag * rho(A)``.

    Returns
    -------
    SubspaceDecomposition

    Raises
    ------
    NumericError
        The eigensolver failed.
    DecompositionError
        A post-condition (spectrum in the closed left half-plane,
        ``Q``-orthogonality, ``M1 in ker RQ``, skewness, Hurwitz block,
        block reconstruction) does not hold.
    """
    sph, Qh = to_spherical(sys)
    Qh_inv = np.linalg.inv(Qh)
    At = sph.J - sph.R
    n = sys.n
    try:
        lam, vec = np.linalg.eig(At)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed: {exc}") from exc
    rho = float(np.max(np.abs(lam))) if n else 0.0
    thr = tol_imag * rho
    if n and np.max(lam.real) > thr:
        raise DecompositionError(
            "eigenvalue in the open right half-plane",
            {"max_real": float(np.max(lam.real)), "threshold": thr},
        )
    imag = np.abs(lam.real) <= thr
    borderline = lam[(~imag) & (np.abs(lam.real) <= 1e3 * thr)]

    cand = []
    for v in vec[:, imag].T:
        cand.append(v.real)
        cand.append(v.imag)
    W1 = _mgs(cand) if cand else np.zeros((n, 0))
    method = "eigenvectors"
    if W1.shape[1] != int(np.sum(imag)):
        W1 = _schur_basis(At, thr)
        method = "schur"
    W2 = null_space(W1.T) if W1.shape[1] else np.eye(n)
    if W1.shape[1] == n:
        W2 = np.zeros((n, 0))

    Bt = sph.B
    J1 = W1.T @ sph.J @ W1
    J2 = W2.T @ sph.J @ W2
    R2 = W2.T @ sph.R @ W2
    V1 = Qh_inv @ W1
    V2 = Qh_inv @ W2
    if W2.shape[1]:
        margin = -float(np.max(np.linalg.eigvals(J2 - R2).real))
    else:
        margin = float("inf")

    dec = SubspaceDecomposition(
        V1=V1, V2=V2, J1=J1, J2=J2, R2=R2, B1=W1.T @ Bt, B2=W2.T @ Bt,
        hurwitz_margin=margin, eigenvalues=lam, imaginary=lam[imag],
        borderline=borderline, basis_method=method,
    )
    res = decomposition_residuals(sys, dec)
    object.__setattr__(dec, "residuals", res)
    failed = [k for k, ok in _residual_ok(sys, res).items() if not ok]
    if failed:
        raise DecompositionError(f"decomposition invariants violated: {failed}", res)
    return dec


def decomposition_residuals(sys, dec):
    """Residual of every ``SubspaceDecomposition`` invariant."""
    Q = sys.Q
    V1, V2 = dec.V1, dec.V2
    d1, d2 = dec.d1, dec.d2
    V = np.hstack([V1, V2])
    orth = np.max(np.abs(V.T @ Q @ V - np.eye(d1 + d2))) if d1 + d2 else 0.0
    RQ = sys.R @ Q
    JQ = sys.J @ Q
    ker = np.linalg.norm(RQ @ V1, 2) if d1 else 0.0
    Jb = np.zeros((d1 + d2, d1 + d2))
    Jb[:d1, :d1] = dec.J1
    Jb[d1:, d1:] = dec.J2
    Rb = np.zeros_like(Jb)
    Rb[d1:, d1:] = dec.R2
    return {
        "q_orthogonality": float(orth),
        "ker_RQ": float(ker),
        "ker_RQ_scale": float(np.linalg.norm(RQ, 2)),
        "J1_skew": float(np.max(np.abs(dec.J1 + dec.J1.T))) if d1 else 0.0,
        "J2_skew": float(np.max(np.abs(dec.J2 + dec.J2.T))) if d2 else 0.0,
        "hurwitz_margin": dec.hurwitz_margin,
        "JQ_blocks": float(np.linalg.norm(JQ @ V - V @ Jb, 2)),
        "RQ_blocks": float(np.linalg.norm(RQ @ V - V @ Rb, 2)),
    }


def _residual_ok(sys, res):
    return {
        "q_orthogonality": res["q_orthogonality"] <= 1e-10,
        "ker_RQ": res["ker_RQ"] <= 1e-8 * res["ker_RQ_scale"],
        "J1_skew": res["J1_skew"] <= 1e-10,
        "J2_skew": res["J2_skew"] <= 1e-10,
        "hurwitz_margin": res["hurwitz_margin"] > 0.0,
        "JQ_blocks": res["JQ_blocks"] <= 1e-8,
        "RQ_blocks": res["RQ_blocks"] <= 1e-8,
    }


def imaginary_semisimple(A, eigenvalues=None, tol_imag=TOL_IMAG, rank_tol=1e-8):
    """Check ``rank(A - i a I) == rank((A - i a I)^2)`` at every imaginary eigenvalue.

    Returns
    -------
    list of (complex, int, int)
        ``(eigenvalue, rank1, rank2)`` per distinct imaginary eigenvalue;
        semisimplicity holds when ``rank1 == rank2`` for every entry.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    lam = np.linalg.eigvals(A) if eigenvalues is None else np.asarray(eigenvalues)
    rho = float(np.max(np.abs(lam))) if n else 0.0
    scale = max(1.0, np.linalg.norm(A, 2), rho)
    imag = lam[np.abs(lam.real) <= tol_imag * rho]
    distinct = []
    for z in imag:
        z = complex(0.0, z.imag)
        if all(abs(z - w) > 1e-8 * scale for w in distinct):
            distinct.append(z)
    out = []
    for z in distinct:
        S = A - z * np.eye(n)
        s1 = np.linalg.svd(S, compute_uv=False)
        s2 = np.linalg.svd(S @ S, compute_uv=False)
        r1 = int(np.sum(s1 > rank_tol * scale))
        r2 = int(np.sum(s2 > rank_tol * scale * scale))
        out.append((z, r1, r2))
    return out


def decomposition_report(dec):
    """JSON-ready summary of a decomposition."""
    def cplx(a):
        return [[float(z.real), float(z.imag)] for z in np.asarray(a)]

    return {
        "d1": dec.d1,
        "d2": dec.d2,
        "V1": dec.V1.tolist(),
        "V2": dec.V2.tolist(),
        "J1": dec.J1.tolist(),
        "J2": dec.J2.tolist(),
        "R2": dec.R2.tolist(),
        "B1": dec.B1.tolist(),
        "B2": dec.B2.tolist(),
        "eigenvalues": cplx(dec.eigenvalues),
        "imaginary_eigenvalues": cplx(dec.imaginary),
        "borderline_eigenvalues": cplx(dec.borderline),
        "hurwitz_margin": dec.hurwitz_margin if np.isfinite(dec.hurwitz_margin) else None,
        "basis_method": dec.basis_method,
        "residuals": {k: (v if np.isfinite(v) else None) for k, v in dec.residuals.items()},
    }


@dataclass(frozen=True, eq=False)
class KernelGeometry:
    """Orthonormal basis ``K`` of ``ker(R^{1/2} Q) = ker(QRQ)`` and the constants
    ``c1 <= c2`` with ``c1 dist(x, ker) <= ||R^{1/2} Q x|| <= c2 dist(x, ker)``.

    When ``R = 0`` the kernel is the whole space, ``degenerate`` is set and
    ``c1``/``c2`` are ``None``.
    """

    K: np.ndarray
    complement: np.ndarray
    c1: float | None
    c2: float | None
    degenerate: bool

    @property
    def dim(self):
        return self.K.shape[1]


def kernel_geometry(sys, rel_tol=1e-10):
    """Kernel of the dissipation form ``D = QRQ`` and its bounds on the complement.

    Eigenvalues of ``D`` at most ``rel_tol * (1 + max |eig|)`` count as zero.
    """
    D = sys.dissipation
    w, V = np.linalg.eigh(D)
    thr = rel_tol * (1.0 + float(np.max(np.abs(w))))
    pos = w > thr
    K = V[:, ~pos]
    if not np.any(pos):
        return KernelGeometry(K, V[:, pos], None, None, True)
    return KernelGeometry(K, V[:, pos], float(np.sqrt(w[pos].min())), float(np.sqrt(w[pos].max())), False)


def dist_to_kernel(geom, x):
    """Euclidean distance of ``x`` (or of each column of ``x``) to the kernel."""
    x = np.asarray(x, dtype=float)
    P = geom.complement
    z = P.T @ x
    return np.sqrt(np.sum(z * z, axis=0)) if x.ndim > 1 else float(np.linalg.norm(z))


def decay_envelope(A2):
    """Certified ``(M, mu)`` with ``||exp(t A2)|| <= M exp(-mu t)`` for ``t >= 0``.

    From ``A2^T P + P A2 = -I``: ``mu = 1 / (2 lambda_max(P))`` and
    ``M = sqrt(lambda_max(P) / lambda_min(P))``.

    Raises
    ------
    PreconditionError
        ``A2`` is not Hurwitz.
    """
    A2 = np.atleast_2d(np.asarray(A2, dtype=float))
    k = A2.shape[0]
    if k == 0:
        raise PreconditionError("empty matrix has no decay envelope")
    if np.max(np.linalg.eigvals(A2).real) >= 0.0:
        raise PreconditionError("matrix is not Hurwitz")
    P = solve_continuous_lyapunov(A2.T, -np.eye(k))
    P = 0.5 * (P + P.T)
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0.0:
        raise PreconditionError("Lyapunov solution is not positive definite")
    return float(np.sqrt(w[-1] / w[0])), float(1.0 / (2.0 * w[-1]))


def max_input_norm(sys):
    """``max_{v in U} ||v||`` (attained at a vertex of the box)."""
    return float(np.linalg.norm(np.maximum(np.abs(sys.u_lo), np.abs(sys.u_hi))))


def reachable_bound(sys, dec, x0):
    """Radius bounding the ``M2`` coordinates of every trajectory from ``x0``.

    ``M ||x2(0)|| + (M / mu) ||B2|| max_{v in U} ||v||`` with ``(M, mu)`` from
    :func:`decay_envelope` applied to ``J2 - R2``.
    """
    if dec.d2 == 0:
        raise PreconditionError("no dissipative subspace")
    M, mu = decay_envelope(dec.A2)
    x2 = dec.V2.T @ sys.Q @ np.asarray(x0, dtype=float)
    return float(M * np.linalg.norm(x2) + (M / mu) * np.linalg.norm(dec.B2, 2) * max_input_norm(sys))


def slowest_period(sys):
    """Longest oscillation period ``2 pi / |Im lam|`` over eigenvalues with ``Im lam != 0``."""
    lam = np.linalg.eigvals(sys.A)
    rho = float(np.max(np.abs(lam))) if lam.size else 0.0
    im = np.abs(lam.imag)
    im = im[im > 1e-9 * max(rho, 1.0)]
    return float(2.0 * np.pi / im.min()) if im.size else None
