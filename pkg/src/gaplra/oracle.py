"""
Dense desk-scale spectral computations.

Everything here is built on cyclic Jacobi rotations so the ground truth used
by the tests does not share code with LAPACK-backed paths elsewhere.
Rotations are applied in round-robin (tournament) order, so each round
rotates n/2 disjoint column pairs at once with vectorized numpy.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, OracleScale
from .matrix import SparseColumnsMatrix, orthonormal_completion, qr_orthonormalize, spmv_t

ORACLE_MAX_DIM = 2000
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60


def _tournament_rounds(m):
    """Round-robin schedule: m-1 rounds (m even) of m/2 disjoint pairs covering all pairs."""
    players = list(range(m + (m % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < m and b < m]
        if pairs:
            rounds.append((np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _rotation(app, aqq, apq):
    """Jacobi rotation (c, s) zeroing the off-diagonal entry of [[app, apq], [apq, aqq]]."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        zeta = (aqq - app) / (2.0 * apq)
        t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
    t = np.where(zeta == 0, 1.0, t)
    t = np.where(apq == 0, 0.0, t)
    c = 1.0 / np.sqrt(1.0 + t * t)
    return c, c * t


def _sign_fix(vectors):
    """Flip columns so each column's largest-magnitude entry is nonnegative."""
    if vectors.size == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[idx, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    return signs


def jacobi_eigh(M, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic two-sided Jacobi.

    Returns
    -------
    w : ndarray (m,)
        Eigenvalues in descending order.
    V : ndarray (m, m)
        Orthonormal eigenvectors (columns), sign-normalized.
    """
    A = np.array(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolation("jacobi_eigh needs a square matrix")
    m = A.shape[0]
    if m > ORACLE_MAX_DIM:
        raise OracleScale(f"jacobi_eigh limited to {ORACLE_MAX_DIM}, got {m}")
    A = 0.5 * (A + A.T)
    V = np.eye(m)
    rounds = _tournament_rounds(m)
    for _ in range(max_sweeps):
        diag_mass = np.linalg.norm(np.diag(A))
        off_mass = np.linalg.norm(A - np.diag(np.diag(A)))
        if off_mass <= tol * diag_mass or off_mass == 0.0:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            c, s = _rotation(A[P, P], A[Q, Q], apq)
            ap, aq = A[:, P], A[:, Q]
            A[:, P], A[:, Q] = c * ap - s * aq, s * ap + c * aq
            ap, aq = A[P, :], A[Q, :]
            A[P, :], A[Q, :] = c[:, None] * ap - s[:, None] * aq, s[:, None] * ap + c[:, None] * aq
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vp, vq = V[:, P], V[:, Q]
            V[:, P], V[:, Q] = c * vp - s * vq, s * vp + c * vq
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    return w, V * _sign_fix(V)


def _one_sided_jacobi(G, tol, max_sweeps):
    """Orthogonalize the columns of G in place; returns (G, V) with G_in V = G_out."""
    m = G.shape[1]
    V = np.eye(m)
    rounds = _tournament_rounds(m)
    for _ in range(max_sweeps):
        off = 0.0
        for P, Q in rounds:
            gp, gq = G[:, P], G[:, Q]
            alpha = np.einsum("ij,ij->j", gp, gp)
            beta = np.einsum("ij,ij->j", gq, gq)
            gamma = np.einsum("ij,ij->j", gp, gq)
            off += float(np.dot(gamma, gamma))
            active = np.abs(gamma) > 1e-16 * np.sqrt(alpha * beta)
            if not np.any(active):
                continue
            gamma = np.where(active, gamma, 0.0)
            c, s = _rotation(alpha, beta, gamma)
            G[:, P], G[:, Q] = c * gp - s * gq, s * gp + c * gq
            vp, vq = V[:, P], V[:, Q]
            V[:, P], V[:, Q] = c * vp - s * vq, s * vp + c * vq
        on = float(np.sum(np.einsum("ij,ij->j", G, G) ** 2))
        if off <= (tol**2) * on or on == 0.0:
            break
    return G, V


@dataclass(frozen=True)
class ExactSVD:
    """Thin SVD X = U diag(singular_values) V^T with r = min(d, n)."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def rank_bound(self):
        return self.singular_values.size

    @property
    def eigenvalues(self):
        """Eigenvalues of X X^T (squared singular values)."""
        return self.singular_values**2

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.V.T


def _dense(X):
    if isinstance(X, SparseColumnsMatrix):
        return X.toarray()
    return np.asarray(X, dtype=np.float64)


def exact_svd(X, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Thin SVD by one-sided (Hestenes) Jacobi.

    Jacobi runs on whichever of X, X^T has fewer columns. Singular vectors
    for zero singular values are completed to an orthonormal set. The sign
    of each pair (u_i, v_i) is chosen so u_i's largest-magnitude entry is
    nonnegative.
    """
    A = _dense(X)
    if A.ndim != 2:
        raise ContractViolation("exact_svd needs a 2-D matrix")
    d, n = A.shape
    if d > ORACLE_MAX_DIM or n > ORACLE_MAX_DIM:
        raise OracleScale(f"exact_svd limited to {ORACLE_MAX_DIM} per side, got {d} x {n}")
    transposed = n > d
    G = (A.T if transposed else A).copy()
    G, R = _one_sided_jacobi(G, tol, max_sweeps)
    sv = np.linalg.norm(G, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, G, R = sv[order], G[:, order], R[:, order]
    scale = sv[0] if sv.size else 0.0
    keep = sv > 1e-14 * scale if scale > 0 else np.zeros(sv.size, dtype=bool)
    L = np.zeros_like(G)
    L[:, keep] = G[:, keep] / sv[keep]
    if not np.all(keep):
        L = _complete(L, keep)
    if transposed:
        U, V = R, L
    else:
        U, V = L, R
    signs = _sign_fix(U)
    return ExactSVD(U * signs, sv, V * signs)


def _complete(L, keep):
    """Replace columns not in ``keep`` by an orthonormal completion."""
    rng = np.random.default_rng(0)
    ordered = np.concatenate([L[:, keep], L[:, ~keep]], axis=1)
    filled = orthonormal_completion(ordered, rng)
    out = np.empty_like(L)
    out[:, keep] = filled[:, : keep.sum()]
    out[:, ~keep] = filled[:, keep.sum():]
    return out


def best_rank_k(svd, k):
    """Truncated SVD X_k with its Frobenius and spectral residual norms."""
    r = svd.rank_bound
    if not 1 <= k <= r:
        raise ContractViolation(f"k must be in [1, {r}], got {k}")
    Xk = (svd.U[:, :k] * svd.singular_values[:k]) @ svd.V[:, :k].T
    tail = svd.singular_values[k:]
    frob = float(np.sqrt(np.sum(tail**2)))
    spec = float(tail[0]) if tail.size else 0.0
    return Xk, frob, spec


def check_orthonormal(Q, tol=1e-10, what="basis"):
    Q = np.asarray(Q, dtype=np.float64)
    err = np.abs(Q.T @ Q - np.eye(Q.shape[1])).max() if Q.shape[1] else 0.0
    if err > tol:
        raise ContractViolation(f"{what} is not orthonormal (max |Q^T Q - I| = {err:.2e})")
    return Q


def restricted_best_rank_k(X, Q, k):
    """Best Frobenius rank-k projection of X inside range(Q).

    Returns W = Q U_k where U_k holds the top-k eigenvectors of the p x p
    matrix Q^T X X^T Q.
    """
    Q = check_orthonormal(Q, what="Q")
    if not 1 <= k < Q.shape[1]:
        raise ContractViolation(f"need 1 <= k < p, got k={k}, p={Q.shape[1]}")
    if isinstance(X, SparseColumnsMatrix):
        B = spmv_t(X, Q).T
    else:
        B = Q.T @ np.asarray(X, dtype=np.float64)
    _, Uh = jacobi_eigh(B @ B.T)
    return Q @ Uh[:, :k]


@dataclass(frozen=True)
class PrincipalAngles:
    """Cosines of the principal angles (descending) and tan of the largest angle.

    ``sines`` (ascending, paired with ``cosines``) keep small angles accurate.
    """

    cosines: np.ndarray
    tangent_k: float
    sines: np.ndarray = None

    @property
    def angles(self):
        if self.sines is None:
            return np.arccos(np.clip(self.cosines, 0.0, 1.0))
        return np.arctan2(self.sines, self.cosines)


def principal_angles(Uk, S):
    """Principal angles between range(Uk) (orthonormal, d x k) and range(S) (d x p, p >= k)."""
    Uk = check_orthonormal(Uk, what="Uk")
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    if Uk.ndim == 1:
        Uk = Uk[:, None]
    k, p = Uk.shape[1], S.shape[1]
    if not (k <= p <= S.shape[0]) or Uk.shape[0] != S.shape[0]:
        raise ContractViolation(f"need k <= p <= d, got k={k}, p={p}, d={S.shape[0]}")
    QS = qr_orthonormalize(S)
    cos = exact_svd(Uk.T @ QS).singular_values[:k]
    cos = np.clip(cos, 0.0, 1.0)
    # sines are the singular values of (I - QS QS^T) Uk; accurate for tiny angles
    resid = Uk - QS @ (QS.T @ Uk)
    sin = np.clip(exact_svd(resid).singular_values[:k][::-1], 0.0, 1.0)
    ck = cos[-1]
    if ck == 0.0:
        tan = np.inf
    elif ck > 0.5:
        tan = sin[-1] / np.sqrt(max(1.0 - sin[-1] ** 2, 0.0))
    else:
        tan = np.sqrt(1.0 - ck * ck) / ck
    return PrincipalAngles(cos, float(tan), sin)
