"""
Block power (subspace) iteration over matrix-free symmetric PSD operators,
the Rayleigh-Ritz step that turns its output into a rank-k projection, and
gap-free eigenvalue estimates built from the two.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import aslinearoperator

from .errors import ContractViolation, RankDeficient
from .matrix import child_seed, gaussian_init, orthonormal_completion, qr_orthonormalize
from .oracle import check_orthonormal, jacobi_eigh

C_MUSCO = 4.0
SYMMETRY_TOL = 1e-8
SYMMETRY_PROBES = 3


@dataclass
class SubspaceIterationConfig:
    """Block width ``p``, iteration count ``L`` and the seed for S^(0).

    ``convergence_tol`` enables an early exit once the projector onto the
    block moves by at most this much (Frobenius norm) in one iteration.
    """

    p: int
    L: int
    seed: int = 0
    convergence_tol: float = None

    def validate(self, d):
        if not 1 <= self.p < d:
            raise ContractViolation(f"block width must satisfy 1 <= p < d, got p={self.p}, d={d}")
        if self.L < 1:
            raise ContractViolation(f"iteration count must be >= 1, got {self.L}")
        if self.convergence_tol is not None and self.convergence_tol <= 0:
            raise ContractViolation("convergence_tol must be positive")


@dataclass
class SpectrumEstimate:
    """Descending eigenvalue estimates with their multiplicative accuracy.

    ``values[i]`` estimates the eigenvalue with global (1-based) index
    ``index_offset + i``. ``vectors`` holds the Ritz vectors when kept.
    """

    values: np.ndarray
    accuracy: float
    index_offset: int = 1
    vectors: np.ndarray = field(default=None, repr=False)
    iterations: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not 0 < self.accuracy < 1:
            raise ContractViolation(f"accuracy must lie in (0, 1), got {self.accuracy}")
        if np.any(self.values < 0) or np.any(np.diff(self.values) > 0):
            raise ContractViolation("estimates must be nonnegative and descending")

    def __len__(self):
        return self.values.size

    @property
    def indices(self):
        return list(range(self.index_offset, self.index_offset + self.values.size))

    def at(self, i):
        """Estimate for global index i."""
        j = i - self.index_offset
        if not 0 <= j < self.values.size:
            raise IndexError(f"index {i} outside {self.index_offset}..{self.index_offset + self.values.size - 1}")
        return float(self.values[j])


def _as_operator(C):
    return C if hasattr(C, "matmat") else aslinearoperator(C)


def _apply(C, V):
    return np.asarray(C.matmat(V), dtype=np.float64)


def check_self_adjoint(C, seed=0, probes=SYMMETRY_PROBES, tol=SYMMETRY_TOL):
    """Compare <Cx, y> with <x, Cy> on random pairs; raise ContractViolation on mismatch."""
    C = _as_operator(C)
    d = C.shape[0]
    rng = np.random.default_rng(child_seed(seed, 7))
    Xp = rng.standard_normal((d, probes))
    Yp = rng.standard_normal((d, probes))
    CX = _apply(C, Xp)
    CY = _apply(C, Yp)
    for i in range(probes):
        lhs = float(CX[:, i] @ Yp[:, i])
        rhs = float(Xp[:, i] @ CY[:, i])
        scale = max(np.linalg.norm(CX[:, i]) * np.linalg.norm(Yp[:, i]),
                    np.linalg.norm(CY[:, i]) * np.linalg.norm(Xp[:, i]))
        if abs(lhs - rhs) > tol * scale:
            raise ContractViolation(
                f"operator is not self-adjoint: <Cx,y>={lhs:.6e} vs <x,Cy>={rhs:.6e}"
            )


def _initial_block(d, p, seed):
    try:
        return qr_orthonormalize(gaussian_init(d, p, seed))
    except RankDeficient:
        return qr_orthonormalize(gaussian_init(d, p, seed + 1))


def subspace_iterate(C, cfg, stats=None, check_symmetry=True):
    """Run ``cfg.L`` rounds of S <- orth(C S) from a Gaussian start.

    Parameters
    ----------
    C : LinearOperator or array
        Symmetric positive semidefinite, applied through ``matmat``.
    cfg : SubspaceIterationConfig
    stats : dict, optional
        Receives ``iterations``, ``applies`` and ``qr`` counts.

    Returns
    -------
    S : ndarray (d, p), orthonormal columns.
    """
    C = _as_operator(C)
    d = C.shape[0]
    cfg.validate(d)
    if check_symmetry:
        check_self_adjoint(C, cfg.seed)
    S = _initial_block(d, cfg.p, cfg.seed)
    fill_rng = None
    qr_count = 1
    it = 0
    for it in range(1, cfg.L + 1):
        Y = _apply(C, S)
        try:
            S_new = qr_orthonormalize(Y)
        except RankDeficient:
            # the operator annihilated part of the block (rank(C) < p);
            # any orthonormal completion spans the same dominant part
            if fill_rng is None:
                fill_rng = np.random.default_rng(child_seed(cfg.seed, 11))
            S_new = orthonormal_completion(Y, fill_rng)
        qr_count += 1
        if cfg.convergence_tol is not None:
            moved = math.sqrt(2.0) * np.linalg.norm(S - S_new @ (S_new.T @ S))
            S = S_new
            if moved <= cfg.convergence_tol:
                break
        else:
            S = S_new
    if stats is not None:
        stats["iterations"] = stats.get("iterations", 0) + it
        stats["applies"] = stats.get("applies", 0) + it * cfg.p
        stats["qr"] = stats.get("qr", 0) + qr_count
    return S


def _compress(C, S, k):
    CS = _apply(C, S)
    B = S.T @ CS
    w, V = jacobi_eigh(0.5 * (B + B.T))
    return S @ V[:, :k], w[:k]


def restricted_projection(C, S, k):
    """Best rank-k projection of C's dominant part inside range(S).

    Eigendecomposes the p x p compression S^T C S and returns
    ``(W, eigs)`` with W = S U_k orthonormal and ``eigs`` the top-k
    eigenvalues of the compression, descending.
    """
    C = _as_operator(C)
    S = check_orthonormal(S, what="S")
    if not 1 <= k < S.shape[1]:
        raise ContractViolation(f"need 1 <= k < p, got k={k}, p={S.shape[1]}")
    return _compress(C, S, k)


def gap_free_iterations(d, eps_prime, c_musco=C_MUSCO):
    """L = ceil(c * eps'^-1 * ln(d / eps'))."""
    return int(math.ceil(c_musco / eps_prime * math.log(d / eps_prime)))


def estimate_eigenvalues(C, k, eps_prime, seed=0, c_musco=C_MUSCO, index_offset=1,
                         stats=None, keep_vectors=False):
    """Gap-free estimates of the top-k eigenvalues of a PSD operator.

    Runs k-column subspace iteration for ``gap_free_iterations(d, eps_prime)``
    rounds, rotates the block to Ritz vectors z_i and reports z_i^T C z_i.
    With high probability every estimate lies within a factor
    (1 - eps_prime) of the true eigenvalue, in both directions.
    """
    C = _as_operator(C)
    d = C.shape[0]
    if not 1 <= k < d:
        raise ContractViolation(f"need 1 <= k < d, got k={k}, d={d}")
    if not 0 < eps_prime < 1:
        raise ContractViolation(f"eps_prime must lie in (0, 1), got {eps_prime}")
    L = gap_free_iterations(d, eps_prime, c_musco)
    S = subspace_iterate(C, SubspaceIterationConfig(k, L, seed), stats=stats)
    # Ritz values of the k-dimensional compression are exactly z_i^T C z_i
    Z, eigs = _compress(C, S, k)
    if stats is not None:
        stats["applies"] = stats.get("applies", 0) + k
    values = np.maximum(np.sort(eigs)[::-1], 0.0)
    return SpectrumEstimate(values, eps_prime, index_offset,
                            Z if keep_vectors else None, iterations=L)
