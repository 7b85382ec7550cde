"""
Matrix storage and the kernels every other module multiplies through.

The data matrix X (d x n) is kept column-major so that a single column x_j
can be sampled in O(nnz(x_j)); that is what the stochastic solvers need.
Matrix-free operators are :class:`scipy.sparse.linalg.LinearOperator`
subclasses acting on d-vectors or d x p blocks.
"""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import ContractViolation, RankDeficient

# Above this fill ratio the Gram kernel multiplies through a dense copy of X.
DENSE_FILL_THRESHOLD = 0.25
# Relative size of a QR pivot below which a column counts as dependent.
RANK_TOL = 1e-13


class SparseColumnsMatrix:
    """Immutable d x n matrix stored as compressed sparse columns.

    Parameters
    ----------
    data : scipy sparse matrix or array-like
        Anything scipy can turn into CSC. Duplicate entries are summed,
        explicit zeros are kept, indices are sorted.
    """

    def __init__(self, data):
        csc = sp.csc_matrix(data, dtype=np.float64, copy=True)
        csc.sum_duplicates()
        csc.sort_indices()
        if not np.all(np.isfinite(csc.data)):
            raise ContractViolation("matrix entries must be finite")
        for arr in (csc.data, csc.indices, csc.indptr):
            arr.setflags(write=False)
        self._csc = csc
        self._csr_t = csc.T.tocsr()
        self._dense = None
        if self.nnz >= DENSE_FILL_THRESHOLD * self.d * self.n:
            self._dense = csc.toarray()
            self._dense.setflags(write=False)

    @classmethod
    def from_columns(cls, d, columns):
        """Build from a list of ``(indices, values)`` pairs, one per column."""
        indptr = [0]
        indices, values = [], []
        for j, (idx, val) in enumerate(columns):
            idx = np.asarray(idx, dtype=np.int64)
            val = np.asarray(val, dtype=np.float64)
            if idx.shape != val.shape:
                raise ContractViolation(f"column {j}: index/value length mismatch")
            if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= d):
                raise ContractViolation(
                    f"column {j}: indices must be strictly increasing and within [0, {d})"
                )
            indices.append(idx)
            values.append(val)
            indptr.append(indptr[-1] + idx.size)
        n = len(columns)
        cat = (lambda parts, dt: np.concatenate(parts) if parts else np.zeros(0, dt))
        csc = sp.csc_matrix(
            (cat(values, np.float64), cat(indices, np.int64), np.asarray(indptr)), shape=(d, n)
        )
        return cls(csc)

    @property
    def shape(self):
        return self._csc.shape

    @property
    def d(self):
        return self._csc.shape[0]

    @property
    def n(self):
        return self._csc.shape[1]

    @property
    def nnz(self):
        return int(self._csc.nnz)

    @property
    def csc(self):
        return self._csc

    @property
    def indptr(self):
        return self._csc.indptr

    @property
    def indices(self):
        return self._csc.indices

    @property
    def data(self):
        return self._csc.data

    def column(self, j):
        """Return ``(indices, values)`` of column j."""
        lo, hi = self._csc.indptr[j], self._csc.indptr[j + 1]
        return self._csc.indices[lo:hi], self._csc.data[lo:hi]

    def toarray(self):
        return self._csc.toarray()

    def frobenius_norm(self):
        return float(np.sqrt(np.dot(self._csc.data, self._csc.data)))

    def column_sq_norms(self):
        return np.asarray(self._csc.multiply(self._csc).sum(axis=0)).ravel()

    def __repr__(self):
        return f"SparseColumnsMatrix(d={self.d}, n={self.n}, nnz={self.nnz})"


def as_columns_matrix(X):
    return X if isinstance(X, SparseColumnsMatrix) else SparseColumnsMatrix(X)


def _check_rows(v, size, what):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[0] != size:
        raise ContractViolation(f"{what}: expected leading dimension {size}, got shape {v.shape}")
    return v


def spmv(X, v):
    """Return X @ v for a length-n vector (or n x p block) v."""
    v = _check_rows(v, X.n, "spmv")
    if X._dense is not None:
        return X._dense @ v
    return X.csc @ v


def spmv_t(X, v):
    """Return X^T @ v for a length-d vector (or d x p block) v."""
    v = _check_rows(v, X.d, "spmv_t")
    if X._dense is not None:
        return X._dense.T @ v
    return X._csr_t @ v


def gram_apply(X, v):
    """Return X (X^T v) without forming XX^T."""
    return spmv(X, spmv_t(X, v))


def qr_orthonormalize(Y, return_r=False):
    """Orthonormal basis of range(Y) via Householder QR.

    Signs are fixed so that diag(R) >= 0, which makes the result a
    deterministic function of Y.

    Raises
    ------
    RankDeficient
        If some |R_jj| <= 1e-13 * max_i |R_ii|.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] > Y.shape[0]:
        raise ContractViolation(f"qr_orthonormalize needs a tall d x p block, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ContractViolation("qr_orthonormalize: non-finite entries")
    Q, R = np.linalg.qr(Y)
    diag = np.abs(np.diag(R))
    scale = diag.max() if diag.size else 0.0
    bad = np.flatnonzero(diag <= RANK_TOL * scale) if scale > 0 else np.arange(diag.size)
    if bad.size:
        raise RankDeficient(int(bad[0]))
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * signs
    if return_r:
        return Q, R * signs[:, None]
    return Q


def orthonormal_completion(Y, rng):
    """Orthonormalize Y, replacing numerically dependent columns by random ones.

    Used where a block legitimately loses rank (e.g. the operator has rank
    smaller than the block width); the replacement columns are orthogonal
    to everything kept.
    """
    Y = np.array(Y, dtype=np.float64)
    d, p = Y.shape
    Q = np.zeros((d, p))
    norms = np.linalg.norm(Y, axis=0)
    scale = norms.max() if p else 0.0
    for j in range(p):
        v = Y[:, j]
        accepted = False
        for _ in range(2):
            v = v - Q[:, :j] @ (Q[:, :j].T @ v)
        if scale > 0 and np.linalg.norm(v) > RANK_TOL * scale:
            accepted = True
        while not accepted:
            v = rng.standard_normal(d)
            for _ in range(2):
                v = v - Q[:, :j] @ (Q[:, :j].T @ v)
            accepted = np.linalg.norm(v) > 1e-8
        Q[:, j] = v / np.linalg.norm(v)
    return Q


def root_sequence(seed):
    """SeedSequence at the root of a run; children are spawned per component."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, *path):
    """Deterministic integer seed for the component addressed by ``path``."""
    base = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    ss = np.random.SeedSequence(base, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gaussian_init(d, p, seed):
    """d x p matrix of i.i.d. N(0, 1) entries, a pure function of (d, p, seed)."""
    if not (1 <= p <= d):
        raise ContractViolation(f"gaussian_init needs 1 <= p <= d, got p={p}, d={d}")
    return np.random.default_rng(seed).standard_normal((d, p))


def project_out(basis, V):
    """Apply (I - U U^T) to V; ``basis`` may be None or have zero columns."""
    if basis is None or basis.shape[1] == 0:
        return V
    return V - basis @ (basis.T @ V)


class SymmetricOperator(LinearOperator):
    """Self-adjoint matrix-free operator on R^d with an application counter.

    ``applies`` counts single-vector applications (a d x p block counts p).
    """

    def __init__(self, d):
        super().__init__(dtype=np.float64, shape=(d, d))
        self.applies = 0

    @property
    def dim(self):
        return self.shape[0]

    def _block(self, V):
        raise NotImplementedError

    def _matmat(self, V):
        V = np.asarray(V, dtype=np.float64)
        self.applies += V.shape[1]
        return self._block(V)

    def _matvec(self, v):
        return self._matmat(np.asarray(v, dtype=np.float64).reshape(-1, 1)).ravel()

    def _adjoint(self):
        return self

    def _rmatvec(self, v):
        return self._matvec(v)


class GramOperator(SymmetricOperator):
    """A = X X^T applied in factored form."""

    def __init__(self, X):
        self.X = as_columns_matrix(X)
        super().__init__(self.X.d)

    def _block(self, V):
        return gram_apply(self.X, V)


class DenseSymmetricOperator(SymmetricOperator):
    """Wraps an explicit symmetric array (tests and small problems)."""

    def __init__(self, M):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ContractViolation("DenseSymmetricOperator needs a square array")
        self.M = M
        super().__init__(M.shape[0])

    def _block(self, V):
        return self.M @ V


class DeflatedOperator(SymmetricOperator):
    """(I - U U^T) C (I - U U^T), never materialized.

    Parameters
    ----------
    base : LinearOperator
        The symmetric operator C.
    basis : ndarray (d, m) or None
        Orthonormal columns to project out; m = 0 means no deflation.
    """

    def __init__(self, base, basis=None, tol=1e-10):
        d = base.shape[0]
        if basis is None:
            basis = np.zeros((d, 0))
        basis = np.asarray(basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[0] != d:
            raise ContractViolation(f"deflation basis must be {d} x m, got {basis.shape}")
        if basis.shape[1]:
            gram_err = np.abs(basis.T @ basis - np.eye(basis.shape[1])).max()
            if gram_err > tol:
                raise ContractViolation(f"deflation basis not orthonormal (error {gram_err:.2e})")
        self.base = base
        self.basis = basis
        super().__init__(d)

    def _block(self, V):
        W = self.base @ project_out(self.basis, V)
        return project_out(self.basis, W)


def deflate_apply(op, v):
    """Apply a :class:`DeflatedOperator` to a vector or block."""
    v = _check_rows(v, op.shape[0], "deflate_apply")
    return op @ v
