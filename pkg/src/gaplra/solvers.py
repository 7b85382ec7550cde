"""
Solvers for shifted systems (shift*I - X'X'^T) x = b, where X' = (I - U U^T) X
is the data matrix with an orthonormal basis U projected out.

Backends: dense Cholesky (``direct``), conjugate gradient (``cg``), SVRG
(``svrg``) and SVRG wrapped in an accelerated proximal-point loop
(``accsvrg``). :func:`inverse_operator` exposes any of them as a matrix-free
symmetric operator (I - U U^T) D^{-1} (I - U U^T).
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import _kernels
from .errors import ContractViolation, IndefiniteShift, SolverStalled
from .matrix import SymmetricOperator, as_columns_matrix, child_seed, project_out, spmv, spmv_t

BACKENDS = ("direct", "cg", "svrg", "accsvrg")
DIRECT_MAX_DIM = 2000


@dataclass
class ShiftedSystem:
    """The system (shift*I - X'X'^T) with X' the deflated data matrix.

    ``lambda1_hint`` must upper-bound the top eigenvalue of X'X'^T; the
    stochastic solvers size their steps from ``shift - lambda1_hint``.
    """

    X: object
    shift: float
    lambda1_hint: float = None
    basis: np.ndarray = None
    _chol: tuple = field(default=None, init=False, repr=False)
    _basis_proj: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.X = as_columns_matrix(self.X)
        self.shift = float(self.shift)
        if self.basis is None:
            self.basis = np.zeros((self.X.d, 0))
        self.basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        if self.basis.shape[0] != self.X.d:
            raise ContractViolation("deflation basis has the wrong number of rows")
        if self.lambda1_hint is not None:
            self.lambda1_hint = float(self.lambda1_hint)
            if not self.shift > self.lambda1_hint:
                raise ContractViolation(
                    f"shift {self.shift:.6g} must exceed lambda1_hint {self.lambda1_hint:.6g}"
                )

    @property
    def d(self):
        return self.X.d

    @property
    def n(self):
        return self.X.n

    @property
    def basis_proj(self):
        """U^T X, cached."""
        if self._basis_proj is None:
            self._basis_proj = np.ascontiguousarray(spmv_t(self.X, self.basis).T)
        return self._basis_proj

    def deflated_gram(self, V):
        """X'X'^T V."""
        W = spmv(self.X, spmv_t(self.X, project_out(self.basis, V)))
        return project_out(self.basis, W)

    def apply(self, V):
        """D V = shift*V - X'X'^T V."""
        return self.shift * V - self.deflated_gram(V)

    def dense(self):
        if self.d > DIRECT_MAX_DIM:
            raise ContractViolation(f"dense shifted matrix limited to d <= {DIRECT_MAX_DIM}")
        return self.apply(np.eye(self.d))

    def cholesky(self):
        if self._chol is None:
            D = self.dense()
            D = 0.5 * (D + D.T)
            try:
                self._chol = la.cho_factor(D, lower=True)
            except la.LinAlgError:
                raise IndefiniteShift(
                    f"shift {self.shift:.6g} leaves shift*I - XX^T not positive definite"
                ) from None
        return self._chol

    def deflated_column_sq_norms(self):
        norms = self.X.column_sq_norms()
        if self.basis.shape[1]:
            norms = norms - np.sum(self.basis_proj**2, axis=0)
        return np.maximum(norms, 0.0)

    def d_norm(self, v):
        return math.sqrt(max(float(v @ self.apply(v)), 0.0))


@dataclass
class SolverReport:
    solution: np.ndarray
    iterations: int = 0
    epochs: int = 0
    column_samples: int = 0
    residual_norm: float = 0.0
    history: list = field(default_factory=list)


def _relative_residual(system, x, b):
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return float(np.linalg.norm(system.apply(x)))
    return float(np.linalg.norm(system.apply(x) - b) / bnorm)


def solve_direct(system, b):
    """Dense Cholesky solve with one step of iterative refinement."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != system.d:
        raise ContractViolation(f"right-hand side must have length {system.d}")
    factor = system.cholesky()
    x = la.cho_solve(factor, b)
    x = x + la.cho_solve(factor, b - system.apply(x))
    return SolverReport(x, iterations=1, residual_norm=_relative_residual(system, x, b))


def solve_cg(system, b, tol=1e-10, max_iter=None):
    """Conjugate gradient on D x = b, stopping at ||Dx - b|| <= tol ||b||."""
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != system.d:
        raise ContractViolation(f"right-hand side must have length {system.d}")
    if max_iter is None:
        max_iter = system.d + 10
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return SolverReport(x, residual_norm=0.0)
    p = r.copy()
    rr = r @ r
    history = []
    for it in range(1, max_iter + 1):
        Dp = system.apply(p)
        curv = p @ Dp
        if curv <= 0:
            raise IndefiniteShift(f"nonpositive curvature {curv:.3e} at CG iteration {it}")
        alpha = rr / curv
        x += alpha * p
        r -= alpha * Dp
        rr_new = r @ r
        history.append(math.sqrt(rr_new) / bnorm)
        if history[-1] <= tol:
            res = _relative_residual(system, x, b)
            if res <= tol:
                return SolverReport(x, iterations=it, column_samples=2 * it * system.n,
                                    residual_norm=res, history=history)
            r = b - system.apply(x)
            rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise SolverStalled(f"CG did not reach tol {tol:g} in {max_iter} iterations", history)


@dataclass
class SVRGOptions:
    """Tunables for the SVRG backend.

    ``epoch_factor`` sets the minimum epoch length as a multiple of n;
    ``epoch_cap_factor`` sets the cap to epoch_cap_factor * ln(1/tol) epochs.
    """

    epoch_factor: int = 2
    step_factor: float = 4.0
    epoch_cap_factor: float = 200.0
    max_backoffs: int = 3
    monotone_slack: float = 1.05


def _svrg_setup(system, opts):
    if system.lambda1_hint is None:
        raise ContractViolation("SVRG needs lambda1_hint for step sizing")
    n = system.n
    gap = system.shift - system.lambda1_hint
    radius = n * float(system.deflated_column_sq_norms().max(initial=0.0))
    eta = 1.0 / (opts.step_factor * (system.shift + radius))
    lam1 = max(system.lambda1_hint, 0.0)
    if radius > 0:
        # second-moment bound: the noisy step must not outpace the contraction at the top gap
        eta = min(eta, gap / (gap * gap + lam1 * radius))
    epoch_len = max(opts.epoch_factor * n, int(math.ceil(2.0 / (eta * gap))))
    return eta, epoch_len, radius


def _svrg_run(system, b, x0, target, rng, opts, max_epochs):
    """SVRG epochs until ||D x - b|| <= target (absolute). Returns (x, epochs, samples, history)."""
    X = system.X
    n = system.n
    eta, epoch_len, radius = _svrg_setup(system, opts)
    basis, basis_proj = system.basis, system.basis_proj
    x = project_out(system.basis, np.array(x0, dtype=np.float64))
    history = []
    samples = 0
    if radius == 0.0:
        x = b / system.shift
        res = float(np.linalg.norm(system.apply(x) - b))
        return x, 1, n, [res]
    backoffs = 0
    best = None
    for epoch in range(1, max_epochs + 1):
        grad = system.apply(x) - b
        samples += n
        res = float(np.linalg.norm(grad))
        if best is not None and res > opts.monotone_slack * best[1]:
            backoffs += 1
            if backoffs > opts.max_backoffs:
                raise SolverStalled(
                    f"SVRG residual increased {res:.3e} > {best[1]:.3e} after {backoffs - 1} step backoffs",
                    history,
                )
            x, res, grad = best
            eta *= 0.5
            epoch_len *= 2
        else:
            history.append(res)
            best = (x, res, grad)
        if res <= target:
            return x, epoch, samples, history
        picks = rng.integers(0, n, size=epoch_len)
        grad_proj = spmv_t(X, project_out(system.basis, grad))
        x = _kernels.svrg_inner(
            X.indptr, X.indices, X.data, basis, basis_proj,
            system.shift, float(n), x, grad, grad_proj, eta, picks,
        )
        samples += epoch_len
    raise SolverStalled(f"SVRG did not converge within {max_epochs} epochs", history)


def _residual_target(system, b, tol):
    """Absolute residual that certifies ||x - x*||_D <= tol ||x*||_D.

    ||x - x*||_D^2 <= ||r||^2 / (shift - lambda1) and ||x*||_D^2 >= ||b||^2 / shift.
    """
    gap = system.shift - system.lambda1_hint
    return tol * np.linalg.norm(b) * math.sqrt(gap / system.shift)


def _epoch_cap(tol, opts):
    return int(math.ceil(opts.epoch_cap_factor * math.log(max(1.0 / tol, math.e))))


def solve_svrg(system, b, tol=1e-10, seed=0, x0=None, options=None):
    """SVRG solve with relative D-norm accuracy ``tol``."""
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    opts = options or SVRGOptions()
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != system.d:
        raise ContractViolation(f"right-hand side must have length {system.d}")
    if np.linalg.norm(b) == 0:
        return SolverReport(np.zeros_like(b))
    if system.lambda1_hint is None:
        raise ContractViolation("SVRG needs lambda1_hint for step sizing")
    rng = np.random.default_rng(seed)
    x0 = np.zeros_like(b) if x0 is None else x0
    x, epochs, samples, history = _svrg_run(
        system, b, x0, _residual_target(system, b, tol), rng, opts, _epoch_cap(tol, opts)
    )
    return SolverReport(x, iterations=epochs, epochs=epochs, column_samples=samples,
                        residual_norm=_relative_residual(system, x, b), history=history)


def solve_accelerated_svrg(system, b, tol=1e-10, seed=0, options=None, inner_factor=0.3,
                           kappa=None):
    """Accelerated proximal-point loop whose subproblems are solved by SVRG.

    Each outer step solves (D + kappa I) x = b + kappa z, warm started,
    followed by momentum z = x + beta (x - x_prev) with
    beta = (1 - sqrt(q)) / (1 + sqrt(q)), q = gap / (gap + kappa).

    The default kappa = sqrt(lambda1 * max_j ||x_j||^2) balances the
    stochastic phase of each inner solve against its n-sample full pass.
    """
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    opts = options or SVRGOptions()
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != system.d:
        raise ContractViolation(f"right-hand side must have length {system.d}")
    if np.linalg.norm(b) == 0:
        return SolverReport(np.zeros_like(b))
    if system.lambda1_hint is None:
        raise ContractViolation("accelerated SVRG needs lambda1_hint")
    rng = np.random.default_rng(seed)
    gap = system.shift - system.lambda1_hint
    if kappa is None:
        col_max = float(system.deflated_column_sq_norms().max(initial=0.0))
        kappa = math.sqrt(max(system.lambda1_hint, 0.0) * col_max)
    target = _residual_target(system, b, tol)
    cap = _epoch_cap(tol, opts)
    if kappa <= gap:
        # already well conditioned: the proximal wrapper cannot help
        x, epochs, samples, history = _svrg_run(system, b, np.zeros_like(b), target, rng, opts, cap)
        return SolverReport(x, iterations=epochs, epochs=epochs, column_samples=samples,
                            residual_norm=_relative_residual(system, x, b), history=history)

    inner = ShiftedSystem(system.X, system.shift + kappa, system.lambda1_hint, system.basis)
    inner._basis_proj = system._basis_proj
    sq = math.sqrt(gap / (gap + kappa))
    beta = (1.0 - sq) / (1.0 + sq)
    x = np.zeros_like(b)
    z = x
    res = float(np.linalg.norm(b))
    history = [res]
    samples = 0
    epochs = 0
    for outer in range(1, cap + 1):
        rhs = b + kappa * z
        x_new, ep, smp, _ = _svrg_run(inner, rhs, x, inner_factor * sq * res, rng, opts, cap)
        epochs += ep
        samples += smp
        z = x_new + beta * (x_new - x)
        x = x_new
        res = float(np.linalg.norm(system.apply(x) - b))
        samples += system.n
        history.append(res)
        if res <= target:
            return SolverReport(x, iterations=outer, epochs=epochs, column_samples=samples,
                                residual_norm=_relative_residual(system, x, b), history=history)
    raise SolverStalled(f"accelerated SVRG did not converge in {cap} outer steps", history)


class ShiftedInverseOperator(SymmetricOperator):
    """(I - U U^T) (shift*I - X'X'^T)^{-1} (I - U U^T), applied column by column.

    ``column_samples`` and ``solves`` accumulate over the operator's lifetime.
    """

    def __init__(self, system, backend="direct", tol=1e-10, seed=0, svrg_options=None):
        if backend not in BACKENDS:
            raise ContractViolation(f"unknown backend {backend!r}; choose from {BACKENDS}")
        self.system = system
        self.backend = backend
        self.tol = tol
        self.seed = seed
        self.svrg_options = svrg_options
        self.column_samples = 0
        self.solves = 0
        super().__init__(system.d)

    def _block(self, V):
        B = project_out(self.system.basis, V)
        if self.backend == "direct":
            factor = self.system.cholesky()
            Xs = la.cho_solve(factor, B)
            Xs = Xs + la.cho_solve(factor, B - self.system.apply(Xs))
            self.solves += B.shape[1]
        else:
            Xs = np.empty_like(B)
            for j in range(B.shape[1]):
                Xs[:, j] = self._solve_one(B[:, j]).solution
        return project_out(self.system.basis, Xs)

    def _solve_one(self, b):
        self.solves += 1
        if self.backend == "cg":
            rep = solve_cg(self.system, b, tol=self.tol)
        else:
            solver = solve_svrg if self.backend == "svrg" else solve_accelerated_svrg
            rep = solver(self.system, b, tol=self.tol, seed=child_seed(self.seed, self.solves),
                         options=self.svrg_options)
        self.column_samples += rep.column_samples
        return rep


def inverse_operator(system, backend="direct", tol=1e-10, seed=0, deflation_basis=None,
                     svrg_options=None):
    """Matrix-free deflated shifted inverse.

    If ``deflation_basis`` is given it replaces ``system.basis``.
    """
    if deflation_basis is not None:
        system = ShiftedSystem(system.X, system.shift, system.lambda1_hint, deflation_basis)
    return ShiftedInverseOperator(system, backend, tol, seed, svrg_options)
