"""
The adaptive rank-k approximation driver.

Repeatedly: estimate the spectrum of the deflated Gram matrix, choose the
next block of indices and how to iterate on it, run subspace iteration,
and deflate. When index k is covered, the collected p-column basis is
compressed to the best rank-k projection inside it.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (ContractViolation, DegenerateProgress, NoPreconditioningNeeded, RankDeficient,
                     ShiftOutOfRange)
from .matrix import (DeflatedOperator, GramOperator, as_columns_matrix, child_seed, project_out,
                     qr_orthonormalize, spmv, spmv_t)
from .oracle import ORACLE_MAX_DIM, exact_svd
from .partition import (WINDOW_HIGH, GapBudget, Interval, ShiftState, Strategy,
                        detect_additive_gap, detect_multiplicative_gap, find_gap_budget,
                        shift_gaps, shifted_inverse, tune_shift)
from .solvers import BACKENDS
from .subspace import SubspaceIterationConfig, estimate_eigenvalues, restricted_projection, subspace_iterate

C_POWER = 4.0
C_SHIFTED = 4.0
SPECTRAL_ORACLE_LIMIT = 500
POWER_ESTIMATE_ITERATIONS = 20


@dataclass
class ApproximationRequest:
    """Inputs to :func:`approximate`.

    ``mu`` bounds ||X||_F / ||X - X_k||_F from above and is estimated when
    omitted; ``delta`` (the gap budget) is searched for when omitted.
    """

    X: object
    k: int
    p: int
    epsilon: float
    mu: float = None
    backend: str = "direct"
    seed: int = 0
    delta: float = None
    solver_tol: float = 1e-10
    c_power: float = C_POWER
    c_shifted: float = C_SHIFTED
    c_musco: float = 4.0
    convergence_tol: float = None
    max_shift_retries: int = 3
    svrg_options: object = None

    def validate(self):
        self.X = as_columns_matrix(self.X)
        d = self.X.d
        if not 1 <= self.k < self.p < d:
            raise ContractViolation(f"need 1 <= k < p < d, got k={self.k}, p={self.p}, d={d}")
        if not 0 < self.epsilon < 1:
            raise ContractViolation(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.mu is not None and self.mu < 1:
            raise ContractViolation(f"mu must be >= 1, got {self.mu}")
        if self.backend not in BACKENDS:
            raise ContractViolation(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if self.delta is not None:
            GapBudget(self.delta)


@dataclass
class PartitionPlan:
    """Executed intervals, in order, plus the accuracy targets they were run at."""

    intervals: list = field(default_factory=list)
    delta: float = None
    mu: float = None
    eps_internal: float = None

    @property
    def accuracy(self):
        """Per-interval subspace accuracy eps_internal / k."""
        k = self.intervals[-1].q if self.intervals else 1
        return self.eps_internal / k if self.eps_internal is not None else None

    def validate(self, k):
        nxt = 1
        for iv in self.intervals:
            if iv.s != nxt or iv.q > k:
                raise ContractViolation(f"plan is not an ordered cover of 1..{k}")
            nxt = iv.q + 1
        if nxt != k + 1:
            raise ContractViolation(f"plan covers 1..{nxt - 1}, expected 1..{k}")

    def to_dict(self):
        return {
            "delta": self.delta, "mu": self.mu, "eps_internal": self.eps_internal,
            "intervals": [iv.to_dict() for iv in self.intervals],
        }


@dataclass
class ErrorReport:
    frobenius: float
    spectral: float
    spectral_estimated: bool = False


@dataclass
class RankKProjection:
    """Pi = W W^T with W (d x k) orthonormal, its errors and how it was found."""

    W: np.ndarray
    frobenius_error: float
    spectral_error: float
    plan: PartitionPlan
    cost_report: dict
    basis: np.ndarray = None
    spectral_estimated: bool = False

    def projector(self):
        return self.W @ self.W.T

    def apply(self, X):
        """Pi X."""
        X = as_columns_matrix(X)
        return self.W @ spmv_t(X, self.W).T


class _Costs:
    """Per-phase counters; wall-clock kept separately so reports can drop it."""

    def __init__(self):
        self.phases = {}
        self.order = []

    def phase(self, name):
        if name not in self.phases:
            self.phases[name] = {"gram_applies": 0, "inverse_applies": 0, "column_samples": 0,
                                 "iterations": 0, "qr": 0, "seconds": 0.0}
            self.order.append(name)
        return self.phases[name]

    def add(self, name, **counts):
        ph = self.phase(name)
        for key, val in counts.items():
            ph[key] = ph.get(key, 0) + val

    def report(self):
        out = {name: dict(self.phases[name]) for name in self.order}
        total = {}
        for ph in out.values():
            for key, val in ph.items():
                total[key] = total.get(key, 0) + val
        out["total"] = total
        return out


def estimate_mu(X, k, seed=0, c_musco=4.0, stats=None):
    """Upper bound on ||X||_F / ||X - X_k||_F from a 1/4-accurate estimate of lambda_{k+1}.

    ||X - X_k||_F >= sigma_{k+1} and the estimate is at most 4/3 lambda_{k+1},
    so 2 ||X||_F / sqrt(est) is safe with room to spare.
    """
    X = as_columns_matrix(X)
    A = GramOperator(X)
    est = estimate_eigenvalues(A, k + 1, 0.25, seed=seed, c_musco=c_musco, stats=stats)
    tail = math.sqrt(max(est.values[k], 0.0))
    fro = X.frobenius_norm()
    if fro == 0.0:
        return 1.0
    return max(1.0, 2.0 * fro / max(tail, 1e-15 * fro))


def deflation_basis_extend(current, new_block, tol=1e-10):
    """Append ``new_block`` to the orthonormal ``current``, orthonormalized against it.

    Raises
    ------
    DegenerateProgress
        A new column (nearly) lies in the span of the current basis.
    """
    current = np.asarray(current, dtype=np.float64)
    new_block = np.asarray(new_block, dtype=np.float64)
    if new_block.ndim == 1:
        new_block = new_block[:, None]
    if current.ndim == 1:
        current = current[:, None]
    Y = project_out(current, project_out(current, new_block))
    if Y.shape[1] == 0:
        return current
    R = np.linalg.qr(Y, mode="r")
    scale = max(1.0, float(np.linalg.norm(new_block, axis=0).max()))
    if np.abs(np.diag(R)).min() <= tol * scale:
        raise DegenerateProgress("new block adds no direction outside the current deflation basis")
    try:
        Q = qr_orthonormalize(Y)
    except RankDeficient as exc:
        raise DegenerateProgress(str(exc)) from exc
    Q = project_out(current, Q)
    Q = qr_orthonormalize(Q)
    return np.concatenate([current, Q], axis=1)


def _residual_fro(X, W, chunk=2048):
    total = 0.0
    for lo in range(0, X.n, chunk):
        cols = X.csc[:, lo:lo + chunk].toarray() if X._dense is None else X._dense[:, lo:lo + chunk]
        R = cols - W @ (W.T @ cols)
        total += float(np.sum(R * R))
    return math.sqrt(total)


def error_report(X, W, seed=0, oracle_limit=SPECTRAL_ORACLE_LIMIT,
                 power_iterations=POWER_ESTIMATE_ITERATIONS):
    """Frobenius and spectral norms of X - W W^T X.

    The Frobenius norm is accumulated column block by column block, which
    keeps full relative accuracy even when the residual is tiny. The
    spectral norm is exact (dense SVD) when min(d, n) <= ``oracle_limit``;
    otherwise from ``power_iterations`` rounds of the power method, flagged
    as an estimate (good to a few percent).
    """
    X = as_columns_matrix(X)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    fro = _residual_fro(X, W)
    d, n = X.shape
    if min(d, n) <= oracle_limit and max(d, n) <= ORACLE_MAX_DIM:
        R = X.toarray()
        R = R - W @ (W.T @ R)
        # LAPACK here; the Jacobi oracle stays test-side so the two routes stay independent
        return ErrorReport(fro, float(np.linalg.svd(R, compute_uv=False)[0]), False)

    def resid(v):
        y = spmv(X, v)
        return y - W @ (W.T @ y)

    def resid_t(u):
        return spmv_t(X, u - W @ (W.T @ u))

    v = np.random.default_rng(seed).standard_normal(n)
    sigma = 0.0
    for _ in range(power_iterations):
        v = resid_t(resid(v))
        nv = np.linalg.norm(v)
        if nv == 0.0:
            break
        v /= nv
        sigma = float(np.linalg.norm(resid(v)))
    return ErrorReport(fro, sigma, True)


def _plain_iterations(c, cond, k, d, eps_internal):
    return int(math.ceil(c * cond * math.log(k * d / eps_internal)))


def _run_block(op, width, L, seed, req, costs, phase):
    stats = {}
    S = subspace_iterate(op, SubspaceIterationConfig(width, L, seed, req.convergence_tol), stats=stats)
    costs.add(phase, iterations=stats["iterations"], qr=stats["qr"])
    return S, stats["iterations"]


def _charge(costs, phase, op, gram=False):
    if gram:
        costs.add(phase, gram_applies=op.applies)
    else:
        costs.add(phase, inverse_applies=op.applies, column_samples=op.column_samples)


def _shifted_interval(X, s, k, p, delta, basis, eps_internal, req, costs, phase, seed):
    """Shift tuning, additive gap scan and shifted-inverse iteration for indices s..k."""
    stats = {}
    try:
        state = tune_shift(X, delta, basis, req.backend, child_seed(seed, 1), req.solver_tol,
                           c_musco=req.c_musco, svrg_options=req.svrg_options, stats=stats)
    finally:
        costs.add(phase, gram_applies=stats.get("gram_applies", 0),
                  inverse_applies=stats.get("inverse_applies", 0),
                  column_samples=stats.get("column_samples", 0))
    eps = 1.0 / (9.0 * p)
    m = k - s + 1
    for attempt in range(req.max_shift_retries + 1):
        lam, hint = state.lambda_, state.lambda1_hint
        op = shifted_inverse(X, lam, hint, basis, req.backend, child_seed(seed, 2, attempt),
                             req.solver_tol, req.svrg_options)
        est = estimate_eigenvalues(op, m, eps, seed=child_seed(seed, 3, attempt),
                                   c_musco=req.c_musco, index_offset=s)
        _charge(costs, phase, op)
        try:
            q = detect_additive_gap(est, delta)
            break
        except ShiftOutOfRange as exc:
            if attempt == req.max_shift_retries:
                raise
            g = exc.estimate
            top = lam - (1.0 - eps) * g
            # move the shift as tuning would, then let tuning confirm it
            lam = lam - 0.5 * (1.0 - eps) * g if g > delta * WINDOW_HIGH else top + 0.1 * delta
            restart = ShiftState(lam, g, state.history + [(state.lambda_, g)],
                                 min(hint, top), state.top_estimate)
            stats = {}
            try:
                state = tune_shift(X, delta, basis, req.backend, child_seed(seed, 4, attempt),
                                   req.solver_tol, c_musco=req.c_musco, start=restart,
                                   svrg_options=req.svrg_options, stats=stats)
            finally:
                costs.add(phase, inverse_applies=stats.get("inverse_applies", 0),
                          column_samples=stats.get("column_samples", 0))
    gaps = shift_gaps(est)
    hint = min(hint, lam - (1.0 - eps) * gaps[0])
    if q < k:
        i = q - s
        lower = max((1.0 - eps) * gaps[i + 1] - gaps[i] / (1.0 - eps), delta / 9.0)
        cond = gaps[i + 1] / (1.0 - eps) / lower
        width = q - s + 1
    else:
        cond = (gaps[-1] / (1.0 - eps) + 2.0 * delta) / delta
        width = p - s + 1
    L = _plain_iterations(req.c_shifted, max(k, cond), k, X.d, eps_internal)
    op = shifted_inverse(X, lam, hint, basis, req.backend, child_seed(seed, 5), req.solver_tol,
                         req.svrg_options)
    S, iters = _run_block(op, width, L, child_seed(seed, 6), req, costs, phase)
    _charge(costs, phase, op)
    iv = Interval(s, q, Strategy.SHIFTED_INVERSE, shift=lam, block_width=width, iterations=iters,
                  lambda1_hint=hint, certified_condition=float(cond))
    return iv, S


def approximate(req):
    """Rank-k projection with ||X - Pi X|| <= (1 + epsilon) ||X - X_k|| in both norms.

    Parameters
    ----------
    req : ApproximationRequest

    Returns
    -------
    RankKProjection

    Notes
    -----
    Each outer step handles indices s..k of the deflated problem:

    * estimates at accuracy 1/(9p^2) look for a multiplicative gap of
      order 1/p^2; if one is found at q, plain subspace iteration with
      q - s + 1 columns extracts s..q;
    * otherwise the shift is tuned to sit just above lambda_s, estimates of
      the shifted inverse (accuracy 1/(9p)) look for an additive gap of
      order delta, and subspace iteration on the shifted inverse extracts
      s..q (or s..k with p - s + 1 columns when no gap turns up).
    """
    req.validate()
    X = req.X
    d, k, p = X.d, req.k, req.p
    costs = _Costs()
    seed = req.seed

    t0 = time.perf_counter()
    if req.delta is None:
        stats = {}
        delta = find_gap_budget(X, k, p, seed=child_seed(seed, 0), stats=stats).delta
        costs.add("gap_budget", gram_applies=stats.get("gram_applies", 0),
                  iterations=stats.get("iterations", 0))
    else:
        delta = float(req.delta)
    costs.add("gap_budget", seconds=time.perf_counter() - t0)

    t0 = time.perf_counter()
    mu = req.mu
    if mu is None:
        stats = {}
        mu = estimate_mu(X, k, seed=child_seed(seed, 1), c_musco=req.c_musco, stats=stats)
        costs.add("mu_estimate", gram_applies=stats.get("applies", 0),
                  iterations=stats.get("iterations", 0))
    costs.add("mu_estimate", seconds=time.perf_counter() - t0)
    eps_internal = req.epsilon / (3.0 * mu * k * d)

    plan = PartitionPlan(delta=delta, mu=mu, eps_internal=eps_internal)
    basis = np.zeros((d, 0))
    s = 1
    for t in range(1, k + 1):
        phase = f"interval_{t}"
        t0 = time.perf_counter()
        tseed = child_seed(seed, 2, t)
        A = DeflatedOperator(GramOperator(X), basis)
        q = None
        if s < k:
            eps = 1.0 / (9.0 * p * p)
            est = estimate_eigenvalues(A, k - s + 1, eps, seed=child_seed(tseed, 0),
                                       c_musco=req.c_musco, index_offset=s)
            q = detect_multiplicative_gap(est, p)
        if q is not None:
            ratio = est.at(q + 1) / est.at(q) / (1.0 - eps) ** 2
            cond = min(float(p) ** 4, 1.0 / max(1.0 - ratio, float(p) ** -4))
            L = _plain_iterations(req.c_power, cond, k, d, eps_internal)
            S, iters = _run_block(A, q - s + 1, L, child_seed(tseed, 1), req, costs, phase)
            iv = Interval(s, q, Strategy.PLAIN_POWER, iterations=iters, certified_condition=cond)
        else:
            try:
                iv, S = _shifted_interval(X, s, k, p, delta, basis, eps_internal, req, costs,
                                          phase, tseed)
            except NoPreconditioningNeeded:
                # lambda_s < 4 delta, so the oversampled gap to lambda_{p+1}
                # is already a constant fraction of lambda_k
                L = _plain_iterations(req.c_power, 4.0, k, d, eps_internal)
                S, iters = _run_block(A, p - s + 1, L, child_seed(tseed, 1), req, costs, phase)
                iv = Interval(s, k, Strategy.PLAIN_POWER, block_width=p - s + 1,
                              iterations=iters, certified_condition=4.0)
        _charge(costs, phase, A, gram=True)
        try:
            basis = deflation_basis_extend(basis, S)
        except DegenerateProgress as exc:
            raise DegenerateProgress(f"interval {iv.s}..{iv.q}: {exc}") from exc
        plan.intervals.append(iv)
        costs.add(phase, seconds=time.perf_counter() - t0)
        s = iv.q + 1
        if iv.q == k:
            break
    else:
        raise DegenerateProgress(f"no cover of 1..{k} after {k} outer iterations")
    plan.validate(k)

    t0 = time.perf_counter()
    G = GramOperator(X)
    W, _ = restricted_projection(G, basis, k)
    costs.add("assembly", gram_applies=G.applies)
    errs = error_report(X, W, seed=child_seed(seed, 9))
    costs.add("assembly", seconds=time.perf_counter() - t0)
    return RankKProjection(W, errs.frobenius, errs.spectral, plan, costs.report(), basis,
                           errs.spectral_estimated)


def plain_power_baseline(X, k, p, epsilon, delta=None, mu=None, seed=0, c_power=C_POWER):
    """Oversampled subspace iteration on X X^T with no preconditioning.

    The iteration count uses the gap certificate: G_{k,p+1} >= delta / lambda_k.
    """
    X = as_columns_matrix(X)
    d = X.d
    if not 1 <= k < p < d:
        raise ContractViolation(f"need 1 <= k < p < d, got k={k}, p={p}, d={d}")
    costs = _Costs()
    t0 = time.perf_counter()
    if delta is None:
        delta = find_gap_budget(X, k, p, seed=child_seed(seed, 0)).delta
    if mu is None:
        mu = estimate_mu(X, k, seed=child_seed(seed, 1))
    eps_internal = epsilon / (3.0 * mu * k * d)
    A = GramOperator(X)
    top_k = estimate_eigenvalues(A, k, 0.25, seed=child_seed(seed, 2)).values[k - 1] / 0.75
    cond = max(1.0, top_k / delta)
    L = _plain_iterations(c_power, cond, k, d, eps_internal)
    S = subspace_iterate(A, SubspaceIterationConfig(p, L, child_seed(seed, 3)))
    W, _ = restricted_projection(A, S, k)
    costs.add("plain_power", gram_applies=A.applies, iterations=L, qr=L + 1,
              seconds=time.perf_counter() - t0)
    errs = error_report(X, W, seed=child_seed(seed, 9))
    plan = PartitionPlan([Interval(1, k, Strategy.PLAIN_POWER, block_width=p, iterations=L,
                                   certified_condition=cond)], delta, mu, eps_internal)
    return RankKProjection(W, errs.frobenius, errs.spectral, plan, costs.report(), S,
                           errs.spectral_estimated)
