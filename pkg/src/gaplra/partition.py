"""
Gap detection and shift selection.

Given eigenvalue estimates over the remaining index range {s..k}, decide
how far the next block can reach: up to a multiplicative gap of order
1/p^2 (solved by plain power iteration), up to an additive gap of order
delta (solved on the shifted inverse), or all the way to k with
oversampling. Also finds the shift itself and the gap budget delta.
"""
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ContractViolation, NoPreconditioningNeeded, NoUsableGap, RankDeficient,
                     ShiftOutOfRange, ShiftTuningStalled)
from .matrix import (DeflatedOperator, GramOperator, as_columns_matrix, child_seed,
                     orthonormal_completion, qr_orthonormalize)
from .oracle import jacobi_eigh
from .solvers import ShiftedSystem, inverse_operator
from .subspace import SpectrumEstimate, estimate_eigenvalues, gap_free_iterations

INVERSE_FLOOR = 1e-300
WINDOW_LOW = 1.0 / 27.0
WINDOW_HIGH = 1.0 / 5.0
SHIFT_EPS = 1.0 / 9.0
C_SHIFT = 4.0
GAP_FLOOR = 1e-10


class Strategy(enum.Enum):
    PLAIN_POWER = "plain_power"
    SHIFTED_INVERSE = "shifted_inverse"


@dataclass(frozen=True)
class GapBudget:
    """Additive gap certificate: delta <= lambda_k - lambda_{p+1} <= 2 delta."""

    delta: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ContractViolation(f"gap budget must be positive and finite, got {self.delta}")


def _delta(delta):
    return delta.delta if isinstance(delta, GapBudget) else GapBudget(float(delta)).delta


@dataclass
class Interval:
    """Indices s..q (1-based, inclusive) solved in one block.

    ``block_width`` is the number of iteration columns; for the last
    shifted-inverse interval it exceeds q - s + 1 (oversampling).
    """

    s: int
    q: int
    strategy: Strategy
    shift: float = None
    block_width: int = None
    iterations: int = 0
    lambda1_hint: float = None
    certified_condition: float = None

    def __post_init__(self):
        if not 1 <= self.s <= self.q:
            raise ContractViolation(f"interval needs 1 <= s <= q, got s={self.s}, q={self.q}")
        if (self.shift is None) != (self.strategy is Strategy.PLAIN_POWER):
            raise ContractViolation("shift must be set exactly for shifted-inverse intervals")
        if self.block_width is None:
            self.block_width = self.q - self.s + 1
        if self.block_width < self.q - self.s + 1:
            raise ContractViolation("block narrower than the interval")

    @property
    def size(self):
        return self.q - self.s + 1

    def to_dict(self):
        return {
            "s": self.s, "q": self.q, "strategy": self.strategy.value, "shift": self.shift,
            "block_width": self.block_width, "iterations": self.iterations,
        }


@dataclass
class ShiftState:
    """Outcome of shift tuning.

    ``inv_gap_estimate`` estimates lambda - lambda_s; ``history`` holds
    every (shift, estimate) pair visited, in order.
    """

    lambda_: float
    inv_gap_estimate: float
    history: list = field(default_factory=list)
    lambda1_hint: float = None
    top_estimate: float = None

    @property
    def steps(self):
        return len(self.history)


# --- multiplicative gaps -------------------------------------------------


def detect_multiplicative_gap(estimates, p, tol=1e-12):
    """Smallest global index q < k with est[q+1] <= est[q] (1 - 1/p^2), or None.

    ``estimates`` covers I = {s..k}; it must be built at accuracy <= 1/(9 p^2)
    for the rule to certify a true gap of order 1/p^4.
    """
    if p < 2:
        raise ContractViolation("oversampling p must be at least 2")
    if estimates.accuracy > (1.0 + tol) / (9.0 * p * p):
        raise ContractViolation(
            f"estimates at accuracy {estimates.accuracy:.4g} are too coarse; need <= 1/(9p^2)"
        )
    vals = estimates.values
    if vals.size < 2:
        raise ContractViolation("need at least two estimates to look for a gap")
    factor = 1.0 - 1.0 / (p * p)
    hits = np.nonzero(vals[1:] <= vals[:-1] * factor)[0]
    if hits.size == 0:
        return None
    return estimates.index_offset + int(hits[0])


# --- additive gaps -------------------------------------------------------


def shift_gaps(inverse_estimates):
    """Invert estimates of the shifted inverse's eigenvalues: approximations of lambda - lambda_i.

    The result is ascending (closest eigenvalue first).
    """
    vals = np.asarray(inverse_estimates.values if isinstance(inverse_estimates, SpectrumEstimate)
                      else inverse_estimates, dtype=np.float64)
    return 1.0 / np.maximum(vals, INVERSE_FLOOR)


def in_window(estimate, delta):
    return delta * WINDOW_LOW <= estimate <= delta * WINDOW_HIGH


def detect_additive_gap(inverse_estimates, delta, s=None):
    """Partition index for the shifted-inverse branch.

    Parameters
    ----------
    inverse_estimates : SpectrumEstimate or array
        A SpectrumEstimate of the shifted inverse's top eigenvalues (it is
        inverted here), or an ascending array of the gaps lambda - lambda_i
        directly, in which case ``s`` gives the first global index.
    delta : GapBudget or float

    Returns
    -------
    q : int
        The first index i with gap[i+1] - gap[i] >= 5 delta / 9, or the
        last index k when there is none.

    Raises
    ------
    ShiftOutOfRange
        If the first gap lies outside [delta/27, delta/5].
    """
    delta = _delta(delta)
    if isinstance(inverse_estimates, SpectrumEstimate):
        gaps = shift_gaps(inverse_estimates)
        s = inverse_estimates.index_offset
    else:
        gaps = np.asarray(inverse_estimates, dtype=np.float64)
        s = 1 if s is None else s
    if gaps.size == 0:
        raise ContractViolation("no estimates given")
    if not in_window(gaps[0], delta):
        raise ShiftOutOfRange(float(gaps[0]), delta)
    hits = np.nonzero(np.diff(gaps) >= 5.0 * delta / 9.0)[0]
    if hits.size:
        return s + int(hits[0])
    return s + gaps.size - 1


# --- shift tuning --------------------------------------------------------


def shifted_inverse(X, shift, lambda1_hint, basis, backend, seed, tol, svrg_options=None):
    system = ShiftedSystem(X, shift, lambda1_hint, basis)
    return inverse_operator(system, backend=backend, tol=tol, seed=seed, svrg_options=svrg_options)


def estimate_shift_gap(X, shift, lambda1_hint, basis=None, backend="direct", seed=0, tol=1e-10,
                       eps_prime=SHIFT_EPS, c_musco=4.0, svrg_options=None, stats=None):
    """Estimate lambda - lambda_s from the top eigenvalue of the deflated shifted inverse."""
    op = shifted_inverse(X, shift, lambda1_hint, basis, backend, seed, tol, svrg_options)
    est = estimate_eigenvalues(op, 1, eps_prime, seed=child_seed(seed, 1), c_musco=c_musco)
    if stats is not None:
        stats["inverse_applies"] = stats.get("inverse_applies", 0) + op.applies
        stats["column_samples"] = stats.get("column_samples", 0) + op.column_samples
    return float(shift_gaps(est)[0])


def shift_step_cap(top, delta, c_shift=C_SHIFT):
    return int(math.ceil(c_shift * math.log2(max(top / delta, 1.0)))) + 5


def tune_shift(X, delta, basis=None, backend="direct", seed=0, tol=1e-10, c_shift=C_SHIFT,
               c_musco=4.0, start=None, svrg_options=None, stats=None):
    """Walk a shift down towards lambda_s until lambda - lambda_s is of order delta.

    Starts from 1.5 times a coarse (1/4-accurate) estimate of lambda_s, the
    top eigenvalue of the deflated Gram matrix, then repeatedly estimates
    g = lambda - lambda_s to accuracy 1/9 and moves the shift down by
    (1 - 1/9) g / 2 until g lands in [delta/27, delta/5].

    Parameters
    ----------
    X : SparseColumnsMatrix or array
    delta : GapBudget or float
    basis : ndarray (d, m), optional
        Orthonormal directions already extracted; they are projected out.
    start : ShiftState, optional
        Resume from a previous state instead of starting fresh.

    Returns
    -------
    ShiftState

    Raises
    ------
    NoPreconditioningNeeded
        The coarse estimate of lambda_s is below 3 delta.
    ShiftTuningStalled
        More than ceil(c_shift log2(lambda_s / delta)) + 5 estimates were needed.
    """
    X = as_columns_matrix(X)
    delta = _delta(delta)
    eps = SHIFT_EPS
    if start is None:
        A = DeflatedOperator(GramOperator(X), basis)
        top = estimate_eigenvalues(A, 1, 0.25, seed=child_seed(seed, 0), c_musco=c_musco).values[0]
        if stats is not None:
            stats["gram_applies"] = stats.get("gram_applies", 0) + A.applies
        if top < 3.0 * delta:
            raise NoPreconditioningNeeded(float(top), delta)
        lam = 1.5 * top
        hint = top / 0.75
        history = []
    else:
        top = start.top_estimate
        lam, hint = start.lambda_, start.lambda1_hint
        history = list(start.history)
    cap = len(history) + shift_step_cap(top, delta, c_shift)
    while len(history) < cap:
        step = len(history) + 1
        g = estimate_shift_gap(X, lam, hint, basis, backend, child_seed(seed, 1, step), tol,
                               eps, c_musco, svrg_options, stats)
        history.append((lam, g))
        # every eigenvalue of the deflated Gram matrix sits below lam - (1 - eps) g
        hint = min(hint, lam - (1.0 - eps) * g)
        if in_window(g, delta):
            return ShiftState(lam, g, history, hint, top)
        if g > delta * WINDOW_HIGH:
            lam = lam - 0.5 * (1.0 - eps) * g
        else:
            # overshoot (only possible when an estimate missed its bracket):
            # aim for a gap of delta/10 above the certified upper bound
            lam = hint + 0.1 * delta
    raise ShiftTuningStalled(
        f"shift tuning did not reach [{delta * WINDOW_LOW:.4g}, {delta * WINDOW_HIGH:.4g}] "
        f"within {cap} estimates", history
    )


# --- gap budget ----------------------------------------------------------


def _accuracy_after(L, d, c_musco):
    """Smallest eps' whose iteration count c/eps' ln(d/eps') fits in L rounds."""
    if L <= 0:
        return 1.0
    eps = min(1.0, c_musco * math.log(d) / L)
    for _ in range(60):
        nxt = min(1.0, c_musco * math.log(d / eps) / L)
        if abs(nxt - eps) <= 1e-12 * eps:
            break
        eps = nxt
    return eps


def find_gap_budget(X, k, p, seed=0, max_iterations=100000, extra=None, c_musco=4.0, stats=None):
    """Find delta with delta <= lambda_k - lambda_{p+1} <= 2 delta for A = X X^T.

    Runs subspace iteration on a block of b = p + 1 + r columns in doubling
    rounds. After L rounds the Ritz values satisfy
    theta_i <= lambda_i <= theta_i / (1 - eps) for i <= b, with eps the
    accuracy that L rounds buy in :func:`estimate_eigenvalues`. That brackets
    the gap as
        theta_k - theta_{p+1} / (1 - eps) <= gap <= theta_k / (1 - eps) - theta_{p+1},
    and the lower end is returned once the upper end is within 2x of it.

    Raises
    ------
    NoUsableGap
        The gap looks smaller than 1e-10 * lambda_1, or certifying it would
        take more than ``max_iterations`` rounds.
    """
    X = as_columns_matrix(X)
    d = X.d
    if not 1 <= k < p < d:
        raise ContractViolation(f"need 1 <= k < p < d, got k={k}, p={p}, d={d}")
    A = GramOperator(X)
    r = max(2, p // 2) if extra is None else extra
    b = min(p + 1 + r, d)
    rng = np.random.default_rng(child_seed(seed, 3))
    exact = b == d
    S = np.eye(d) if exact else qr_orthonormalize(rng.standard_normal((d, b)))
    done = 0
    target = 8
    while True:
        if not exact:
            steps = min(target - done, max_iterations - done)
            for _ in range(steps):
                Y = A @ S
                try:
                    S = qr_orthonormalize(Y)
                except RankDeficient:
                    # rank(A) < b: pad with random directions, their Ritz values are 0
                    S = orthonormal_completion(Y, rng)
            done += steps
        AS = A @ S
        theta, V = jacobi_eigh(S.T @ AS)
        theta = np.maximum(theta, 0.0)
        top = theta[0]
        eps = 0.0 if exact else _accuracy_after(done, d, c_musco)
        lo = theta[k - 1] - theta[p] / (1.0 - eps) if eps < 1 else -np.inf
        hi = theta[k - 1] / (1.0 - eps) - theta[p] if eps < 1 else np.inf
        # residuals only steer the early exits; they are not part of the bracket
        rho = np.linalg.norm(AS @ V[:, [k - 1]] - (S @ V[:, [k - 1]]) * theta[k - 1])
        rough = max(theta[k - 1] + rho - theta[p], 0.0)
        if stats is not None:
            stats["gram_applies"] = A.applies
            stats["iterations"] = done
            stats["bracket"] = (float(lo), float(hi))
        if top == 0.0 or min(hi, rough) < GAP_FLOOR * top:
            raise NoUsableGap(
                f"lambda_{k} - lambda_{p + 1} looks like {min(hi, rough):.3e}, below the "
                f"resolvable floor {GAP_FLOOR:g} * lambda_1"
            )
        if lo > 0 and hi <= 2.0 * lo:
            return GapBudget(float(lo))
        needed = gap_free_iterations(d, min(0.5, rough / (3.0 * theta[k - 1])), c_musco)
        if exact or done >= max_iterations or needed > max_iterations:
            raise NoUsableGap(
                f"could not certify a gap between lambda_{k} and lambda_{p + 1} within "
                f"{max_iterations} iterations (bracket [{lo:.3e}, {hi:.3e}] after {done})"
            )
        # aim straight at the predicted count, but always grow by >= 1.25x
        # (rough can be optimistic early on) and never more than double
        target = int(max(1.25 * done, min(2 * done, 1.05 * needed)))


# --- test-side witness ---------------------------------------------------


def condition_number_witness(interval, eigenvalues):
    """Exact 1/G for power iteration on the shifted inverse over ``interval``.

    ``eigenvalues`` are the exact descending eigenvalues of A (global index
    i at position i-1). The block targets indices s..q with
    ``block_width`` columns, so its rate is set by the first eigenvalue
    left outside the block, j = s + block_width:
        1/G = (shift - lambda_j) / (lambda_q - lambda_j).
    """
    if interval.strategy is not Strategy.SHIFTED_INVERSE:
        raise ContractViolation("witness applies to shifted-inverse intervals only")
    lam = np.asarray(eigenvalues, dtype=np.float64)
    j = interval.s + interval.block_width
    lam_j = lam[j - 1] if j <= lam.size else 0.0
    lam_q = lam[interval.q - 1]
    return float((interval.shift - lam_j) / (lam_q - lam_j))
