"""Compiled inner loops for the stochastic solvers."""
import numba
import numpy as np

_RESCALE_BELOW = 1e-150


@numba.njit(cache=True)
def svrg_inner(indptr, indices, data, basis, basis_proj, shift, n, x_snap, full_grad,
               grad_proj, eta, picks):
    """Run len(picks) variance-reduced steps from the snapshot and return the last iterate.

    Minimizes 1/2 x^T D x - b^T x with D = shift*I - X' X'^T, X' = (I - U U^T) X,
    through the component gradients g_j(x) = shift*x - n x'_j (x'_j^T x) - b.

    The offset from the snapshot is kept in factored form
        x - x_snap = alpha * w + beta * full_grad - U h
    so a step touches only the nnz of column j plus the m deflation
    coordinates. ``basis_proj`` is U^T X (m x n), ``grad_proj`` is X'^T full_grad.
    """
    d = x_snap.shape[0]
    m = basis.shape[1]
    w = np.zeros(d)
    h = np.zeros(m)
    alpha = 1.0
    beta = 0.0
    decay = 1.0 - eta * shift
    for t in range(picks.shape[0]):
        j = picks[t]
        lo = indptr[j]
        hi = indptr[j + 1]
        s = 0.0
        for ptr in range(lo, hi):
            s += data[ptr] * w[indices[ptr]]
        c = alpha * s + beta * grad_proj[j]
        for a in range(m):
            c -= basis_proj[a, j] * h[a]
        alpha *= decay
        beta = decay * beta - eta
        for a in range(m):
            h[a] *= decay
        coef = eta * n * c
        if coef != 0.0:
            scaled = coef / alpha
            for ptr in range(lo, hi):
                w[indices[ptr]] += scaled * data[ptr]
            for a in range(m):
                h[a] += coef * basis_proj[a, j]
        if abs(alpha) < _RESCALE_BELOW:
            for i in range(d):
                w[i] *= alpha
            alpha = 1.0
    out = x_snap + alpha * w + beta * full_grad
    for a in range(m):
        for i in range(d):
            out[i] -= basis[i, a] * h[a]
    return out
