import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaplra.errors import ContractViolation
from gaplra.matrix import DenseSymmetricOperator, qr_orthonormalize
from gaplra.oracle import principal_angles
from gaplra.subspace import (SpectrumEstimate, SubspaceIterationConfig, check_self_adjoint,
                             estimate_eigenvalues, gap_free_iterations, restricted_projection,
                             subspace_iterate)


def diag_op(values):
    return DenseSymmetricOperator(np.diag(np.asarray(values, dtype=float)))


def test_top_vector_of_diagonal():
    S = subspace_iterate(diag_op([4.0, 1.0, 0.25]), SubspaceIterationConfig(1, 30, seed=1))
    assert principal_angles(np.eye(3)[:, :1], S).tangent_k <= 1e-6


def test_identity_fixed_point():
    S = subspace_iterate(np.eye(6), SubspaceIterationConfig(3, 5, seed=2))
    assert np.abs(S.T @ S - np.eye(3)).max() <= 1e-12


def test_two_cluster_rate():
    lam = np.r_[4.0, 3.99, np.ones(8)]
    G = 1 - math.sqrt(lam[2] / lam[1])
    L = math.ceil(4 / G * math.log(lam.size / 1e-3))
    S = subspace_iterate(diag_op(lam), SubspaceIterationConfig(2, L, seed=3))
    assert principal_angles(np.eye(10)[:, :2], S).tangent_k <= 1e-3


def test_config_validation():
    with pytest.raises(ContractViolation):
        subspace_iterate(np.eye(3), SubspaceIterationConfig(3, 1))
    with pytest.raises(ContractViolation):
        subspace_iterate(np.eye(3), SubspaceIterationConfig(1, 0))


def test_asymmetric_operator_rejected():
    M = np.triu(np.ones((5, 5)))
    with pytest.raises(ContractViolation):
        subspace_iterate(M, SubspaceIterationConfig(2, 3))
    with pytest.raises(ContractViolation):
        check_self_adjoint(M)


def test_rank_deficient_operator_completes_block():
    C = np.diag([3.0, 2.0, 0.0, 0.0, 0.0])
    S = subspace_iterate(C, SubspaceIterationConfig(4, 10, seed=0))
    assert np.abs(S.T @ S - np.eye(4)).max() <= 1e-12
    assert principal_angles(np.eye(5)[:, :2], S).tangent_k <= 1e-12


def test_early_stop():
    stats = {}
    S = subspace_iterate(diag_op([10.0, 1.0, 0.5, 0.1]),
                         SubspaceIterationConfig(1, 10000, seed=0, convergence_tol=1e-12),
                         stats=stats)
    assert stats["iterations"] < 100
    assert abs(abs(S[0, 0]) - 1) < 1e-12


def test_stats_counts():
    stats = {}
    subspace_iterate(np.eye(5), SubspaceIterationConfig(2, 7), stats=stats)
    assert stats == {"iterations": 7, "applies": 14, "qr": 8}


@given(seed=st.integers(0, 2**31), d=st.integers(4, 25), data=st.data())
def test_rayleigh_trace_monotone(seed, d, data):
    p = data.draw(st.integers(1, d - 1))
    rng = np.random.default_rng(seed)
    Q = qr_orthonormalize(rng.standard_normal((d, d)))
    C = (Q * rng.exponential(size=d)) @ Q.T
    C = 0.5 * (C + C.T)
    traces = []
    for L in range(1, 8):
        S = subspace_iterate(C, SubspaceIterationConfig(p, L, seed=seed))
        traces.append(np.trace(S.T @ C @ S))
    assert np.all(np.diff(traces) >= -1e-10 * max(traces))


def test_restricted_projection_examples():
    lam = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    W, eigs = restricted_projection(diag_op(lam), np.eye(5)[:, :3], 2)
    assert np.allclose(eigs, [5.0, 4.0], atol=1e-10)
    assert np.abs(W.T @ W - np.eye(2)).max() <= 1e-12
    S = qr_orthonormalize(np.random.default_rng(0).standard_normal((6, 4)))
    _, eigs = restricted_projection(np.eye(6), S, 3)
    assert np.allclose(eigs, 1.0, atol=1e-12)
    S = qr_orthonormalize(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    _, eigs = restricted_projection(diag_op([9.0, 4.0, 1.0]), S, 1)
    B = S.T @ np.diag([9.0, 4.0, 1.0]) @ S
    # 2 x 2 symmetric eigenvalue by hand: mean + sqrt(half-diff^2 + offdiag^2)
    top = 0.5 * (B[0, 0] + B[1, 1]) + math.sqrt(0.25 * (B[0, 0] - B[1, 1]) ** 2 + B[0, 1] ** 2)
    assert abs(eigs[0] - top) <= 1e-12
    assert abs(top - 6.5) <= 1e-12


def test_restricted_projection_needs_k_below_p():
    with pytest.raises(ContractViolation):
        restricted_projection(np.eye(4), np.eye(4)[:, :2], 2)


def test_gap_free_iterations():
    assert gap_free_iterations(100, 0.5) == math.ceil(8 * math.log(200))
    assert gap_free_iterations(100, 0.5, c_musco=1) == math.ceil(2 * math.log(200))


def test_estimate_examples():
    est = estimate_eigenvalues(diag_op([10.0, 1.0]), 1, 0.1, seed=0)
    assert 9.0 <= est.values[0] <= 10 / 0.9
    est = estimate_eigenvalues(2.5 * np.eye(7), 4, 0.3, seed=1)
    assert np.allclose(est.values, 2.5, atol=1e-10)
    est = estimate_eigenvalues(diag_op([4.0, 4.0, 4.0, 1.0]), 3, 1 / 9, seed=2)
    assert np.all((est.values >= 4 * 8 / 9) & (est.values <= 4 * 9 / 8))


def test_estimate_carries_offset_and_accuracy():
    est = estimate_eigenvalues(diag_op([5.0, 3.0, 2.0, 1.0]), 2, 0.2, index_offset=3)
    assert est.indices == [3, 4] and est.accuracy == 0.2
    assert est.at(4) == est.values[1]
    with pytest.raises(IndexError):
        est.at(5)


def test_spectrum_estimate_validation():
    with pytest.raises(ContractViolation):
        SpectrumEstimate([1.0, 2.0], 0.1)
    with pytest.raises(ContractViolation):
        SpectrumEstimate([1.0], 1.0)
    with pytest.raises(ContractViolation):
        SpectrumEstimate([-1.0], 0.1)


@given(seed=st.integers(0, 2**31), k=st.integers(1, 5), logcond=st.floats(0, 12))
def test_estimates_descending(seed, k, logcond):
    rng = np.random.default_rng(seed)
    d = 12
    lam = np.logspace(0, -logcond, d) * rng.uniform(0.5, 2)
    Q = qr_orthonormalize(rng.standard_normal((d, d)))
    C = (Q * lam) @ Q.T
    est = estimate_eigenvalues(0.5 * (C + C.T), k, 0.5, seed=seed)
    assert np.all(np.diff(est.values) <= 0)


@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_convergence_rate_bound(eps):
    # tan(theta_k) <= eps after 4 G^-1 ln(d / eps) rounds on >= 19 of 20 seeds
    d, k, p = 60, 3, 5
    sigma = np.r_[np.linspace(2.0, 1.95, p), np.full(d - p, 0.975)]
    G = (sigma[k - 1] - sigma[p]) / sigma[k - 1]
    L = math.ceil(4 / G * math.log(d / eps))
    ok = 0
    for seed in range(20):
        S = subspace_iterate(diag_op(sigma**2), SubspaceIterationConfig(p, L, seed=seed))
        ok += principal_angles(np.eye(d)[:, :k], S).tangent_k <= eps
    assert ok >= 19
