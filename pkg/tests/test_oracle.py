import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import zoo
from gaplra.errors import ContractViolation, OracleScale, RankDeficient
from gaplra.matrix import qr_orthonormalize
from gaplra.oracle import (best_rank_k, exact_svd, jacobi_eigh, principal_angles,
                           restricted_best_rank_k)

ZOO = zoo()


@pytest.mark.parametrize("name", sorted(ZOO))
def test_svd_invariants_on_zoo(name):
    X = ZOO[name]
    sv = exact_svd(X)
    r = min(X.shape)
    assert sv.singular_values.shape == (r,)
    assert np.all(np.diff(sv.singular_values) <= 0) and np.all(sv.singular_values >= 0)
    assert np.abs(sv.U.T @ sv.U - np.eye(r)).max() <= 1e-10
    assert np.abs(sv.V.T @ sv.V - np.eye(r)).max() <= 1e-10
    assert np.linalg.norm(X - sv.reconstruct()) <= 1e-9 * max(np.linalg.norm(X), 1e-300)
    # LAPACK is a separate code path
    ref = np.linalg.svd(X, compute_uv=False)
    assert np.allclose(sv.singular_values, ref, rtol=0, atol=1e-12 * max(ref.max(initial=0), 1))


@pytest.mark.parametrize("name", sorted(ZOO))
def test_svd_agrees_with_jacobi_eigh_on_gram(name):
    X = ZOO[name]
    lam, _ = jacobi_eigh(X @ X.T)
    eig = exact_svd(X).eigenvalues
    r = eig.size
    top = max(lam[0], 1e-300)
    assert np.all(np.abs(lam[:r] - eig) <= 1e-8 * top)


def test_svd_examples():
    sv = exact_svd(np.diag([3.0, 1.0]))
    assert np.array_equal(sv.singular_values, [3.0, 1.0])
    assert np.allclose(np.abs(sv.U), np.eye(2)) and np.allclose(np.abs(sv.V), np.eye(2))
    assert np.array_equal(exact_svd(np.zeros((2, 2))).singular_values, [0.0, 0.0])
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    sv = exact_svd(S)
    assert np.allclose(sv.singular_values, [1.0, 1.0], atol=1e-15)
    assert np.linalg.norm(S - sv.reconstruct()) <= 1e-12


def test_sign_convention_and_determinism():
    X = ZOO["square"]
    a, b = exact_svd(X), exact_svd(X)
    assert a.U.tobytes() == b.U.tobytes()
    idx = np.argmax(np.abs(a.U), axis=0)
    assert np.all(a.U[idx, np.arange(a.U.shape[1])] >= 0)


def test_oracle_scale_guard():
    with pytest.raises(OracleScale):
        exact_svd(np.zeros((2001, 2)))


def test_jacobi_eigh_matches_lapack():
    rng = np.random.default_rng(5)
    B = rng.standard_normal((30, 30))
    M = B + B.T
    lam, V = jacobi_eigh(M)
    assert np.allclose(lam, np.sort(np.linalg.eigvalsh(M))[::-1], atol=1e-12)
    assert np.linalg.norm(M @ V - V * lam) <= 1e-12 * np.linalg.norm(M)


def test_best_rank_k_examples():
    X = np.diag([3.0, 2.0, 1.0])
    Xk, fro, spec = best_rank_k(exact_svd(X), 2)
    assert np.allclose(Xk, np.diag([3.0, 2.0, 0.0]), atol=1e-15)
    assert fro == pytest.approx(1.0, abs=1e-15) and spec == pytest.approx(1.0, abs=1e-15)
    assert best_rank_k(exact_svd(X), 3)[1:] == (0.0, 0.0)
    with pytest.raises(ContractViolation):
        best_rank_k(exact_svd(X), 4)


def test_best_rank_k_entrywise():
    X = np.random.default_rng(8).standard_normal((8, 6))
    Xk, fro, spec = best_rank_k(exact_svd(X), 3)
    assert abs(np.sqrt(np.sum((X - Xk) ** 2)) - fro) <= 1e-12
    assert abs(np.linalg.norm(X - Xk, 2) - spec) <= 1e-12


def test_restricted_best_rank_k_examples():
    X = np.diag([5.0, 3.0, 1.0])
    W = restricted_best_rank_k(X, np.eye(3)[:, :2], 1)
    assert np.allclose(np.abs(W[:, 0]), [1.0, 0.0, 0.0])
    rng = np.random.default_rng(9)
    X = rng.standard_normal((10, 12))
    sv = exact_svd(X)
    Q = qr_orthonormalize(np.hstack([sv.U[:, :2], rng.standard_normal((10, 2))]))
    W = restricted_best_rank_k(X, Q, 2)
    assert abs(np.linalg.norm(X - W @ (W.T @ X)) - best_rank_k(sv, 2)[1]) <= 1e-10
    with pytest.raises(ContractViolation):
        restricted_best_rank_k(X, Q, 4)
    with pytest.raises(ContractViolation):
        restricted_best_rank_k(X, Q * 2, 2)


def test_restricted_best_rank_k_beats_random_projections():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((10, 12))
    Q = qr_orthonormalize(rng.standard_normal((10, 4)))
    W = restricted_best_rank_k(X, Q, 2)
    best = np.linalg.norm(X - W @ (W.T @ X))
    for _ in range(200):
        Z = Q @ qr_orthonormalize(rng.standard_normal((4, 2)))
        assert best <= np.linalg.norm(X - Z @ (Z.T @ X)) + 1e-12


def test_restricted_full_basis_recovers_optimum():
    X = ZOO["tall"]
    W = restricted_best_rank_k(X, np.eye(30), 3)
    fro = best_rank_k(exact_svd(X), 3)[1]
    assert abs(np.linalg.norm(X - W @ (W.T @ X)) - fro) <= 1e-10


def test_principal_angle_examples():
    U = qr_orthonormalize(np.random.default_rng(0).standard_normal((6, 2)))
    pa = principal_angles(U, U)
    assert np.allclose(pa.cosines, 1.0) and pa.tangent_k <= 1e-15
    pa = principal_angles(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))
    assert pa.cosines[0] == 0.0 and pa.tangent_k == np.inf
    t = np.pi / 6
    pa = principal_angles(np.array([[1.0], [0.0]]), np.array([[np.cos(t)], [np.sin(t)]]))
    assert abs(pa.tangent_k - np.tan(t)) <= 1e-12


@given(t=st.floats(1e-9, np.pi / 2 - 1e-6), scale=st.floats(1e-3, 1e3))
def test_principal_angles_2d_closed_form(t, scale):
    c, s = np.cos(t), np.sin(t)
    pa = principal_angles(np.array([[1.0], [0.0]]), scale * np.array([[c], [s]]))
    # closed form for the vector actually stored (t itself is rounded)
    assert abs(pa.angles[0] - np.arctan2(s, c)) <= 1e-12
    assert abs(pa.cosines[0] - c / np.hypot(c, s)) <= 1e-12
    if t <= np.pi / 4:
        assert abs(pa.tangent_k - s / c) <= 1e-12 * max(1.0, s / c)
    else:
        # d tan / d theta = 1 + tan^2
        assert abs(pa.tangent_k - s / c) <= 1e-12 * (1 + (s / c) ** 2)


@given(seed=st.integers(0, 2**31), k=st.integers(1, 3), extra=st.integers(0, 3))
def test_principal_angles_range_invariant(seed, k, extra):
    rng = np.random.default_rng(seed)
    d = 8
    U = qr_orthonormalize(rng.standard_normal((d, k)))
    S = rng.standard_normal((d, k + extra))
    R = rng.standard_normal((k + extra, k + extra)) + 3 * np.eye(k + extra)
    a, b = principal_angles(U, S), principal_angles(U, S @ R)
    assert np.allclose(a.cosines, b.cosines, atol=1e-10)


def test_principal_angles_min_max_form_small_d():
    # brute force: tan(theta_k) = min over k-dim subspaces span(S w) of the worst
    # ratio ||U_{-k}^T S w|| / ||U_k^T S w||; for p = k the min is trivial
    rng = np.random.default_rng(3)
    d, k = 4, 2
    Ufull = qr_orthonormalize(rng.standard_normal((d, d)))
    Uk, Urest = Ufull[:, :k], Ufull[:, k:]
    S = Uk + 0.3 * Urest @ rng.standard_normal((d - k, k))
    worst = 0.0
    for a in np.linspace(0, np.pi, 20001):
        w = np.array([np.cos(a), np.sin(a)])
        worst = max(worst, np.linalg.norm(Urest.T @ S @ w) / np.linalg.norm(Uk.T @ S @ w))
    assert abs(principal_angles(Uk, S).tangent_k - worst) <= 1e-6 * worst


def test_principal_angles_rank_deficient():
    with pytest.raises(RankDeficient):
        principal_angles(np.eye(3)[:, :1], np.ones((3, 2)))


def test_principal_angles_tiny_angle_accuracy():
    t = 1e-10
    for a, b in itertools.product((1.0, -1.0), repeat=2):
        pa = principal_angles(np.array([[a], [0.0]]), np.array([[b * np.cos(t)], [np.sin(t)]]))
        assert abs(pa.tangent_k - t) <= 1e-20
