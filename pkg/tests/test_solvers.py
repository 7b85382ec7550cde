import numpy as np
import pytest

from gaplra.errors import ContractViolation, IndefiniteShift, SolverStalled
from gaplra.matrix import SparseColumnsMatrix, qr_orthonormalize
from gaplra.oracle import jacobi_eigh
from gaplra.solvers import (SVRGOptions, ShiftedSystem, inverse_operator, solve_accelerated_svrg,
                            solve_cg, solve_direct, solve_svrg)
from gaplra.subspace import check_self_adjoint
from gaplra.synthetic import SyntheticSpec, plant, spectrum_with_stable_rank


@pytest.fixture(scope="module")
def planted():
    sigma = spectrum_with_stable_rank(40, 5.0, 0.97)
    X, _ = plant(SyntheticSpec(50, 80, singular_values=list(sigma)), seed=1)
    return X  # lambda_1 = 1


def d_error(system, x, ref):
    return system.d_norm(x - ref) / system.d_norm(ref)


def test_direct_examples():
    zero = SparseColumnsMatrix(np.zeros((2, 1)))
    x = solve_direct(ShiftedSystem(zero, 2.0), np.array([4.0, 6.0])).solution
    assert np.allclose(x, [2.0, 3.0], rtol=0, atol=1e-15)
    one = SparseColumnsMatrix(np.ones((1, 1)))
    assert solve_direct(ShiftedSystem(one, 2.0), np.array([3.0])).solution[0] == pytest.approx(3.0)


def test_direct_matches_dense_inverse():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((10, 12))
    lam1 = np.linalg.eigvalsh(A @ A.T).max()
    system = ShiftedSystem(A, 1.5 * lam1)
    b = rng.standard_normal(10)
    rep = solve_direct(system, b)
    ref = np.linalg.inv(1.5 * lam1 * np.eye(10) - A @ A.T) @ b
    assert np.linalg.norm(rep.solution - ref) <= 1e-10
    assert rep.residual_norm <= 1e-12


def test_direct_rejects_indefinite():
    with pytest.raises(IndefiniteShift):
        solve_direct(ShiftedSystem(np.diag([2.0, 1.0]), 3.0), np.ones(2))


def test_cg_examples():
    zero = SparseColumnsMatrix(np.zeros((4, 2)))
    rep = solve_cg(ShiftedSystem(zero, 1.0), np.arange(4.0), tol=1e-12)
    assert rep.iterations == 1 and np.allclose(rep.solution, np.arange(4.0))
    X = np.diag([3.0, 2.0, 1.0, 0.5])
    system = ShiftedSystem(X, 2 * 9.0)
    b = np.random.default_rng(1).standard_normal(4)
    tol = 1e-10
    rep = solve_cg(system, b, tol=tol)
    ref = solve_direct(system, b).solution
    assert np.linalg.norm(rep.solution - ref) <= 10 * tol * np.linalg.norm(ref)
    assert rep.residual_norm <= tol and rep.iterations <= 4 + 10
    with pytest.raises(IndefiniteShift):
        solve_cg(ShiftedSystem(X, 5.0), np.ones(4), tol=1e-10)


def test_svrg_zero_variance():
    zero = SparseColumnsMatrix(np.zeros((3, 5)))
    b = np.array([1.0, -2.0, 0.5])
    for solver in (solve_svrg, solve_accelerated_svrg):
        rep = solver(ShiftedSystem(zero, 1.0, 0.0), b, tol=1e-10)
        assert np.array_equal(rep.solution, b) and rep.epochs == 1


def test_svrg_needs_hint():
    with pytest.raises(ContractViolation):
        solve_svrg(ShiftedSystem(np.eye(2), 2.0), np.ones(2))
    with pytest.raises(ContractViolation):
        ShiftedSystem(np.eye(2), 2.0, 2.5)


def test_svrg_planted(planted):
    system = ShiftedSystem(planted, 1.5, 1.0)
    b = np.random.default_rng(2).standard_normal(50)
    ref = solve_direct(system, b).solution
    rep8 = solve_svrg(system, b, tol=1e-8, seed=0)
    assert d_error(system, rep8.solution, ref) <= 1e-8
    rep10 = solve_svrg(system, b, tol=1e-10, seed=0)
    assert d_error(system, rep10.solution, ref) <= 1e-10
    assert rep10.column_samples <= 2 * rep8.column_samples


def test_accelerated_small_gap(planted):
    system = ShiftedSystem(planted, 1.01, 1.0)
    b = np.random.default_rng(3).standard_normal(50)
    rep = solve_accelerated_svrg(system, b, tol=1e-8, seed=1)
    assert d_error(system, rep.solution, solve_direct(system, b).solution) <= 1e-8


def test_accelerated_scales_better(planted):
    b = np.random.default_rng(4).standard_normal(50)
    counts = {}
    for gap in (0.3, 0.03):
        system = ShiftedSystem(planted, 1.0 + gap, 1.0)
        counts[gap] = (solve_svrg(system, b, tol=1e-8, seed=0).column_samples,
                       solve_accelerated_svrg(system, b, tol=1e-8, seed=0).column_samples)
    plain = counts[0.03][0] / counts[0.3][0]
    acc = counts[0.03][1] / counts[0.3][1]
    assert acc <= 0.55 * plain


def test_svrg_with_deflation_and_unprojected_rhs(planted):
    rng = np.random.default_rng(5)
    U = qr_orthonormalize(rng.standard_normal((50, 3)))
    system = ShiftedSystem(planted, 1.2, 1.0, U)
    b = rng.standard_normal(50)
    ref = solve_direct(system, b).solution
    for solver in (solve_svrg, solve_accelerated_svrg):
        x = solver(system, b, tol=1e-10, seed=2).solution
        assert d_error(system, x, ref) <= 1e-9


def test_svrg_stalls_with_tiny_cap(planted):
    system = ShiftedSystem(planted, 1.01, 1.0)
    with pytest.raises(SolverStalled) as info:
        solve_svrg(system, np.ones(50), tol=1e-10, options=SVRGOptions(epoch_cap_factor=0.05))
    assert len(info.value.history) >= 1


@pytest.mark.parametrize("backend, tol", [("cg", 1e-10), ("svrg", 1e-10), ("accsvrg", 1e-10),
                                          ("cg", 1e-4), ("svrg", 1e-6)])
def test_backends_agree_with_direct(planted, backend, tol):
    rng = np.random.default_rng(6)
    for shift in (1.5, 1.05):
        system = ShiftedSystem(planted, shift, 1.0)
        op = inverse_operator(system, backend, tol=tol, seed=3)
        ref = inverse_operator(system, "direct")
        B = rng.standard_normal((50, 2))
        got, want = op @ B, ref @ B
        for j in range(2):
            assert d_error(system, got[:, j], want[:, j]) <= max(1e-6, 10 * tol)


def test_inverse_operator_examples():
    system = ShiftedSystem(np.diag([1.0, 2.0]), 5.0)
    op = inverse_operator(system)
    assert np.allclose(op @ np.array([0.0, 1.0]), [0.0, 1.0], atol=1e-15)
    u1 = np.array([[0.0], [1.0]])
    op = inverse_operator(system, deflation_basis=u1)
    assert np.linalg.norm(op @ u1[:, 0]) <= 1e-10


def test_inverse_operator_spectrum():
    lam = np.array([4.0, 3.0, 2.0, 1.0, 0.5])
    X = np.diag(np.sqrt(lam))
    basis = np.eye(5)[:, :1]
    op = inverse_operator(ShiftedSystem(X, 5.0), deflation_basis=basis)
    M = op @ np.eye(5)
    got, _ = jacobi_eigh(0.5 * (M + M.T))
    want = np.sort(np.r_[1 / (5.0 - lam[1:]), 0.0])[::-1]
    assert np.allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", ["direct", "cg", "svrg", "accsvrg"])
def test_inverse_operator_self_adjoint(planted, backend):
    U = qr_orthonormalize(np.random.default_rng(7).standard_normal((50, 2)))
    op = inverse_operator(ShiftedSystem(planted, 1.3, 1.0, U), backend, tol=1e-10)
    check_self_adjoint(op, seed=4)


def test_d_norm_contract(planted):
    # relative D-norm accuracy holds on at least 95% of 40 seeded solves
    rng = np.random.default_rng(8)
    ok = 0
    for i in range(40):
        system = ShiftedSystem(planted, 1.0 + (0.5, 0.1)[i % 2], 1.0)
        b = rng.standard_normal(50)
        ref = solve_direct(system, b).solution
        x = solve_svrg(system, b, tol=1e-8, seed=i).solution
        ok += d_error(system, x, ref) <= 1e-8
    assert ok >= 38


def test_svrg_history_monotone(planted):
    system = ShiftedSystem(planted, 1.1, 1.0)
    rep = solve_svrg(system, np.ones(50), tol=1e-10, seed=9)
    h = np.array(rep.history)
    assert np.all(h[1:] <= 1.05 * h[:-1])
