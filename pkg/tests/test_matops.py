import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from impulsive_chaos import matops
from impulsive_chaos.errors import MatrixOverflowError, NoPrincipalLogError, SingularMatrixError

A_EX = np.array([[-6.0, 2.0], [-8.0, 1.0]])
P = np.array([[0.0, 1.0], [math.sqrt(15) / 4, 7 / 4]])


def small_matrices(n_max=5, bound=5.0):
    return st.integers(1, n_max).flatmap(
        lambda n: arrays(np.float64, (n, n), elements=st.floats(-bound, bound, allow_nan=False)))


def match_eigs(got, want, tol):
    """Greedy nearest-neighbour matching; the ordering of conjugate pairs may differ."""
    want = list(want)
    for z in got:
        j = min(range(len(want)), key=lambda i: abs(want[i] - z))
        assert abs(want[j] - z) <= tol
        want.pop(j)


def test_exp_zero_and_diagonal():
    assert np.array_equal(matops.mat_exp(np.zeros((2, 2))), np.eye(2))
    E = matops.mat_exp(np.diag([1.0, -1.0]))
    assert np.allclose(E, np.diag([math.e, 1 / math.e]), rtol=1e-14, atol=0)


def test_exp_matches_rotation_closed_form():
    # exp(A t) = e^{-5t/2} P R(sqrt(15)/2 t) P^{-1}
    t = 0.1
    w = math.sqrt(15) / 2
    R = np.array([[math.cos(w * t), -math.sin(w * t)], [math.sin(w * t), math.cos(w * t)]])
    closed = math.exp(-2.5 * t) * P @ R @ np.linalg.inv(P)
    assert np.max(np.abs(matops.mat_exp(A_EX * t) - closed)) <= 1e-10


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exp_overflow_is_reported():
    with pytest.raises(MatrixOverflowError):
        matops.mat_exp(np.array([[800.0, 0.0], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(small_matrices())
def test_exp_against_scipy(M):
    E = matops.mat_exp(M)
    ref = sla.expm(M)
    assert np.max(np.abs(E - ref)) <= 1e-11 * max(1.0, np.max(np.abs(ref)))


@settings(max_examples=60, deadline=None)
@given(small_matrices())
def test_exp_times_exp_negative_is_identity(M):
    n = M.shape[0]
    assert np.max(np.abs(matops.mat_exp(M) @ matops.mat_exp(-M) - np.eye(n))) <= 1e-9 * max(
        1.0, np.max(np.abs(matops.mat_exp(M))) * np.max(np.abs(matops.mat_exp(-M))) * 1e-3)


def test_log_identity_and_scalar():
    assert np.allclose(matops.mat_log_principal(np.eye(3)), 0.0, atol=1e-15)
    L = matops.mat_log_principal(np.eye(2) / 3)
    assert np.allclose(L, -math.log(3) * np.eye(2), rtol=1e-14, atol=1e-15)


def test_log_round_trip_upper_triangular():
    M = np.array([[2.0, 1.0], [0.0, 3.0]])
    L = matops.mat_log_principal(M)
    assert np.max(np.abs(matops.mat_exp(L) - M)) <= 1e-10 * np.max(np.abs(M))
    assert np.allclose(L, sla.logm(M), atol=1e-12)


def test_log_defective_matrix_uses_fallback():
    M = np.array([[2.0, 1.0, 0.0], [0.0, 2.0, 1.0], [0.0, 0.0, 2.0]])
    L = matops.mat_log_principal(M)
    assert np.max(np.abs(matops.mat_exp(L) - M)) <= 1e-10 * 2
    assert np.allclose(L, sla.logm(M).real, atol=1e-10)


@pytest.mark.parametrize("M", [
    np.zeros((2, 2)),
    np.diag([-1.0, 2.0]),
    np.array([[1.0, 2.0], [2.0, 4.0]]),
])
def test_log_domain_errors(M):
    with pytest.raises(NoPrincipalLogError):
        matops.mat_log_principal(M)


@settings(max_examples=50, deadline=None)
@given(small_matrices(n_max=4, bound=1.0), st.floats(1.5, 4.0))
def test_log_round_trip_right_half_plane(E, shift):
    # eigenvalues of shift*I + E lie in Re > 0 because |eig(E)| <= ||E||_inf <= 4 * 1 ... scaled below
    n = E.shape[0]
    M = shift * np.eye(n) + E * (0.9 * shift / max(np.max(np.abs(np.linalg.eigvals(E))), 1.0))
    L = matops.mat_log_principal(M)
    assert np.max(np.abs(matops.mat_exp(L) - M)) <= 1e-9 * max(1.0, np.max(np.abs(M)))


def test_eigenvalues_closed_forms():
    assert matops.eigenvalues(np.diag([-1.0, 5.0])) == [-1.0, 5.0]
    eigs = matops.eigenvalues(A_EX)
    want = [complex(-2.5, -math.sqrt(15) / 2), complex(-2.5, math.sqrt(15) / 2)]
    for z, w in zip(eigs, want):
        assert abs(z - w) <= 1e-12


def test_eigenvalues_of_log_drift():
    M = A_EX + (2 / math.pi) * matops.mat_log_principal(np.eye(2) / 3)
    re = -2.5 - (2 / math.pi) * math.log(3)
    eigs = matops.eigenvalues(M)
    assert abs(eigs[0] - complex(re, -math.sqrt(15) / 2)) <= 1e-9
    assert abs(eigs[1] - complex(re, math.sqrt(15) / 2)) <= 1e-9


@settings(max_examples=80, deadline=None)
@given(small_matrices(n_max=6))
def test_eigen_residual_trace_and_det(M):
    eigs = matops.eigenvalues(M)
    n = M.shape[0]
    assert len(eigs) == n
    scale = max(1.0, np.max(np.abs(M)))
    assert abs(sum(eigs) - np.trace(M)) <= 1e-8 * scale * n
    assert abs(np.prod(eigs) - np.linalg.det(M)) <= 1e-8 * scale ** n
    for z in eigs:
        # smallest singular value of M - zI is the best residual over unit vectors
        smin = np.linalg.svd(M - z * np.eye(n), compute_uv=False)[-1]
        assert smin <= 1e-9 * scale * n


def test_eigenvalues_match_lapack_on_generic_matrices():
    # defective matrices have ill-conditioned eigenvalues; random Gaussian ones do not
    rng = np.random.default_rng(7)
    for n in range(3, 9):
        for _ in range(10):
            M = rng.normal(size=(n, n))
            match_eigs(matops.eigenvalues(M), np.linalg.eigvals(M), 1e-9 * n)


def test_hessenberg_is_similar():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(6, 6))
    H = matops.hessenberg(M)
    assert np.allclose(np.tril(H, -2), 0.0, atol=1e-12)
    match_eigs(np.linalg.eigvals(H), np.linalg.eigvals(M), 1e-9)


def test_spectral_norm_examples():
    assert matops.spectral_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-12)
    assert matops.spectral_norm(np.diag([3.0, -2.0])) == pytest.approx(3.0, rel=1e-12)
    assert matops.spectral_norm(np.zeros((3, 3))) == 0.0
    cond = matops.spectral_norm(P) * matops.spectral_norm(matops.inverse(P))
    assert abs(cond - 4.9625) <= 1e-3


@settings(max_examples=60, deadline=None)
@given(small_matrices(n_max=6))
def test_spectral_norm_against_svd(M):
    ref = np.linalg.svd(M, compute_uv=False)[0]
    assert matops.spectral_norm(M) == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_spectral_norm_dominates_random_vectors():
    rng = np.random.default_rng(11)
    M = rng.normal(size=(4, 4))
    v = rng.normal(size=(1000, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    best = np.max(np.linalg.norm(v @ M.T, axis=1))
    s = matops.spectral_norm(M)
    assert best <= s * (1 + 1e-12)
    assert best >= s * (1 - 0.05)


def test_inverse_examples():
    assert np.array_equal(matops.inverse(np.eye(2)), np.eye(2))
    assert np.allclose(matops.inverse(np.eye(2) / 3), 3 * np.eye(2), rtol=1e-15)
    assert np.allclose(matops.inverse([[1.0, 2.0], [3.0, 4.0]]), [[-2.0, 1.0], [1.5, -0.5]], rtol=1e-14)
    with pytest.raises(SingularMatrixError):
        matops.inverse([[1.0, 2.0], [2.0, 4.0]])


@settings(max_examples=60, deadline=None)
@given(small_matrices(n_max=6))
def test_inverse_residual(M):
    if np.linalg.cond(M) > 1e8:
        return
    inv = matops.inverse(M)
    assert np.max(np.abs(M @ inv - np.eye(M.shape[0]))) <= 1e-10 * max(1.0, np.linalg.cond(M) / 1e4)


def test_power_and_det():
    M = np.array([[1.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(matops.mat_power(M, 10), [[89.0, 55.0], [55.0, 34.0]])
    assert np.array_equal(matops.mat_power(M, 0), np.eye(2))
    assert matops.det(np.eye(2) / 3) == pytest.approx(1 / 9, rel=1e-15)


def test_tolerances_are_one_record():
    assert matops.TOL.qr_max_iter == 10000
    assert matops.TOL.qr_deflation == 1e-13
    assert matops.TOL.pivot_rel == 1e-13
