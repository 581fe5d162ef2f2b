import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonholo.errors import DimensionError, RankDeficient
from nonholo.qrdiff import (
    basis_from_constraints,
    choose_signs,
    fd_basis_derivative,
    householder_qr,
    qr_diff,
)
from nonholo.systems import get_system


def _numpy_q(A, s):
    """Full Q from numpy's QR, columns rescaled to match our sign convention."""
    Q, R = np.linalg.qr(A, mode="complete")
    k = A.shape[1]
    # Householder with sign s_j gives R_jj = -s_j |.|; fix the first k columns by that
    flip = -s * np.sign(np.diag(R)[:k])
    Q = Q.copy()
    Q[:, :k] *= flip
    return Q


def test_householder_matches_numpy_projectors(rng):
    for _ in range(50):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, n))
        A = rng.normal(size=(n, k))
        Q, R, s = householder_qr(A)
        assert_allclose(Q.T @ Q, np.eye(n), atol=1e-13)
        assert_allclose(Q[:, :k] @ R[:k], A, atol=1e-13)
        assert_allclose(np.tril(R[:k], -1), 0.0, atol=1e-13)
        assert_allclose(R[k:], 0.0, atol=1e-13)
        Qn = _numpy_q(A, s)
        # same range and same complement
        assert_allclose(Q[:, :k] @ Q[:, :k].T, Qn[:, :k] @ Qn[:, :k].T, atol=1e-12)
        assert_allclose(Q[:, :k], Qn[:, :k], atol=1e-12)


def test_dq_against_numpy_finite_differences_with_richardson(rng):
    n, k = 6, 2
    A0, A1, A2 = rng.normal(size=(3, n, k))
    A = lambda t: A0 + t * A1 + t * t * A2  # noqa: E731
    out = qr_diff(A(0.0), A1[:, :, None])
    s = out.s
    # first k columns of Q are fixed by A and the signs: a numpy-only oracle
    errs = []
    for eps in (1e-3, 5e-4):
        fd = (_numpy_q(A(eps), s) - _numpy_q(A(-eps), s)) / (2 * eps)
        errs.append(np.max(np.abs(fd[:, :k] - out.dQ[:, :k, 0])))
    assert errs[0] <= 1e-5
    assert 3.5 <= errs[0] / errs[1] <= 4.5  # O(eps^2)
    # full Q (complement included) against our own QR with frozen signs
    for eps in (1e-4,):
        fd = (householder_qr(A(eps), s)[0] - householder_qr(A(-eps), s)[0]) / (2 * eps)
        assert np.max(np.abs(fd - out.dQ[:, :, 0])) <= 1e-7


def test_flipping_signs_keeps_projectors(rng):
    A = rng.normal(size=(5, 2))
    Q1, _, s = householder_qr(A)
    Q2, _, _ = householder_qr(A, -s)
    X1, X2 = Q1[:, 2:], Q2[:, 2:]
    assert_allclose(X1 @ X1.T, X2 @ X2.T, atol=1e-12)
    assert np.max(np.abs(X1 - X2)) > 1e-3


def test_differentiated_orthogonality(rng):
    A = rng.normal(size=(7, 3))
    out = qr_diff(A, rng.normal(size=(7, 3, 4)))
    for i in range(4):
        S = out.dQ[:, :, i].T @ out.Q
        assert_allclose(S, -S.T, atol=1e-12)


def test_choose_signs_and_rank_checks():
    A = np.array([[-2.0, 0.0], [0.0, 3.0], [1.0, 1.0]])
    assert_allclose(choose_signs(A), [-1.0, 1.0])
    with pytest.raises(RankDeficient):
        householder_qr(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        qr_diff(np.ones((3, 1)), np.ones((3, 2, 3)))
    with pytest.raises(DimensionError):
        qr_diff(np.eye(3)[:, :1], np.zeros((3, 1, 3)), n=4)


def test_basis_from_constraints_spans_distribution(rng):
    sleigh = get_system("chaplygin-sleigh").mechanical
    q = rng.uniform(-1, 1, 3)
    b = basis_from_constraints(sleigh, q)
    assert_allclose(sleigh.constraints(q).T @ b.X, 0.0, atol=1e-14)
    assert_allclose(b.X.T @ b.X, np.eye(2), atol=1e-14)
    s = choose_signs(sleigh.constraints(q))
    fd = fd_basis_derivative(sleigh, q, s, 1e-5)
    assert np.max(np.abs(fd - b.dX)) <= 1e-8


def test_fd_basis_derivative_error_scales_with_h_squared(rng):
    chaotic = get_system("chaotic-quartic").mechanical
    q = rng.uniform(-1, 1, 7)
    s = choose_signs(chaotic.constraints(q))
    exact = basis_from_constraints(chaotic, q, s).dX
    e1 = np.max(np.abs(fd_basis_derivative(chaotic, q, s, 1e-2) - exact))
    e2 = np.max(np.abs(fd_basis_derivative(chaotic, q, s, 1e-3) - exact))
    assert 60.0 <= e1 / e2 <= 140.0
