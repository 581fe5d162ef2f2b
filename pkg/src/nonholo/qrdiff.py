"""Householder QR of the constraint matrix, differentiated with respect to q.

The last m = n - k columns of the full orthogonal factor span the kernel of
mu(q)^T, i.e. the constraint distribution D_q, so they serve as a basis X_a(q)
whose q-derivatives come out of the same sweep.

Reflection k (0-based) sends column k of the current R to -s_k |x| e_k, where
x = R[k:, k].  Keeping the sign vector s fixed makes q -> Q(q) smooth, which is
why every factorization inside one integration step must share it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, RankDeficient
from .state import MechanicalSystem, ReducedBasis

Array = np.ndarray

_RANK_TOL = 1e-13


@dataclass(frozen=True)
class QRDiffOutput:
    Q: Array  # n x n orthogonal
    R: Array  # n x k, upper triangular
    dQ: Array  # n x n x n_vars, dQ[:, :, i] = dQ/dq^i
    s: Array  # sign vector actually used


def _pivot_sign(value: float) -> float:
    return -1.0 if value < 0 else 1.0


def _reflector(R, k, s_k, scale):
    x = R[k:, k]
    nx = np.sqrt(x @ x)
    if nx <= _RANK_TOL * scale:
        raise RankDeficient(f"column {k} has vanishing norm below the diagonal")
    nwt2 = 2.0 * (nx * nx + s_k * R[k, k] * nx)
    if nwt2 <= (_RANK_TOL * scale) ** 2:
        raise RankDeficient(f"reflector {k} degenerates for sign choice {s_k:+.0f}")
    return x, nx, np.sqrt(nwt2)


def householder_qr(A: Array, s: Optional[Array] = None) -> tuple[Array, Array, Array]:
    """Full QR by Householder reflections with prescribed (or pivot-sign) signs.

    Returns ``(Q, R, s)``.
    """
    A = np.asarray(A, dtype=float)
    n, k = A.shape
    R = A.copy()
    Q = np.eye(n)
    signs = np.empty(k) if s is None else np.asarray(s, dtype=float)
    scale = max(np.max(np.abs(A), initial=0.0), 1e-300)
    for j in range(k):
        if s is None:
            signs[j] = _pivot_sign(R[j, j])
        x, nx, nwt = _reflector(R, j, signs[j], scale)
        w = np.zeros(n)
        w[j:] = x
        w[j] += signs[j] * nx
        w /= nwt
        R -= 2.0 * w[:, None] * (w @ R)
        Q -= 2.0 * (Q @ w)[:, None] * w
    return Q, R, signs


def choose_signs(A: Array) -> Array:
    """Sign vector with s_k = sign of the k-th pivot (+1 when it is zero)."""
    return householder_qr(A)[2]


def qr_diff(A: Array, dA: Array, s: Optional[Array] = None,
            n: Optional[int] = None, m: Optional[int] = None) -> QRDiffOutput:
    """QR factorization of A(q) together with every partial dQ/dq^i.

    ``dA[:, :, i]`` is dA/dq^i.  ``n`` and ``m`` are optional consistency checks
    (rows of A and the rank of the distribution).
    """
    A = np.asarray(A, dtype=float)
    dA = np.asarray(dA, dtype=float)
    rows, k = A.shape
    if dA.ndim != 3 or dA.shape[:2] != A.shape:
        raise DimensionError(f"dA must have shape {A.shape} + (n_vars,), got {dA.shape}")
    if n is not None and n != rows:
        raise DimensionError(f"A has {rows} rows, expected n={n}")
    if m is not None and m != rows - k:
        raise DimensionError(f"A has {k} columns, expected n - m = {rows - m}")
    if s is not None and len(s) != k:
        raise DimensionError(f"sign vector must have {k} entries")

    R = A.copy()
    Q = np.eye(rows)
    dR = dA.transpose(2, 0, 1).copy()  # (n_vars, rows, k)
    dQ = np.zeros((dR.shape[0], rows, rows))
    signs = np.empty(k) if s is None else np.asarray(s, dtype=float)
    scale = max(np.max(np.abs(A), initial=0.0), 1e-300)

    for j in range(k):
        if s is None:
            signs[j] = _pivot_sign(R[j, j])
        sj = signs[j]
        x, nx, nwt = _reflector(R, j, sj, scale)
        wt = np.zeros(rows)
        wt[j:] = x
        wt[j] += sj * nx
        w = wt / nwt
        u = w @ R

        dx = dR[:, j:, j]
        dwt = np.zeros((dR.shape[0], rows))
        dwt[:, j:] = dx
        dwt[:, j] += sj * (dx @ x) / nx
        dnwt = dwt @ wt / nwt
        dw = (dwt - dnwt[:, None] * w) / nwt
        du = dw @ R + w @ dR
        dR -= 2.0 * (dw[:, :, None] * u + w[:, None] * du[:, None, :])
        Qw = Q @ w
        # d(Q - 2 Q w w^T) = dQ - 2 dQ w w^T - 2 Q (dw w^T + w dw^T)
        dQ -= 2.0 * (((dQ @ w) + dw @ Q.T)[:, :, None] * w + Qw[:, None] * dw[:, None, :])

        R -= 2.0 * w[:, None] * u
        Q -= 2.0 * Qw[:, None] * w

    return QRDiffOutput(Q, R, dQ.transpose(1, 2, 0), signs)


def basis_from_constraints(sys: MechanicalSystem, q: Array, s: Optional[Array] = None,
                           derivatives: bool = True) -> ReducedBasis:
    """Orthonormal basis of D_q from the trailing columns of the QR factor."""
    A = sys.constraints(q)
    k = A.shape[1]
    if not derivatives:
        Q, _, _ = householder_qr(A, s)
        return ReducedBasis(Q[:, k:])
    out = qr_diff(A, sys.constraints_deriv(q), s)
    return ReducedBasis(out.Q[:, k:], out.dQ[:, k:, :])


def fd_basis_derivative(sys: MechanicalSystem, q: Array, s: Array, h: float) -> Array:
    """Central-difference dX/dq^i with the sign vector held fixed."""
    q = np.asarray(q, dtype=float)
    k = sys.k
    cols = []
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = h
        Xp = householder_qr(sys.constraints(q + e), s)[0][:, k:]
        Xm = householder_qr(sys.constraints(q - e), s)[0][:, k:]
        cols.append((Xp - Xm) / (2.0 * h))
    return np.stack(cols, axis=-1)
