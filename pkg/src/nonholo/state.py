"""System descriptions and the change of momenta between T*Q and D*.

Conventions
-----------
Every derivative tensor carries the differentiation index LAST, so
``metric_inv_deriv(q)[j, k, i]`` is dg^{jk}/dq^i, ``constraints_deriv(q)[i, a, j]``
is d mu^a_i / dq^j and ``ReducedBasis.dX[j, a, i]`` is dX^j_a / dq^i.

Constraint matrices are stored column-wise: ``constraints(q)`` is n x k with one
covector mu^a per column, so the velocity constraints read ``mu.T @ qdot = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, SingularReducedMetric

Array = np.ndarray


def fd_step(q: Array) -> float:
    """Step used by the finite-difference fallbacks: 1e-6 * (1 + |q|_inf)."""
    return 1e-6 * (1.0 + np.max(np.abs(q), initial=0.0))


def central_difference(f: Callable[[Array], Array], q: Array, step: Optional[float] = None) -> Array:
    """Jacobian-like tensor of ``f`` at ``q`` with the derivative axis appended last."""
    q = np.asarray(q, dtype=float)
    if step is None:
        step = fd_step(q)
    cols = []
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = step
        cols.append((np.asarray(f(q + e)) - np.asarray(f(q - e))) / (2.0 * step))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class MechanicalSystem:
    """Canonical description of a nonholonomic system of mechanical type.

    ``H(q, p) = 1/2 p^T g^{-1}(q) p + V(q)`` with linear velocity constraints
    ``constraints(q).T @ qdot = 0``.  Use :meth:`build` to fill in any derivative
    callables by central differences.
    """

    n: int
    k: int
    metric: Callable[[Array], Array]
    metric_inv: Callable[[Array], Array]
    metric_inv_deriv: Callable[[Array], Array]
    potential: Callable[[Array], float]
    potential_grad: Callable[[Array], Array]
    constraints: Callable[[Array], Array]
    constraints_deriv: Callable[[Array], Array]
    name: str = ""

    @classmethod
    def build(
        cls,
        n: int,
        k: int,
        metric: Callable[[Array], Array],
        potential: Callable[[Array], float],
        constraints: Callable[[Array], Array],
        *,
        metric_inv=None,
        metric_inv_deriv=None,
        potential_grad=None,
        constraints_deriv=None,
        name: str = "",
    ) -> "MechanicalSystem":
        if n < 1 or k < 0 or k >= n:
            raise DimensionError(f"need n >= 1 and 0 <= k < n, got n={n}, k={k}")
        if metric_inv is None:
            def metric_inv(q):
                return np.linalg.inv(metric(q))
        if metric_inv_deriv is None:
            def metric_inv_deriv(q):
                return central_difference(metric_inv, q)
        if potential_grad is None:
            def potential_grad(q):
                return central_difference(lambda x: np.array(potential(x)), q)
        if constraints_deriv is None:
            def constraints_deriv(q):
                return central_difference(constraints, q)
        return cls(n, k, metric, metric_inv, metric_inv_deriv, potential,
                   potential_grad, constraints, constraints_deriv, name)

    def metric_deriv(self, q: Array) -> Array:
        """dg_{jk}/dq^i from dg^{-1} via dg = -g (dg^{-1}) g."""
        g = self.metric(q)
        dginv = self.metric_inv_deriv(q)
        return -(g @ dginv.transpose(2, 0, 1) @ g).transpose(1, 2, 0)

    def hamiltonian(self, q: Array, p: Array) -> float:
        return 0.5 * p @ self.metric_inv(q) @ p + self.potential(q)

    def hamiltonian_grad(self, q: Array, p: Array) -> tuple[Array, Array]:
        """Return (dH/dq, dH/dp)."""
        dginv = self.metric_inv_deriv(q)
        dq = 0.5 * (p @ (p @ dginv)) + self.potential_grad(q)
        return dq, self.metric_inv(q) @ p


@dataclass(frozen=True)
class ReducedBasis:
    """Columns X_a spanning D_q at one configuration, plus their q-derivatives."""

    X: Array
    dX: Optional[Array] = None

    @property
    def m(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class CanonicalState:
    q: Array
    p: Array

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape:
            raise DimensionError(f"q has shape {self.q.shape} but p has {self.p.shape}")

    def as_vector(self) -> Array:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, z: Array) -> "CanonicalState":
        n = len(z) // 2
        return cls(z[:n], z[n:])


@dataclass(frozen=True)
class ReducedState:
    q: Array
    rho: Array

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))

    def as_vector(self) -> Array:
        return np.concatenate([self.q, self.rho])

    @classmethod
    def from_vector(cls, zeta: Array, n: int) -> "ReducedState":
        return cls(zeta[:n], zeta[n:])


def _check_basis(sys: MechanicalSystem, basis: ReducedBasis, q: Array) -> None:
    if q.shape != (sys.n,):
        raise DimensionError(f"expected q of length {sys.n}, got {q.shape}")
    if basis.X.shape[0] != sys.n:
        raise DimensionError(f"basis has {basis.X.shape[0]} rows, system has n={sys.n}")


def reduced_metric(sys: MechanicalSystem, basis: ReducedBasis, q: Array) -> Array:
    """g_ab = X_a^T g X_b."""
    return basis.X.T @ sys.metric(q) @ basis.X


def rho_from_p(sys: MechanicalSystem, basis: ReducedBasis, z: CanonicalState) -> ReducedState:
    """rho_b = X_b^i p_i."""
    _check_basis(sys, basis, z.q)
    if z.p.shape != (sys.n,):
        raise DimensionError(f"expected p of length {sys.n}, got {z.p.shape}")
    return ReducedState(z.q, basis.X.T @ z.p)


def p_from_rho(sys: MechanicalSystem, basis: ReducedBasis, zeta: ReducedState) -> CanonicalState:
    """p_i = g_ij X^j_a g^{ab} rho_b; the result always satisfies the constraints."""
    _check_basis(sys, basis, zeta.q)
    if zeta.rho.shape != (basis.m,):
        raise DimensionError(f"expected rho of length {basis.m}, got {zeta.rho.shape}")
    g = sys.metric(zeta.q)
    gX = g @ basis.X
    G = basis.X.T @ gX
    if np.linalg.cond(G) > 1e12:
        raise SingularReducedMetric("reduced metric X^T g X is numerically singular")
    return CanonicalState(zeta.q, gX @ np.linalg.solve(G, zeta.rho))


def constraint_residual(sys: MechanicalSystem, z: CanonicalState) -> Array:
    """mu_i^a g^{ik} p_k for every constraint a."""
    return sys.constraints(z.q).T @ (sys.metric_inv(z.q) @ z.p)
