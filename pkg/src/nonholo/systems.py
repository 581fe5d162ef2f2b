"""Catalog of example systems: canonical descriptions and hand-reduced forms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .reduced import SkewGradientSystem
from .state import MechanicalSystem, ReducedBasis

Array = np.ndarray


@dataclass(frozen=True)
class SystemCatalogEntry:
    name: str
    params: dict
    mechanical: Optional[MechanicalSystem] = None
    reduced: Optional[SkewGradientSystem] = None
    hand_basis: Optional[Callable[[Array], ReducedBasis]] = None
    description: str = ""
    target_energy: Optional[float] = None


def _positive(**kw):
    for key, val in kw.items():
        if not val > 0:
            raise ValueError(f"{key} must be positive, got {val}")


def _constant_inverse_deriv(n):
    zero = np.zeros((n, n, n))
    return lambda q: zero


# --------------------------------------------------------------------------
# rolling disk
# --------------------------------------------------------------------------

def make_rolling_disk(m: float = 1.0, r: float = 1.0, J_theta: float = 1.0, J_phi: float = 1.0) -> SystemCatalogEntry:
    """Upright disk rolling without slipping; q = (x1, x2, theta, phi)."""
    _positive(m=m, r=r, J_theta=J_theta, J_phi=J_phi)
    g = np.diag([m, m, J_theta, J_phi])
    ginv = np.diag(1.0 / np.diag(g))
    I1 = m * r * r + J_phi

    def constraints(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [-r * c, -r * s]])

    def constraints_deriv(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        d = np.zeros((4, 2, 4))
        d[3, 0, 2] = r * s
        d[3, 1, 2] = -r * c
        return d

    mech = MechanicalSystem(
        n=4, k=2,
        metric=lambda q: g, metric_inv=lambda q: ginv,
        metric_inv_deriv=_constant_inverse_deriv(4),
        potential=lambda q: 0.0, potential_grad=lambda q: np.zeros(4),
        constraints=constraints, constraints_deriv=constraints_deriv,
        name="rolling-disk",
    )

    def hand_basis(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        X = np.array([[r * c, 0.0], [r * s, 0.0], [0.0, 1.0], [1.0, 0.0]])
        dX = np.zeros((4, 2, 4))
        dX[0, 0, 2] = -r * s
        dX[1, 0, 2] = r * c
        return ReducedBasis(X, dX)

    def pi(zeta):
        c, s = np.cos(zeta[2]), np.sin(zeta[2])
        P = np.zeros((6, 6))
        P[0, 4], P[1, 4], P[2, 5], P[3, 4] = r * c, r * s, 1.0, 1.0
        return P - P.T

    def hamiltonian(zeta):
        return 0.5 * (zeta[4] ** 2 / I1 + zeta[5] ** 2 / J_theta)

    def gradient(zeta):
        out = np.zeros(6)
        out[4] = zeta[4] / I1
        out[5] = zeta[5] / J_theta
        return out

    red = SkewGradientSystem(6, hamiltonian, gradient, pi, n_q=4, constraints=constraints, name="rolling-disk")
    return SystemCatalogEntry("rolling-disk", dict(m=m, r=r, J_theta=J_theta, J_phi=J_phi),
                              mech, red, hand_basis,
                              "disk rolling upright on a plane; exactly integrable")


# --------------------------------------------------------------------------
# chaotic quartic system on R^{2n+1}, q = (x, w_1..w_n, z_1..z_n)
# --------------------------------------------------------------------------

def make_chaotic_quartic(n_param: int = 3) -> SystemCatalogEntry:
    """Quartic potential with the single constraint xdot + sum w_i zdot_i = 0."""
    if int(n_param) != n_param or n_param < 1:
        raise ValueError(f"n_param must be a positive integer, got {n_param}")
    nn = int(n_param)
    dim = 2 * nn + 1
    W = slice(1, nn + 1)
    Z = slice(nn + 1, dim)
    eye = np.eye(dim)

    def potential(q):
        w, z = q[W], q[Z]
        v = q @ q + np.sum(w * w * z * z)
        if nn >= 2:
            v += z[0] ** 2 * z[1] ** 2
        return 0.5 * v

    def potential_grad(q):
        w, z = q[W], q[Z]
        out = q.copy()
        out[W] += w * z * z
        out[Z] += w * w * z
        if nn >= 2:
            out[nn + 1] += z[0] * z[1] ** 2
            out[nn + 2] += z[0] ** 2 * z[1]
        return out

    def constraints(q):
        mu = np.zeros((dim, 1))
        mu[0, 0] = 1.0
        mu[Z, 0] = q[W]
        return mu

    dmu = np.zeros((dim, 1, dim))
    for i in range(nn):
        dmu[nn + 1 + i, 0, 1 + i] = 1.0

    mech = MechanicalSystem(
        n=dim, k=1,
        metric=lambda q: eye, metric_inv=lambda q: eye,
        metric_inv_deriv=_constant_inverse_deriv(dim),
        potential=potential, potential_grad=potential_grad,
        constraints=constraints, constraints_deriv=lambda q: dmu,
        name="chaotic-quartic",
    )

    dX = np.zeros((dim, 2 * nn, dim))
    for i in range(nn):
        dX[0, nn + i, 1 + i] = 1.0

    def hand_basis(q):
        X = np.zeros((dim, 2 * nn))
        for i in range(nn):
            X[1 + i, i] = 1.0
            X[0, nn + i] = q[1 + i]
            X[nn + 1 + i, nn + i] = -1.0
        return ReducedBasis(X, dX)

    N = dim + 2 * nn
    Pfixed = np.zeros((N, N))
    for i in range(nn):
        Pfixed[1 + i, dim + i] = 1.0
        Pfixed[nn + 1 + i, dim + nn + i] = -1.0

    def split(zeta):
        q = zeta[:dim]
        w = q[W]
        eta = zeta[dim + nn:]
        kappa = (w @ eta) / (1.0 + w @ w)
        return q, w, eta, kappa

    def pi(zeta):
        q, w, eta, kappa = split(zeta)
        P = Pfixed.copy()
        P[0, dim + nn:] = w
        for i in range(nn):
            P[dim + i, dim + nn + i] = -kappa
        return P - P.T

    def hamiltonian(zeta):
        q, w, eta, kappa = split(zeta)
        rw = zeta[dim:dim + nn]
        return 0.5 * (rw @ rw + eta @ eta - kappa * (w @ eta)) + potential(q)

    def gradient(zeta):
        q, w, eta, kappa = split(zeta)
        out = np.empty(N)
        out[:dim] = potential_grad(q)
        out[1:nn + 1] += -kappa * eta + kappa * kappa * w
        out[dim:dim + nn] = zeta[dim:dim + nn]
        out[dim + nn:] = eta - kappa * w
        return out

    red = SkewGradientSystem(N, hamiltonian, gradient, pi, n_q=dim, constraints=constraints,
                             name="chaotic-quartic")
    return SystemCatalogEntry("chaotic-quartic", dict(n_param=nn), mech, red, hand_basis,
                              "chaotic quartic system with one nonholonomic constraint",
                              target_energy=3.06)


# --------------------------------------------------------------------------
# Chaplygin sleigh, q = (x1, x2, theta)
# --------------------------------------------------------------------------

def make_chaplygin_sleigh(m: float = 1.0, a: float = 1.0, J: float = 8.0) -> SystemCatalogEntry:
    """Knife-edge sleigh; ``a`` is the blade-to-centre-of-mass distance (may be 0 or negative)."""
    _positive(m=m, J=J)
    I = J + m * a * a
    sm, sI = np.sqrt(m), np.sqrt(I)
    c12 = a * sm / I

    def metric(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([[m, 0.0, -m * a * s], [0.0, m, m * a * c], [-m * a * s, m * a * c, I]])

    def metric_deriv_theta(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        return np.array([[0.0, 0.0, -m * a * c], [0.0, 0.0, -m * a * s], [-m * a * c, -m * a * s, 0.0]])

    def metric_inv(q):
        return np.linalg.inv(metric(q))

    def metric_inv_deriv(q):
        gi = metric_inv(q)
        d = np.zeros((3, 3, 3))
        d[:, :, 2] = -gi @ metric_deriv_theta(q) @ gi
        return d

    def constraints(q):
        return np.array([[-np.sin(q[2])], [np.cos(q[2])], [0.0]])

    def constraints_deriv(q):
        d = np.zeros((3, 1, 3))
        d[0, 0, 2] = -np.cos(q[2])
        d[1, 0, 2] = -np.sin(q[2])
        return d

    mech = MechanicalSystem(
        n=3, k=1, metric=metric, metric_inv=metric_inv, metric_inv_deriv=metric_inv_deriv,
        potential=lambda q: 0.0, potential_grad=lambda q: np.zeros(3),
        constraints=constraints, constraints_deriv=constraints_deriv, name="chaplygin-sleigh",
    )

    def hand_basis(q):
        c, s = np.cos(q[2]), np.sin(q[2])
        X = np.array([[0.0, c / sm], [0.0, s / sm], [1.0 / sI, 0.0]])
        dX = np.zeros((3, 2, 3))
        dX[0, 1, 2] = -s / sm
        dX[1, 1, 2] = c / sm
        return ReducedBasis(X, dX)

    def pi(zeta):
        c, s = np.cos(zeta[2]), np.sin(zeta[2])
        P = np.zeros((5, 5))
        P[0, 4], P[1, 4], P[2, 3] = c / sm, s / sm, 1.0 / sI
        P[3, 4] = -c12 * zeta[3]
        return P - P.T

    def gradient(zeta):
        out = np.zeros(5)
        out[3:] = zeta[3:]
        return out

    red = SkewGradientSystem(5, lambda z: 0.5 * (z[3] ** 2 + z[4] ** 2), gradient, pi,
                             n_q=3, constraints=constraints, name="chaplygin-sleigh")
    return SystemCatalogEntry("chaplygin-sleigh", dict(m=m, a=a, J=J), mech, red, hand_basis,
                              "Chaplygin sleigh with orthonormal adapted basis")


def sleigh_coupling(m: float, a: float, J: float) -> float:
    """C^1_12 = a sqrt(m) / (J + m a^2), the sleigh's only structure constant."""
    return a * np.sqrt(m) / (J + m * a * a)


# --------------------------------------------------------------------------
# Euler-Poincare-Suslov problem (pure momentum, no configuration block)
# --------------------------------------------------------------------------

def make_suslov(I11: float = 1.0, I22: float = 2.0, I33: float = 3.0,
                I13: float = 0.1, I23: float = 0.2) -> SystemCatalogEntry:
    _positive(I11=I11, I22=I22, I33=I33)
    C1, C2 = I13 / I11, I23 / I22

    def pi(rho):
        c = C1 * rho[0] + C2 * rho[1]
        return np.array([[0.0, -c], [c, 0.0]])

    red = SkewGradientSystem(
        2,
        lambda rho: 0.5 * (rho[0] ** 2 / I11 + rho[1] ** 2 / I22),
        lambda rho: np.array([rho[0] / I11, rho[1] / I22]),
        pi,
        name="suslov",
    )
    return SystemCatalogEntry("suslov", dict(I11=I11, I22=I22, I33=I33, I13=I13, I23=I23),
                              None, red, None, "Suslov problem on so(3); reduced form only")


# --------------------------------------------------------------------------
# continuous gearbox driven by an asymmetric pendulum
# --------------------------------------------------------------------------

def gearbox_potential(q: Array) -> float:
    """1/2 (q1^2 + q2^2) + cos q3 - 1/5 sin 2 q3."""
    return 0.5 * (q[0] ** 2 + q[1] ** 2) + np.cos(q[2]) - 0.2 * np.sin(2.0 * q[2])


def gearbox_potential_grad(q: Array) -> Array:
    return np.array([q[0], q[1], -np.sin(q[2]) - 0.4 * np.cos(2.0 * q[2])])


def make_gearbox_pendulum(potential_sign: float = 1.0) -> SystemCatalogEntry:
    """H = 1/2 |p|^2 + potential_sign * V(q).

    ``potential_sign=-1`` is H = T - V, the Hamiltonian exactly as printed for
    this system; ``+1`` gives the conventional T + V.
    """
    if potential_sign not in (-1.0, 1.0, -1, 1):
        raise ValueError("potential_sign must be +1 or -1")
    sgn = float(potential_sign)
    eye = np.eye(3)

    def constraints(q):
        return np.array([[1.0], [np.sin(q[2])], [0.0]])

    def constraints_deriv(q):
        d = np.zeros((3, 1, 3))
        d[1, 0, 2] = np.cos(q[2])
        return d

    mech = MechanicalSystem(
        n=3, k=1, metric=lambda q: eye, metric_inv=lambda q: eye,
        metric_inv_deriv=_constant_inverse_deriv(3),
        potential=lambda q: sgn * gearbox_potential(q),
        potential_grad=lambda q: sgn * gearbox_potential_grad(q),
        constraints=constraints, constraints_deriv=constraints_deriv, name="gearbox-pendulum",
    )
    return SystemCatalogEntry("gearbox-pendulum", dict(potential_sign=sgn), mech, None, None,
                              "continuous gearbox driven by an asymmetric pendulum; canonical form only")


CATALOG = {
    "rolling-disk": make_rolling_disk,
    "chaotic-quartic": make_chaotic_quartic,
    "chaplygin-sleigh": make_chaplygin_sleigh,
    "suslov": make_suslov,
    "gearbox-pendulum": make_gearbox_pendulum,
}


def get_system(name: str, **params) -> SystemCatalogEntry:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; available: {', '.join(CATALOG)}") from None
    return factory(**params)
