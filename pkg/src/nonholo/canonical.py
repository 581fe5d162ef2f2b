"""Energy-preserving steps that start from the canonical description (q, p).

Two routes:

* ``gonzalez_f_step``: a discrete-gradient step on T*Q with Lagrange
  multipliers.  Energy is exact, the constraints are only approximate.
* ``gonzalez_r_step``: map p to reduced momenta with a QR basis of D_q, take a
  discrete-gradient step of the reduced skew-gradient system assembled from
  canonical data, map back.  Energy and constraints are both exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .discrete_gradients import ScalarField, discrete_gradient, gonzalez_gradient, GONZALEZ
from .errors import DimensionError
from .qrdiff import choose_signs, fd_basis_derivative, householder_qr, qr_diff
from .reduced import (
    SkewGradientSystem,
    StepConfig,
    StepInfo,
    Trajectory,
    dg_step,
    march,
    solve_implicit,
)
from .state import (
    CanonicalState,
    MechanicalSystem,
    ReducedBasis,
    ReducedState,
    constraint_residual,
)

Array = np.ndarray

PROJECTION_TOL = 1e-10


def canonical_field(sys: MechanicalSystem) -> ScalarField:
    """H(z) on z = (q, p) as a scalar field for the discrete gradients."""
    n = sys.n

    def value(z):
        return sys.hamiltonian(z[:n], z[n:])

    def gradient(z):
        dq, dp = sys.hamiltonian_grad(z[:n], z[n:])
        return np.concatenate([dq, dp])

    return ScalarField(value, gradient)


@dataclass
class MultiplierStepResult:
    state: CanonicalState
    lam: Array
    info: StepInfo


def gonzalez_f_step(sys: MechanicalSystem, z: CanonicalState, cfg: StepConfig,
                    workspace: Optional[dict] = None) -> MultiplierStepResult:
    """Discrete-gradient step on T*Q with multipliers enforcing dg^T (0; mu(qbar)) = 0.

    Unknowns are (q', p', lambda): 2n + k of them.  qbar is the midpoint.
    """
    n, k, h = sys.n, sys.k, cfg.h
    H = canonical_field(sys)
    z0 = z.as_vector()
    hz = H.value(z0)
    kind = cfg.dg

    def residual(u):
        zp, lam = u[: 2 * n], u[2 * n:]
        qbar = 0.5 * (z0[:n] + zp[:n])
        mu = sys.constraints(qbar)
        if kind.tag == GONZALEZ:
            dg = gonzalez_gradient(H, z0, zp, kind.coincidence_tol, hx=hz)
        else:
            dg = discrete_gradient(kind, H, z0, zp)
        dq, dp = dg[:n], dg[n:]
        r = np.empty(2 * n + k)
        r[:n] = zp[:n] - z0[:n] - h * dp
        r[n:2 * n] = zp[n:] - z0[n:] + h * (dq - mu @ lam)
        r[2 * n:] = mu.T @ dp
        return r

    dq0, dp0 = sys.hamiltonian_grad(z.q, z.p)
    guess = np.concatenate([z.q + h * dp0, z.p - h * dq0, np.zeros(k)])
    u, info = solve_implicit(residual, guess, cfg.solver_tol, cfg.max_iter, full_output=True,
                             workspace=workspace)
    state = CanonicalState(u[:n], u[n:2 * n])
    if h != 0:
        info.discrete_constraint = sys.constraints(0.5 * (z.q + state.q)).T @ (state.q - z.q) / h
    return MultiplierStepResult(state, u[2 * n:], info)


@dataclass
class ReducedQuantities:
    sigma: Array  # m x m skew block, -C_ab^c rho_c
    grad_q: Array  # dH/dq (n,)
    grad_rho: Array  # dH/drho (m,)
    pi: Array  # (n+m) x (n+m) structure matrix
    p: Array  # canonical momenta reconstructed from rho

    @property
    def gradient(self) -> Array:
        return np.concatenate([self.grad_q, self.grad_rho])


def reduced_quantities(sys: MechanicalSystem, basis: ReducedBasis, zeta: ReducedState) -> ReducedQuantities:
    """Pi and grad H of the reduced system from canonical data and a basis with derivatives."""
    if basis.dX is None:
        raise ValueError("reduced_quantities needs basis derivatives dX")
    q, rho = zeta.q, zeta.rho
    X, dX = basis.X, basis.dX
    n, m = X.shape
    g = sys.metric(q)
    gX = g @ X
    y = np.linalg.solve(X.T @ gX, rho)  # g^{ab} rho_b
    p = gX @ y
    # T[a, b] = dX_a^j/dq^i X_b^i p_j
    pdX = p @ dX.transpose(1, 0, 2)
    T = pdX @ X
    sigma = T - T.T
    grad_q = (0.5 * (p @ (p @ sys.metric_inv_deriv(q)))
              - y @ pdX + sys.potential_grad(q))
    pi = np.zeros((n + m, n + m))
    pi[:n, n:] = X
    pi[n:, :n] = -X.T
    pi[n:, n:] = sigma
    return ReducedQuantities(sigma, grad_q, y, pi, p)


def _reduced_energy(sys: MechanicalSystem, X: Array, q: Array, rho: Array) -> float:
    G = X.T @ sys.metric(q) @ X
    return 0.5 * rho @ np.linalg.solve(G, rho) + sys.potential(q)


def qr_reduced_system(sys: MechanicalSystem, s: Array, fd_h: Optional[float] = None) -> SkewGradientSystem:
    """Reduced skew-gradient system built from canonical data via the QR basis.

    The sign vector ``s`` is baked in.  With ``fd_h`` the basis derivatives come
    from central differences of step ``fd_h`` instead of the differentiated QR.
    """
    n, k = sys.n, sys.k

    def basis(q):
        A = sys.constraints(q)
        if fd_h is None:
            out = qr_diff(A, sys.constraints_deriv(q), s)
            return ReducedBasis(out.Q[:, k:], out.dQ[:, k:, :])
        X = householder_qr(A, s)[0][:, k:]
        return ReducedBasis(X, fd_basis_derivative(sys, q, s, fd_h))

    def hamiltonian(zeta):
        q = zeta[:n]
        X = householder_qr(sys.constraints(q), s)[0][:, k:]
        return _reduced_energy(sys, X, q, zeta[n:])

    def pi_and_gradient(zeta):
        q = zeta[:n]
        rq = reduced_quantities(sys, basis(q), ReducedState(q, zeta[n:]))
        return rq.pi, rq.gradient

    return SkewGradientSystem(
        N=2 * n - k,
        hamiltonian=hamiltonian,
        gradient=lambda zeta: pi_and_gradient(zeta)[1],
        pi=lambda zeta: pi_and_gradient(zeta)[0],
        n_q=n,
        constraints=sys.constraints,
        pi_and_gradient=pi_and_gradient,
        name=f"{sys.name}/qr",
    )


def gonzalez_r_step(sys: MechanicalSystem, z: CanonicalState, cfg: StepConfig,
                    fd_h: Optional[float] = None,
                    workspace: Optional[dict] = None) -> tuple[CanonicalState, StepInfo]:
    """(q, p) -> (q, rho) -> discrete-gradient step -> (q', rho') -> (q', p').

    Inputs off the constraint manifold are projected first and flagged in
    ``info.projected``.  ``workspace`` carries the Newton Jacobian between
    steps; it is dropped whenever the sign vector changes.
    """
    if sys.k == 0:
        raise DimensionError("gonzalez_r_step needs at least one constraint")
    n, k = sys.n, sys.k
    q = z.q
    s = choose_signs(sys.constraints(q))
    X = householder_qr(sys.constraints(q), s)[0][:, k:]
    p = z.p
    projected = False
    if np.max(np.abs(constraint_residual(sys, z))) > PROJECTION_TOL:
        gX = sys.metric(q) @ X
        p = gX @ np.linalg.solve(X.T @ gX, X.T @ p)
        projected = True
    zeta = np.concatenate([q, X.T @ p])
    red = qr_reduced_system(sys, s, fd_h)
    if workspace is not None:
        if not np.array_equal(workspace.get("signs"), s):
            workspace.clear()
            workspace["signs"] = s
    zp, info = dg_step(red, zeta, cfg, workspace)
    qp, rhop = zp[:n], zp[n:]
    Xp = householder_qr(sys.constraints(qp), s)[0][:, k:]
    gXp = sys.metric(qp) @ Xp
    pp = gXp @ np.linalg.solve(Xp.T @ gXp, rhop)
    info.projected = projected
    return CanonicalState(qp, pp), info


def gonzalez_r_fd_step(sys: MechanicalSystem, z: CanonicalState, cfg: StepConfig,
                       fd_h: Optional[float] = None,
                       workspace: Optional[dict] = None) -> tuple[CanonicalState, StepInfo]:
    """As :func:`gonzalez_r_step`, basis derivatives by central differences of step ``fd_h`` (default h)."""
    if fd_h is None:
        fd_h = abs(cfg.h)
    if fd_h == 0:
        return gonzalez_r_step(sys, z, cfg, workspace=workspace)
    return gonzalez_r_step(sys, z, cfg, fd_h=fd_h, workspace=workspace)


def integrate_canonical(sys: MechanicalSystem, z0: CanonicalState, cfg: StepConfig, n_steps: int,
                        method: str = "gonzalez-r") -> Trajectory:
    """Trajectory of a canonical-coordinate method: 'gonzalez-r', 'gonzalez-r-fd' or 'gonzalez-f'."""
    n = sys.n
    ws: dict = {}
    if method == "gonzalez-r":
        def step(x):
            zp, info = gonzalez_r_step(sys, CanonicalState.from_vector(x), cfg, workspace=ws)
            return zp.as_vector(), info
    elif method == "gonzalez-r-fd":
        def step(x):
            zp, info = gonzalez_r_fd_step(sys, CanonicalState.from_vector(x), cfg, workspace=ws)
            return zp.as_vector(), info
    elif method == "gonzalez-f":
        def step(x):
            res = gonzalez_f_step(sys, CanonicalState.from_vector(x), cfg, workspace=ws)
            return res.state.as_vector(), res.info
    else:
        raise ValueError(f"unknown canonical method {method!r}")

    return march(
        step,
        z0.as_vector(),
        cfg.h,
        n_steps,
        energy=lambda x: sys.hamiltonian(x[:n], x[n:]),
        constraint=lambda x: constraint_residual(sys, CanonicalState.from_vector(x)),
        n_q=n,
        momentum_label="p",
    )
