"""Skew-gradient systems zeta' = Pi(zeta) grad H(zeta) and their discrete-gradient steps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .discrete_gradients import (
    GONZALEZ,
    DiscreteGradientKind,
    ScalarField,
    discrete_gradient,
    gonzalez_gradient,
)
from .errors import SingularJacobian, SolverDiverged

Array = np.ndarray

MIDPOINT = "midpoint"
FROZEN_AT_START = "frozen"


@dataclass(frozen=True)
class SkewGradientSystem:
    """zeta' = Pi(zeta) grad H(zeta) with Pi skew-symmetric.

    When the state splits as zeta = (q, rho) set ``n_q`` to the length of the q
    block and, optionally, ``constraints`` to mu(q) (n_q x k) so steps can
    report the discrete constraint identity.  ``pi_and_gradient`` may return
    both Pi and grad H at once when they share expensive work.
    """

    N: int
    hamiltonian: Callable[[Array], float]
    gradient: Callable[[Array], Array]
    pi: Callable[[Array], Array]
    n_q: int = 0
    constraints: Optional[Callable[[Array], Array]] = None
    pi_and_gradient: Optional[Callable[[Array], tuple[Array, Array]]] = None
    name: str = ""

    @property
    def field(self) -> ScalarField:
        return ScalarField(self.hamiltonian, self.gradient)

    def split(self, zeta: Array) -> tuple[Array, Array]:
        return zeta[: self.n_q], zeta[self.n_q:]


@dataclass(frozen=True)
class StepConfig:
    h: float
    dg: DiscreteGradientKind = field(default_factory=DiscreteGradientKind)
    pi_approx: str = MIDPOINT
    solver_tol: float = 1e-12
    max_iter: int = 50
    debug: bool = False

    def __post_init__(self):
        if self.solver_tol <= 0:
            raise ValueError("solver_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.pi_approx not in (MIDPOINT, FROZEN_AT_START):
            raise ValueError(f"pi_approx must be {MIDPOINT!r} or {FROZEN_AT_START!r}")


@dataclass
class StepInfo:
    iterations: int = 0
    residual: float = 0.0
    unknowns: int = 0
    discrete_constraint: Optional[Array] = None
    projected: bool = False


@dataclass
class Trajectory:
    """States on a uniform time grid plus per-step diagnostics.

    ``constraint`` is the pointwise residual mu^T g^{-1} p (canonical methods);
    ``discrete_constraint`` is mu(qbar)^T (q' - q)/h of the step that produced
    each row (zero in row 0).  Either may be None when it does not apply.
    """

    times: Array
    states: Array
    energy: Array
    iterations: Array
    solver_residual: Array
    constraint: Optional[Array] = None
    discrete_constraint: Optional[Array] = None
    n_q: int = 0
    momentum_label: str = "rho"

    @property
    def rel_energy_error(self) -> Array:
        return np.abs(self.energy - self.energy[0]) / abs(self.energy[0])

    @property
    def max_rel_energy_error(self) -> float:
        return float(np.max(self.rel_energy_error))


def rhs(sys: SkewGradientSystem, zeta: Array) -> Array:
    if sys.pi_and_gradient is not None:
        pi, g = sys.pi_and_gradient(zeta)
        return pi @ g
    return sys.pi(zeta) @ sys.gradient(zeta)


def _fd_jacobian(residual, x, fx):
    step = 1e-7 * (1.0 + np.max(np.abs(x)))
    J = np.empty((fx.size, x.size))
    for j in range(x.size):
        xj = x.copy()
        xj[j] += step
        J[:, j] = (residual(xj) - fx) / step
    return J


def _factor(J):
    if not np.all(np.isfinite(J)):
        raise SingularJacobian("Jacobian has non-finite entries")
    lu, piv = lu_factor(J, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.min() <= 1e-14 * max(d.max(), 1e-300):
        raise SingularJacobian("finite-difference Jacobian is singular")
    return lu, piv


_STALE_CONTRACTION = 1e-3


def solve_implicit(
    residual: Callable[[Array], Array],
    guess: Array,
    tol: float = 1e-12,
    max_iter: int = 50,
    full_output: bool = False,
    workspace: Optional[dict] = None,
):
    """Solve residual(x) = 0 by Newton iteration with a forward-difference Jacobian.

    Converged means ``|F(x)|_inf <= tol * (1 + |x|_inf)``.  The Jacobian is kept
    while the residual contracts by at least a factor 10 per iteration and is
    rebuilt otherwise.  Once converged, one more correction with the current
    Jacobian is taken and kept if it does not increase the residual.

    Passing the same ``workspace`` dict to consecutive solves lets a factored
    Jacobian carry over from one solve to the next.  A carried Jacobian has to
    cut the residual by ``_STALE_CONTRACTION`` on its first use or it is
    replaced; after such a miss, reuse is suspended for a growing number of
    solves, so stiff or fast-changing problems fall back to plain Newton.

    Returns ``x``, or ``(x, StepInfo)`` with ``full_output=True``.
    """
    x = np.array(guess, dtype=float)
    F = residual(x)
    r = np.max(np.abs(F), initial=0.0)
    it = 0
    if not np.isfinite(r):
        raise SolverDiverged("residual is non-finite at the initial guess", residual=r)
    if r > tol * (1.0 + np.max(np.abs(x), initial=0.0)):
        factor = None
        if workspace is not None:
            if workspace.get("skip", 0) > 0:
                workspace["skip"] -= 1
            else:
                factor = workspace.get("factor")
        stale = factor is not None
        prev = r
        while True:
            if it >= max_iter:
                raise SolverDiverged(f"no convergence in {max_iter} iterations (residual {r:.3e})",
                                     residual=r, iterations=it)
            if factor is None:
                factor = _factor(_fd_jacobian(residual, x, F))
            x_new = x + lu_solve(factor, -F, check_finite=False)
            F_new = residual(x_new)
            r_new = np.max(np.abs(F_new))
            it += 1
            if stale:
                stale = False
                if not (r_new <= _STALE_CONTRACTION * prev):
                    misses = workspace.get("misses", 0) + 1
                    workspace["misses"] = misses
                    workspace["skip"] = min(2 ** misses, 64)
                    factor = None
                    if not (np.isfinite(r_new) and r_new < prev):
                        continue  # discard the step, retry from x with a fresh Jacobian
                else:
                    workspace["misses"] = 0
            x, F, r = x_new, F_new, r_new
            if not np.isfinite(r):
                raise SolverDiverged("residual became non-finite", residual=r, iterations=it)
            if r <= tol * (1.0 + np.max(np.abs(x))):
                if r > 0.0:
                    if factor is None:
                        factor = _factor(_fd_jacobian(residual, x, F))
                    x2 = x + lu_solve(factor, -F, check_finite=False)
                    F2 = residual(x2)
                    r2 = np.max(np.abs(F2))
                    if r2 <= r:
                        x, r = x2, r2
                break
            if r > 0.1 * prev:
                factor = None
            prev = r
        if workspace is not None:
            workspace["factor"] = factor
    if full_output:
        return x, StepInfo(iterations=it, residual=float(r), unknowns=x.size)
    return x


def dg_step(sys: SkewGradientSystem, zeta: Array, cfg: StepConfig,
            workspace: Optional[dict] = None) -> tuple[Array, StepInfo]:
    """One step of (zeta' - zeta)/h = Pi~ dg(zeta, zeta').

    ``workspace`` is handed to :func:`solve_implicit` for Jacobian reuse.
    """
    zeta = np.asarray(zeta, dtype=float)
    h = cfg.h
    H = sys.field
    kind = cfg.dg
    midpoint = cfg.pi_approx == MIDPOINT
    joint = sys.pi_and_gradient is not None

    if joint:
        pi0, g0 = sys.pi_and_gradient(zeta)
    else:
        pi0, g0 = sys.pi(zeta), sys.gradient(zeta)
    hx = sys.hamiltonian(zeta) if kind.tag == GONZALEZ else None

    def residual(zp):
        if midpoint and kind.tag == GONZALEZ and joint:
            pi, gm = sys.pi_and_gradient(0.5 * (zeta + zp))
            dg = gonzalez_gradient(H, zeta, zp, kind.coincidence_tol, hx=hx, mid_grad=gm)
        else:
            pi = sys.pi(0.5 * (zeta + zp)) if midpoint else pi0
            if kind.tag == GONZALEZ:
                dg = gonzalez_gradient(H, zeta, zp, kind.coincidence_tol, hx=hx)
            else:
                dg = discrete_gradient(kind, H, zeta, zp)
        if cfg.debug:
            _check_skew(pi)
        return zp - zeta - h * (pi @ dg)

    guess = zeta + h * (pi0 @ g0)
    zp, info = solve_implicit(residual, guess, cfg.solver_tol, cfg.max_iter, full_output=True,
                              workspace=workspace)

    if sys.constraints is not None and sys.n_q > 0 and h != 0:
        q, qp = zeta[: sys.n_q], zp[: sys.n_q]
        qbar = 0.5 * (q + qp) if midpoint else q
        info.discrete_constraint = sys.constraints(qbar).T @ (qp - q) / h
    return zp, info


def _check_skew(pi: Array) -> None:
    scale = max(np.max(np.abs(pi)), 1e-300)
    if np.max(np.abs(pi + pi.T)) > 1e-12 * scale:
        raise AssertionError("approximate structure matrix is not skew-symmetric")


def march(
    step: Callable[[Array], tuple[Array, StepInfo]],
    x0: Array,
    h: float,
    n_steps: int,
    energy: Callable[[Array], float],
    constraint: Optional[Callable[[Array], Array]] = None,
    n_q: int = 0,
    momentum_label: str = "rho",
) -> Trajectory:
    """Repeat ``step`` n_steps times, recording diagnostics; shared by every method."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not h > 0:
        raise ValueError("integration needs h > 0")
    x = np.asarray(x0, dtype=float)
    states = np.empty((n_steps + 1, x.size))
    states[0] = x
    E = np.empty(n_steps + 1)
    E[0] = energy(x)
    iters = np.zeros(n_steps + 1, dtype=int)
    resid = np.zeros(n_steps + 1)
    cons = None
    if constraint is not None:
        c0 = np.atleast_1d(constraint(x))
        cons = np.empty((n_steps + 1, c0.size))
        cons[0] = c0
    dcons = None
    for k in range(1, n_steps + 1):
        try:
            x, info = step(x)
        except SolverDiverged as exc:
            exc.step = k
            raise
        states[k] = x
        E[k] = energy(x)
        iters[k] = info.iterations
        resid[k] = info.residual
        if cons is not None:
            cons[k] = constraint(x)
        if info.discrete_constraint is not None:
            if dcons is None:
                dcons = np.zeros((n_steps + 1, info.discrete_constraint.size))
            dcons[k] = info.discrete_constraint
    times = h * np.arange(n_steps + 1)
    return Trajectory(times, states, E, iters, resid, cons, dcons, n_q, momentum_label)


def integrate(sys: SkewGradientSystem, zeta0: Array, cfg: StepConfig, n_steps: int) -> Trajectory:
    workspace: dict = {}
    return march(lambda z: dg_step(sys, z, cfg, workspace), zeta0, cfg.h, n_steps, sys.hamiltonian,
                 n_q=sys.n_q)
