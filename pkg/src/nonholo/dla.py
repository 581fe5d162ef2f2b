"""Midpoint discrete Lagrange-d'Alembert (DLA) integrator, the comparison baseline.

Discrete Lagrangian ``L_d(q0, q1) = h L((q0 + q1)/2, (q1 - q0)/h)`` with
``L = 1/2 v^T g(q) v - V(q)``.  One step from (q_k, p_k) solves

    g(qbar) v - (h/2) dL/dq(qbar, v) = p_k + h mu(q_f) lam
    mu(qbar)^T v = 0

for (q_{k+1}, lam), with v = (q_{k+1} - q_k)/h, qbar the midpoint and q_f the
point where the constraint force acts (q_k by default, or qbar).  The new
momentum is the discrete Legendre transform g(qbar) v + (h/2) dL/dq projected
onto mu(q_{k+1})^T g^{-1} p = 0 along g^{-1} mu(q_{k+1}).  The projection only
shifts p along the direction of the next step's constraint force, so with the
force at q_k the configurations are those of the plain scheme; without it the
momentum would lag by half an impulse and be only first-order accurate.

Energy is not conserved exactly; its error oscillates at O(h^2).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .reduced import StepInfo, Trajectory, march, solve_implicit
from .state import CanonicalState, MechanicalSystem, constraint_residual

Array = np.ndarray

FORCE_LEFT = "left"
FORCE_MIDPOINT = "midpoint"


@dataclass(frozen=True)
class DLAState:
    """(q_k, p_k) with p_k the (projected) discrete Legendre transform of the last step."""

    q: Array
    p: Array

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    def as_vector(self) -> Array:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, z: Array) -> "DLAState":
        n = len(z) // 2
        return cls(z[:n], z[n:])


def lagrangian_dq(sys: MechanicalSystem, q: Array, v: Array, gv: Optional[Array] = None) -> Array:
    """dL/dq^i = 1/2 v^T (dg/dq^i) v - dV/dq^i.

    Uses 1/2 v^T dg v = -1/2 (g v)^T dg^{-1} (g v); pass ``gv`` if known.
    """
    if gv is None:
        gv = sys.metric(q) @ v
    return -0.5 * (gv @ (gv @ sys.metric_inv_deriv(q))) - sys.potential_grad(q)


def _legendre_plus(sys: MechanicalSystem, q0: Array, q1: Array, h: float) -> Array:
    """D2 L_d(q0, q1)."""
    v = (q1 - q0) / h
    qbar = 0.5 * (q0 + q1)
    gv = sys.metric(qbar) @ v
    return gv + 0.5 * h * lagrangian_dq(sys, qbar, v, gv)


def _project_momentum(sys: MechanicalSystem, q: Array, p: Array) -> Array:
    """p + mu nu with nu chosen so that mu(q)^T g^{-1} p = 0."""
    if sys.k == 0:
        return p
    mu = sys.constraints(q)
    gm = sys.metric_inv(q) @ mu
    return p - mu @ np.linalg.solve(mu.T @ gm, gm.T @ p)


def state_from_configurations(sys: MechanicalSystem, q_prev: Array, q_curr: Array, h: float) -> DLAState:
    """DLAState at q_curr from two consecutive configurations (step h).

    With (q_{k+1}, q_k, -h) this gives the state that steps backwards to
    q_{k-1}.
    """
    q_prev = np.asarray(q_prev, dtype=float)
    q_curr = np.asarray(q_curr, dtype=float)
    return DLAState(q_curr, _project_momentum(sys, q_curr, _legendre_plus(sys, q_prev, q_curr, h)))


def dla_step(sys: MechanicalSystem, state: DLAState, h: float, force_at: str = FORCE_LEFT,
             tol: float = 1e-12, max_iter: int = 50,
             workspace: Optional[dict] = None) -> tuple[DLAState, StepInfo]:
    """One DLA step; returns the new state and solver diagnostics.

    ``info.discrete_constraint`` holds mu(qbar)^T (q' - q)/h.
    """
    if h == 0:
        raise ValueError("dla_step needs h != 0")
    if force_at not in (FORCE_LEFT, FORCE_MIDPOINT):
        raise ValueError(f"force_at must be {FORCE_LEFT!r} or {FORCE_MIDPOINT!r}")
    n, k = sys.n, sys.k
    q0, p0 = state.q, state.p
    mu_left = sys.constraints(q0) if force_at == FORCE_LEFT else None

    def residual(u):
        q1, lam = u[:n], u[n:]
        v = (q1 - q0) / h
        qbar = 0.5 * (q0 + q1)
        mu_bar = sys.constraints(qbar)
        mu_f = mu_left if mu_left is not None else mu_bar
        r = np.empty(n + k)
        gv = sys.metric(qbar) @ v
        r[:n] = gv - 0.5 * h * lagrangian_dq(sys, qbar, v, gv) - p0 - h * (mu_f @ lam)
        r[n:] = mu_bar.T @ v
        return r

    guess = np.concatenate([q0 + h * (sys.metric_inv(q0) @ p0), np.zeros(k)])
    u, info = solve_implicit(residual, guess, tol, max_iter, full_output=True, workspace=workspace)
    q1 = u[:n]
    p1 = _project_momentum(sys, q1, _legendre_plus(sys, q0, q1, h))
    info.discrete_constraint = sys.constraints(0.5 * (q0 + q1)).T @ (q1 - q0) / h
    return DLAState(q1, p1), info


def dla_integrate(sys: MechanicalSystem, z0: CanonicalState, h: float, n_steps: int,
                  force_at: str = FORCE_LEFT, tol: float = 1e-12, max_iter: int = 50) -> Trajectory:
    """DLA trajectory started from (q0, p0); states are stored as (q, p) rows."""
    n = sys.n
    ws: dict = {}

    def step(x):
        st, info = dla_step(sys, DLAState.from_vector(x), h, force_at, tol, max_iter, workspace=ws)
        return st.as_vector(), info

    return march(
        step,
        np.concatenate([z0.q, z0.p]),
        h,
        n_steps,
        energy=lambda x: sys.hamiltonian(x[:n], x[n:]),
        constraint=lambda x: constraint_residual(sys, CanonicalState.from_vector(x)),
        n_q=n,
        momentum_label="p",
    )


# --------------------------------------------------------------------------
# energy-error variance over an ensemble
# --------------------------------------------------------------------------

@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(t: Array, y: Array) -> LinearFit:
    """Least-squares line through (t, y) and its coefficient of determination."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([t, np.ones_like(t)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = np.sum((y - (slope * t + intercept)) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return LinearFit(float(slope), float(intercept), float(r2))


@dataclass
class VarianceTable:
    """Ensemble variance of H(t) - H(0), divided by h^4, on a common time grid.

    ``scaled[i, j]`` belongs to h_list[i] and times[j]; ``raw`` is the
    unscaled variance.
    """

    times: Array
    h_list: Array
    scaled: Array
    raw: Array
    ensemble: int
    method: str = "dla"

    def fit(self, i: int) -> LinearFit:
        return linear_fit(self.times, self.scaled[i])

    def rows(self):
        for i, h in enumerate(self.h_list):
            for j, t in enumerate(self.times):
                yield float(t), float(h), float(self.scaled[i, j]), float(self.raw[i, j])


def _sample_indices(h: float, t_end: float, sample_every: float) -> tuple[int, Array]:
    n_steps = int(round(t_end / h))
    if not np.isclose(n_steps * h, t_end, rtol=1e-12, atol=1e-12):
        raise ValueError(f"t_end={t_end} is not a multiple of h={h}")
    stride = int(round(sample_every / h))
    if stride < 1 or not np.isclose(stride * h, sample_every, rtol=1e-12, atol=1e-12):
        raise ValueError(f"sample_every={sample_every} is not a multiple of h={h}")
    return n_steps, np.arange(0, n_steps + 1, stride)


def ensemble_variance(energy_errors: Array) -> Array:
    """Sample variance over axis 0 (ddof 1); zero for a single member."""
    energy_errors = np.asarray(energy_errors, dtype=float)
    if energy_errors.shape[0] < 2:
        return np.zeros(energy_errors.shape[1:])
    return np.var(energy_errors, axis=0, ddof=1)


def energy_variance_table(
    runner: Callable[[int, float, int], Array],
    ensemble: int,
    h_list: Sequence[float],
    t_end: float,
    sample_every: float = 1.0,
    method: str = "dla",
    mapper: Callable = map,
) -> VarianceTable:
    """Build a VarianceTable from ``runner(member, h, n_steps) -> energies``.

    ``runner`` returns H at every step (length n_steps + 1).  ``mapper`` may
    be a pool's ordered map; results are assembled by member index.
    """
    if ensemble < 1:
        raise ValueError("ensemble must be >= 1")
    h_list = np.asarray(h_list, dtype=float)
    times = None
    scaled, raw = [], []
    for h in h_list:
        n_steps, idx = _sample_indices(h, t_end, sample_every)
        t = h * idx
        if times is None:
            times = t
        elif times.shape != t.shape or not np.allclose(times, t, rtol=1e-12, atol=1e-12):
            raise ValueError("sample grids differ between step sizes")
        jobs = [(member, float(h), n_steps) for member in range(ensemble)]
        energies = list(mapper(_call_runner, [(runner,) + job for job in jobs]))
        errors = np.array([E[idx] - E[0] for E in energies])
        var = ensemble_variance(errors)
        raw.append(var)
        scaled.append(var / h ** 4)
    return VarianceTable(times, h_list, np.array(scaled), np.array(raw), ensemble, method)


def _call_runner(args):
    runner, member, h, n_steps = args
    return runner(member, h, n_steps)


def dla_energy_variance_experiment(
    sys: MechanicalSystem,
    ensemble: int,
    h_list: Sequence[float],
    t_end: float,
    seed: int,
    target_energy: Optional[float] = 3.06,
    sample_every: float = 1.0,
    force_at: str = FORCE_LEFT,
) -> VarianceTable:
    """Scaled energy-error variance of DLA over ``ensemble`` random initial states.

    Member i starts from ``sample_initial_state(sys, seed, target_energy, substream=i)``.
    """
    from .sampling import sample_initial_state

    starts = [sample_initial_state(sys, seed, target_energy, substream=i) for i in range(ensemble)]

    def runner(member, h, n_steps):
        return dla_integrate(sys, starts[member], h, n_steps, force_at).energy

    return energy_variance_table(runner, ensemble, h_list, t_end, sample_every, method="dla")
