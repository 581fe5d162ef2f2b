"""Experiment runner: integrate, order study, variance study, sleigh stability.

Configs are JSON objects; every key has a default (see ``ExperimentConfig``)
and command-line flags override file values.  Data files are CSV with floats
written as 17 significant digits and no timestamps, so identical configs give
identical bytes.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .canonical import integrate_canonical
from .discrete_gradients import AVF, GONZALEZ, ITOH_ABE, DiscreteGradientKind
from .dla import FORCE_LEFT, VarianceTable, dla_integrate, energy_variance_table
from .errors import IncompatibleMethod, NonholoError
from .reduced import MIDPOINT, StepConfig, Trajectory, dg_step, integrate
from .sampling import sample_initial_state
from .state import CanonicalState, ReducedState
from .systems import CATALOG, SystemCatalogEntry, get_system

Array = np.ndarray

REDUCED_METHODS = {"dg-avf": AVF, "dg-gonzalez": GONZALEZ, "dg-itoh-abe": ITOH_ABE}
CANONICAL_METHODS = ("gonzalez-f", "gonzalez-r", "gonzalez-r-fd", "dla")
METHODS = tuple(REDUCED_METHODS) + CANONICAL_METHODS


def fmt(x) -> str:
    """17-significant-digit decimal, enough to round-trip any double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    """One experiment.

    ``initial`` is either ``{"state": [...]}`` (the full state vector of the
    chosen method: zeta for reduced methods, (q, p) otherwise) or
    ``{"seed": int, "target_energy": float | null}``; when omitted the state is
    drawn with ``seed`` and the system's default target energy.  ``solver``
    accepts ``tol``, ``max_iter``, ``nodes``, ``pi_approx`` and ``force_at``.
    """

    system: str = "chaotic-quartic"
    params: dict = field(default_factory=dict)
    method: str = "dg-gonzalez"
    h: float = 0.05
    t_end: float = 10.0
    initial: Optional[dict] = None
    seed: int = 0
    out: Optional[str] = None
    solver: dict = field(default_factory=dict)
    # order study
    h_list: Optional[list] = None
    reference_factor: int = 20
    # variance study
    ensemble: int = 50
    sample_every: float = 1.0
    # sleigh stability
    rho2: float = -0.6
    rho1_list: list = field(default_factory=lambda: [0.001, -0.001])
    q0: list = field(default_factory=lambda: [-5.0, 0.0, 0.1])
    steps: int = 2000

    _SOLVER_KEYS = ("tol", "max_iter", "nodes", "pi_approx", "force_at")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def override(self, **kw) -> "ExperimentConfig":
        """Copy with every non-None keyword applied."""
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    def entry(self) -> SystemCatalogEntry:
        return get_system(self.system, **self.params)

    @property
    def n_steps(self) -> int:
        return steps_for(self.t_end, self.h)

    def step_config(self, h: Optional[float] = None) -> StepConfig:
        s = self.solver
        return StepConfig(
            h=self.h if h is None else h,
            dg=DiscreteGradientKind(REDUCED_METHODS.get(self.method, GONZALEZ), s.get("nodes", 4)),
            pi_approx=s.get("pi_approx", MIDPOINT),
            solver_tol=s.get("tol", 1e-12),
            max_iter=s.get("max_iter", 50),
        )

    def validate(self) -> SystemCatalogEntry:
        """Check the config and return the system entry; raises before any stepping."""
        if self.system not in CATALOG:
            raise ValueError(f"unknown system {self.system!r}; available: {', '.join(CATALOG)}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; available: {', '.join(METHODS)}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        unknown = set(self.solver) - set(self._SOLVER_KEYS)
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        entry = self.entry()
        check_compatible(entry, self.method)
        self.step_config()  # validates solver settings
        steps_for(self.t_end, self.h)
        return entry


def steps_for(t_end: float, h: float) -> int:
    n = int(round(t_end / h))
    if n < 1 or abs(n * h - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end={t_end} must be a positive multiple of h={h}")
    return n


def check_compatible(entry: SystemCatalogEntry, method: str) -> None:
    if method in REDUCED_METHODS:
        if entry.reduced is None:
            raise IncompatibleMethod(f"{entry.name} has no analytic reduced form; use a canonical method")
        return
    if entry.mechanical is None:
        raise IncompatibleMethod(f"{entry.name} has no canonical form; {method} is unavailable")
    if method.startswith("gonzalez-r") and entry.mechanical.k == 0:
        raise IncompatibleMethod(f"{method} needs at least one constraint")


# --------------------------------------------------------------------------
# initial states and single trajectories
# --------------------------------------------------------------------------

def to_method_state(entry: SystemCatalogEntry, method: str, state) -> Array:
    """State vector in the coordinates the method integrates."""
    if isinstance(state, ReducedState):
        if method not in REDUCED_METHODS:
            raise IncompatibleMethod("a reduced state needs a reduced method")
        return state.as_vector()
    if method in REDUCED_METHODS:
        if entry.hand_basis is None:
            raise IncompatibleMethod(f"{entry.name} has no hand basis to map (q, p) to (q, rho)")
        X = entry.hand_basis(state.q).X
        return np.concatenate([state.q, X.T @ state.p])
    return state.as_vector()


def initial_state(config: ExperimentConfig, entry: SystemCatalogEntry, substream: int = 0) -> Array:
    init = config.initial or {}
    if "state" in init:
        x = np.asarray(init["state"], dtype=float)
        expected = entry.reduced.N if config.method in REDUCED_METHODS else 2 * entry.mechanical.n
        if x.shape != (expected,):
            raise ValueError(f"initial state must have {expected} entries for {config.method}")
        return x
    seed = init.get("seed", config.seed)
    target = init.get("target_energy", entry.target_energy)
    state = sample_initial_state(entry, seed, target, substream=substream)
    return to_method_state(entry, config.method, state)


def simulate(entry: SystemCatalogEntry, method: str, x0: Array, h: float, n_steps: int,
             config: Optional[ExperimentConfig] = None) -> Trajectory:
    """Run ``method`` from the state vector x0 (coordinates as in to_method_state)."""
    config = config or ExperimentConfig(system=entry.name, method=method)
    cfg = dataclasses.replace(config, method=method).step_config(h)
    if method in REDUCED_METHODS:
        return integrate(entry.reduced, x0, cfg, n_steps)
    sys = entry.mechanical
    if method == "dla":
        s = config.solver
        return dla_integrate(sys, CanonicalState.from_vector(x0), h, n_steps,
                             s.get("force_at", FORCE_LEFT), cfg.solver_tol, cfg.max_iter)
    return integrate_canonical(sys, CanonicalState.from_vector(x0), cfg, n_steps, method)


def header(entry: SystemCatalogEntry, method: str, traj: Trajectory) -> list[str]:
    n_q = traj.n_q
    n_mom = traj.states.shape[1] - n_q
    label = traj.momentum_label
    cols = ["t"] + [f"q{i + 1}" for i in range(n_q)] + [f"{label}{i + 1}" for i in range(n_mom)]
    cols += ["H", "rel_energy_err"]
    cols += [f"constraint_res_{i + 1}" for i in range(_constraint_columns(traj).shape[1])]
    return cols + ["solver_iters"]


def _constraint_columns(traj: Trajectory) -> Array:
    # pointwise residual when the method has momenta p, else the discrete identity
    if traj.constraint is not None:
        return traj.constraint
    if traj.discrete_constraint is not None:
        return traj.discrete_constraint
    return np.zeros((traj.states.shape[0], 0))


def write_trajectory_csv(path, entry: SystemCatalogEntry, method: str, traj: Trajectory) -> None:
    cons = _constraint_columns(traj)
    rel = traj.rel_energy_error
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header(entry, method, traj))
        for i in range(len(traj.times)):
            row = [fmt(traj.times[i])] + [fmt(v) for v in traj.states[i]]
            row += [fmt(traj.energy[i]), fmt(rel[i])] + [fmt(v) for v in cons[i]]
            row.append(str(int(traj.iterations[i])))
            w.writerow(row)


def error_report_path(out) -> Path:
    return Path(str(out) + ".error.json")


def _write_error(out, config: ExperimentConfig, exc: Exception) -> Path:
    report = {
        "error": type(exc).__name__,
        "message": str(exc),
        "step": getattr(exc, "step", None),
        "residual": _jsonable(getattr(exc, "residual", None)),
        "config": config.to_dict(),
    }
    path = error_report_path(out)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _jsonable(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else str(x)


def run_integrate(config: ExperimentConfig) -> Trajectory:
    """Integrate one trajectory and write it to ``config.out`` (if set).

    On a solver failure an error report ``<out>.error.json`` is written and
    the exception re-raised.
    """
    entry = config.validate()
    x0 = initial_state(config, entry)
    try:
        traj = simulate(entry, config.method, x0, config.h, config.n_steps, config)
    except NonholoError as exc:
        if config.out:
            _write_error(config.out, config, exc)
        raise
    if config.out:
        write_trajectory_csv(config.out, entry, config.method, traj)
    return traj


# --------------------------------------------------------------------------
# order study
# --------------------------------------------------------------------------

DEGENERATE_ERROR = 1e-10


@dataclass
class OrderStudyResult:
    h: Array
    errors: Array
    slope: float
    degenerate: bool
    h_ref: float


def run_order_study(config: ExperimentConfig, h_list: Optional[Sequence[float]] = None,
                    reference_factor: Optional[int] = None) -> OrderStudyResult:
    """Global error at t_end against a reference run with h_ref = min(h)/reference_factor.

    The slope of log(error) against log(h) is a least-squares fit.  When all
    errors are at round-off level (relative 1e-10) the slope is meaningless;
    it is then reported as NaN and ``degenerate`` is set.
    """
    h_list = h_list if h_list is not None else config.h_list
    if h_list is None:
        h_list = [0.1, 0.05, 0.025, 0.0125]
    h_list = np.asarray(sorted(h_list, reverse=True), dtype=float)
    if h_list.size < 3:
        raise ValueError("an order study needs at least 3 step sizes")
    factor = int(reference_factor or config.reference_factor)
    if factor < 1:
        raise ValueError("reference_factor must be >= 1")
    entry = dataclasses.replace(config, h=float(h_list[0])).validate()
    for h in h_list:
        steps_for(config.t_end, h)
    x0 = initial_state(config, entry)
    h_ref = float(h_list.min()) / factor
    try:
        ref = simulate(entry, config.method, x0, h_ref, steps_for(config.t_end, h_ref), config).states[-1]
        errors = []
        for h in h_list:
            end = simulate(entry, config.method, x0, h, steps_for(config.t_end, h), config).states[-1]
            errors.append(np.max(np.abs(end - ref)))
    except NonholoError as exc:
        if config.out:
            _write_error(config.out, config, exc)
        raise
    errors = np.array(errors)
    degenerate = bool(np.all(errors <= DEGENERATE_ERROR * (1.0 + np.max(np.abs(ref)))))
    slope = float("nan") if degenerate else float(np.polyfit(np.log(h_list), np.log(errors), 1)[0])
    result = OrderStudyResult(h_list, errors, slope, degenerate, h_ref)
    if config.out:
        with open(config.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["h", "global_error", "slope", "degenerate"])
            for h, e in zip(h_list, errors):
                w.writerow([fmt(h), fmt(e), fmt(slope), int(degenerate)])
    return result


# --------------------------------------------------------------------------
# variance study
# --------------------------------------------------------------------------

def _member_energy(config_dict: dict, member: int, h: float, n_steps: int) -> Array:
    # module level so that worker processes can unpickle it
    config = ExperimentConfig.from_dict(config_dict)
    entry = config.entry()
    x0 = initial_state(config, entry, substream=member)
    return simulate(entry, config.method, x0, h, n_steps, config).energy


def worker_count(ensemble: int) -> int:
    env = os.environ.get("NONHOLO_THREADS")
    cap = os.cpu_count() or 1
    if env:
        cap = max(1, int(env))
    return max(1, min(cap, ensemble))


def run_variance_study(config: ExperimentConfig, ensemble: Optional[int] = None,
                       h_list: Optional[Sequence[float]] = None,
                       seed: Optional[int] = None) -> VarianceTable:
    """Ensemble variance of H(t) - H(0) scaled by h^4, sampled every ``sample_every``.

    Member i starts from substream i of ``seed``.  Members run in up to
    NONHOLO_THREADS processes; the table is assembled in member order, so
    the result does not depend on scheduling.
    """
    config = config.override(ensemble=ensemble, seed=seed)
    if h_list is None:
        h_list = config.h_list or [0.1, 0.05]
    if config.ensemble < 2:
        raise ValueError("a variance study needs an ensemble of at least 2")
    config.validate()
    for h in h_list:
        steps_for(config.t_end, h)
    if config.initial and "state" in config.initial:
        raise ValueError("a variance study samples its initial states; drop initial.state")
    runner = functools.partial(_member_energy, config.to_dict())
    workers = worker_count(config.ensemble)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            table = energy_variance_table(runner, config.ensemble, h_list, config.t_end,
                                          config.sample_every, config.method, mapper=pool.map)
    else:
        table = energy_variance_table(runner, config.ensemble, h_list, config.t_end,
                                      config.sample_every, config.method)
    if config.out:
        with open(config.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "h", "scaled_variance", "variance"])
            for t, h, s, v in table.rows():
                w.writerow([fmt(t), fmt(h), fmt(s), fmt(v)])
    return table


def variance_summary(table: VarianceTable) -> list[dict]:
    out = []
    for i, h in enumerate(table.h_list):
        fit = table.fit(i)
        out.append(dict(h=float(h), slope=fit.slope, r2=fit.r2,
                        max_variance=float(np.max(table.raw[i]))))
    return out


# --------------------------------------------------------------------------
# Chaplygin sleigh stability
# --------------------------------------------------------------------------

def sleigh_step_bound(J: float, a: float, m: float, rho2: float) -> float:
    """Largest stable step |2 (J + m a^2) / (a sqrt(m) rho2)| (inf if a or rho2 vanish)."""
    c = a * np.sqrt(m) * rho2
    return float("inf") if c == 0 else abs(2.0 * (J + m * a * a) / c)


def sleigh_lambda1(J: float, a: float, m: float, h: float, rho2: float) -> float:
    """Eigenvalue of the linearized step map transverse to the equilibria rho1 = 0."""
    I2 = 2.0 * (J + m * a * a)
    c = h * a * np.sqrt(m) * rho2
    return (I2 - c) / (I2 + c)


@dataclass
class SleighRun:
    rho1_init: float
    trajectory: Trajectory
    final_rho: Array
    converged: bool


@dataclass
class SleighReport:
    J: float
    a: float
    m: float
    h: float
    rho2: float
    bound: float
    bound_ok: bool
    lambda1: float
    lambda1_numeric: float
    runs: list

    def to_dict(self) -> dict:
        d = {k: v for k, v in dataclasses.asdict(self).items() if k != "runs"}
        d["bound"] = _jsonable(self.bound)
        d["runs"] = [dict(rho1_init=r.rho1_init, final_rho1=float(r.final_rho[0]),
                          final_rho2=float(r.final_rho[1]), converged=r.converged) for r in self.runs]
        return d


CONVERGED_RHO1 = 1e-8


def run_sleigh_stability(J: float = 8.0, a: float = 1.0, m: float = 1.0, h: float = 0.5,
                         rho2: float = -0.6, rho1_list: Sequence[float] = (0.001, -0.001),
                         steps: int = 2000, q0: Sequence[float] = (-5.0, 0.0, 0.1),
                         method: str = "dg-gonzalez", out: Optional[str] = None,
                         solver: Optional[dict] = None) -> SleighReport:
    """Integrate the reduced sleigh from each rho1 in ``rho1_list`` and report stability.

    A run counts as converged to the stable branch when the final |rho1| is
    below 1e-8 and the final rho2 is positive.  ``lambda1_numeric`` is the
    derivative of the rho1 component of one step map with respect to rho1 at
    the equilibrium (rho1, rho2) = (0, rho2), by central differences.
    """
    if method not in REDUCED_METHODS:
        raise IncompatibleMethod("sleigh stability uses the reduced sleigh; pick a dg-* method")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    entry = get_system("chaplygin-sleigh", m=m, a=a, J=J)
    config = ExperimentConfig(system=entry.name, params=entry.params, method=method, h=h,
                              solver=dict(solver or {}))
    bound = sleigh_step_bound(J, a, m, rho2)
    bound_ok = h < bound
    if not bound_ok:
        warnings.warn(f"h={h} violates the stability bound h < {bound:.6g}", RuntimeWarning)
    lam = sleigh_lambda1(J, a, m, h, rho2)

    cfg = config.step_config(h)
    eq = np.concatenate([np.asarray(q0, dtype=float), [0.0, rho2]])
    d = 1e-6
    plus, _ = dg_step(entry.reduced, eq + d * np.eye(5)[3], cfg)
    minus, _ = dg_step(entry.reduced, eq - d * np.eye(5)[3], cfg)
    lam_num = float((plus[3] - minus[3]) / (2 * d))

    runs = []
    for r1 in rho1_list:
        x0 = np.concatenate([np.asarray(q0, dtype=float), [r1, rho2]])
        traj = simulate(entry, method, x0, h, steps, config)
        final = traj.states[-1, 3:]
        runs.append(SleighRun(float(r1), traj, final,
                              bool(abs(final[0]) <= CONVERGED_RHO1 and final[1] > 0)))
    report = SleighReport(float(J), float(a), float(m), float(h), float(rho2), bound, bool(bound_ok),
                          float(lam), lam_num, runs)
    if out:
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "rho1_init", "t", "x1", "x2", "theta", "rho1", "rho2", "H"])
            for k, run in enumerate(runs):
                tr = run.trajectory
                for i in range(len(tr.times)):
                    w.writerow([k, fmt(run.rho1_init), fmt(tr.times[i])]
                               + [fmt(v) for v in tr.states[i]] + [fmt(tr.energy[i])])
        with open(str(out) + ".report.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


__all__ = [
    "ExperimentConfig", "METHODS", "REDUCED_METHODS", "CANONICAL_METHODS",
    "run_integrate", "run_order_study", "run_variance_study", "run_sleigh_stability",
    "simulate", "initial_state", "check_compatible", "sleigh_lambda1", "sleigh_step_bound",
    "variance_summary", "OrderStudyResult", "SleighReport", "fmt",
]
