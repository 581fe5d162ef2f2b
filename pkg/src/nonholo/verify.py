"""Invariant suites run by ``nonholo verify``.

Each check evaluates a worst-case violation over random samples and compares
it with a tolerance.  Everything is seeded, so reruns give the same numbers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .canonical import reduced_quantities
from .discrete_gradients import (
    AVF,
    GONZALEZ,
    ITOH_ABE,
    DiscreteGradientKind,
    ScalarField,
    discrete_gradient,
    verify_discrete_gradient,
)
from .qrdiff import basis_from_constraints, qr_diff
from .reduced import rhs
from .state import (
    ReducedState,
    central_difference,
    constraint_residual,
    p_from_rho,
    rho_from_p,
)
from .systems import CATALOG, get_system

Array = np.ndarray


@dataclass
class CheckResult:
    suite: str
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.suite:<18} {self.name:<44} {self.value:.3e} <= {self.tol:.1e}"


def quartic_field(rng: np.random.Generator, N: int) -> ScalarField:
    """H(x) = sum_i c_i x_i^4 + x^T A x / 2 + b^T x with random coefficients."""
    c = rng.uniform(0.1, 1.0, N)
    B = rng.normal(size=(N, N))
    A = B @ B.T
    b = rng.normal(size=N)
    return ScalarField(lambda x: np.sum(c * x ** 4) + 0.5 * x @ A @ x + b @ x,
                       lambda x: 4.0 * c * x ** 3 + A @ x + b)


def random_state(entry, rng: np.random.Generator) -> Array:
    """Random zeta for a catalog entry's reduced form: q uniform, momenta normal."""
    red = entry.reduced
    return np.concatenate([rng.uniform(-1.0, 1.0, red.n_q), rng.normal(size=red.N - red.n_q)])


def suite_discrete_gradients(rng, samples: int = 200) -> list[CheckResult]:
    out = []
    N = 5
    H = quartic_field(rng, N)
    pairs = [(rng.normal(size=N), rng.normal(size=N)) for _ in range(samples)]
    for tag in (GONZALEZ, ITOH_ABE, AVF):
        rep = verify_discrete_gradient(DiscreteGradientKind(tag), H, pairs)
        out.append(CheckResult("discrete-gradient", f"{tag}: secant identity", rep.max_secant_violation, 1e-12))
        out.append(CheckResult("discrete-gradient", f"{tag}: consistency", rep.max_consistency_violation, 1e-12))
    for tag in (GONZALEZ, AVF):
        kind = DiscreteGradientKind(tag)
        worst = 0.0
        for x, xp in pairs[:50]:
            a, b = discrete_gradient(kind, H, x, xp), discrete_gradient(kind, H, xp, x)
            worst = max(worst, np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(a))))
        out.append(CheckResult("discrete-gradient", f"{tag}: symmetry", worst, 1e-12))
    return out


def suite_qr_diff(rng, samples: int = 200) -> list[CheckResult]:
    orth = fact = dorth = lin = 0.0
    for _ in range(samples):
        n = int(rng.integers(2, 11))
        k = int(rng.integers(1, n))
        A = rng.normal(size=(n, k))
        dA = rng.normal(size=(n, k, n))
        o = qr_diff(A, dA)
        orth = max(orth, np.max(np.abs(o.Q.T @ o.Q - np.eye(n))))
        fact = max(fact, np.max(np.abs(o.Q[:, :k] @ o.R[:k] - A)) / np.max(np.abs(A)))
        for i in range(n):
            dQi = o.dQ[:, :, i]
            dorth = max(dorth, np.max(np.abs(dQi.T @ o.Q + o.Q.T @ dQi)))
        o2 = qr_diff(A, 3.0 * dA, o.s)
        lin = max(lin, np.max(np.abs(o2.dQ - 3.0 * o.dQ)) / (1.0 + np.max(np.abs(o.dQ))))
    return [
        CheckResult("qr-diff", "Q^T Q = I", orth, 1e-12),
        CheckResult("qr-diff", "Q R = A (relative)", fact, 1e-12),
        CheckResult("qr-diff", "differentiated orthogonality", dorth, 1e-10),
        CheckResult("qr-diff", "linearity in dA", lin, 1e-12),
    ]


def suite_systems(rng, samples: int = 20) -> list[CheckResult]:
    out = []
    for name in CATALOG:
        entry = get_system(name)
        sys = entry.mechanical
        if sys is not None:
            inv = dinv = mu_rank = chol = dmu = 0.0
            for _ in range(samples):
                q = rng.uniform(-1.0, 1.0, sys.n)
                g = sys.metric(q)
                try:
                    np.linalg.cholesky(g)
                except np.linalg.LinAlgError:
                    chol = np.inf
                inv = max(inv, np.max(np.abs(g @ sys.metric_inv(q) - np.eye(sys.n))))
                fd = central_difference(sys.metric_inv, q)
                dinv = max(dinv, np.max(np.abs(fd - sys.metric_inv_deriv(q))))
                fd = central_difference(sys.constraints, q)
                dmu = max(dmu, np.max(np.abs(fd - sys.constraints_deriv(q))))
                sv = np.linalg.svd(sys.constraints(q), compute_uv=False)
                mu_rank = max(mu_rank, sv[0] / sv[-1])
            out += [
                CheckResult("systems", f"{name}: metric Cholesky", chol, 0.0),
                CheckResult("systems", f"{name}: g g^-1 = I", inv, 1e-12),
                CheckResult("systems", f"{name}: dg^-1 vs finite differences", dinv, 1e-7),
                CheckResult("systems", f"{name}: dmu vs finite differences", dmu, 1e-7),
                CheckResult("systems", f"{name}: constraint condition number", mu_rank, 1e8),
            ]
        if entry.reduced is not None:
            skew = first = 0.0
            for _ in range(samples):
                z = random_state(entry, rng)
                P = entry.reduced.pi(z)
                skew = max(skew, np.max(np.abs(P + P.T)) / max(np.max(np.abs(P)), 1e-300))
                gH = entry.reduced.gradient(z)
                first = max(first, abs(gH @ rhs(entry.reduced, z)) / (1.0 + gH @ gH))
            out += [
                CheckResult("systems", f"{name}: Pi skew-symmetric", skew, 1e-12),
                CheckResult("systems", f"{name}: grad H . rhs = 0", first, 1e-13),
            ]
    return out


def suite_cross_validation(rng, samples: int = 20) -> list[CheckResult]:
    """Analytic reduced rhs against the one assembled from canonical data (hand basis)."""
    out = []
    for name in ("rolling-disk", "chaotic-quartic", "chaplygin-sleigh"):
        entry = get_system(name)
        worst = 0.0
        for _ in range(samples):
            z = random_state(entry, rng)
            q, rho = z[: entry.reduced.n_q], z[entry.reduced.n_q:]
            rq = reduced_quantities(entry.mechanical, entry.hand_basis(q), ReducedState(q, rho))
            a = rhs(entry.reduced, z)
            worst = max(worst, np.max(np.abs(rq.pi @ rq.gradient - a)) / (1.0 + np.max(np.abs(a))))
        out.append(CheckResult("cross-validation", f"{name}: analytic vs assembled rhs", worst, 1e-10))
    return out


def suite_transforms(rng, samples: int = 20) -> list[CheckResult]:
    out = []
    for name in ("rolling-disk", "chaotic-quartic", "chaplygin-sleigh", "gearbox-pendulum"):
        sys = get_system(name).mechanical
        cres = trip = 0.0
        for _ in range(samples):
            q = rng.uniform(-1.0, 1.0, sys.n)
            basis = basis_from_constraints(sys, q, derivatives=False)
            rho = rng.normal(size=basis.m)
            z = p_from_rho(sys, basis, ReducedState(q, rho))
            cres = max(cres, np.max(np.abs(constraint_residual(sys, z))))
            trip = max(trip, np.max(np.abs(rho_from_p(sys, basis, z).rho - rho)) / (1.0 + np.max(np.abs(rho))))
        out += [
            CheckResult("transforms", f"{name}: constraint residual of p(rho)", cres, 1e-10),
            CheckResult("transforms", f"{name}: rho(p(rho)) = rho", trip, 1e-12),
        ]
    return out


SUITES: dict[str, Callable] = {
    "discrete-gradient": suite_discrete_gradients,
    "qr-diff": suite_qr_diff,
    "systems": suite_systems,
    "cross-validation": suite_cross_validation,
    "transforms": suite_transforms,
}


def run_suites(names=None, seed: int = 0) -> list[CheckResult]:
    names = list(SUITES) if not names else list(names)
    results = []
    for i, name in enumerate(names):
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; available: {', '.join(SUITES)}")
        rng = np.random.default_rng([seed, i])
        results += SUITES[name](rng)
    return results


__all__ = ["CheckResult", "SUITES", "run_suites"]
