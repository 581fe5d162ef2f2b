"""Reproducible random initial states.

Streams come from numpy's Philox4x64 bit generator (a counter-based PRNG)
seeded through ``SeedSequence(seed, spawn_key=(substream,))``.  Philox output
depends only on key and counter, so a given (seed, substream) yields the same
numbers on every platform; ensemble member i always uses substream i and
never depends on how many other members run or in what order.
"""
from __future__ import annotations

from typing import Optional, Union

import numpy as np

from .errors import NonholoError
from .qrdiff import basis_from_constraints
from .state import CanonicalState, MechanicalSystem, ReducedState, p_from_rho

Array = np.ndarray

MAX_RESAMPLES = 100


class InfeasibleEnergy(NonholoError):
    pass


class SeededSampler:
    """Factory for independent Philox substreams under one 64-bit seed."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed

    def generator(self, substream: int = 0) -> np.random.Generator:
        if substream < 0:
            raise ValueError("substream must be >= 0")
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(substream),))
        return np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"SeededSampler(seed={self.seed})"


def uniform_direction(rng: np.random.Generator, m: int) -> Array:
    """Uniform point on the unit sphere in R^m."""
    while True:
        u = rng.standard_normal(m)
        nu = np.linalg.norm(u)
        if nu > 1e-12:
            return u / nu


def _scale_to_energy(energy, base, target):
    # H(c * base) = c^2 K + V with K the energy of the unit direction above V
    V = energy(0.0)
    K = energy(1.0) - V
    if target is None:
        return 1.0 / np.sqrt(K)
    if target < V:
        return None
    c = np.sqrt((target - V) / K)
    # one correction step absorbs rounding in K
    if c > 0:
        Hc = energy(c)
        if Hc != V:
            c *= np.sqrt((target - V) / (Hc - V))
    return c


def sample_initial_state(system, seed: int, target_energy: Optional[float] = None,
                         substream: int = 0) -> Union[CanonicalState, ReducedState]:
    """Random constrained initial state with prescribed energy.

    ``system`` is a MechanicalSystem or a catalog entry.  q is uniform on
    [-1, 1]^n; the reduced momentum direction is uniform on the sphere in the
    orthonormal QR basis of D_q; the momentum is then scaled so that
    H = target_energy (or kinetic energy 1 when no target is given).  q is
    resampled when the target lies below V(q).

    A catalog entry without a canonical form (pure-momentum systems) gives a
    ReducedState with an empty q block.
    """
    rng = SeededSampler(seed).generator(substream)
    mech = getattr(system, "mechanical", system)
    if mech is None:
        return _sample_pure_momentum(system.reduced, rng, target_energy)
    if not isinstance(mech, MechanicalSystem):
        raise TypeError("system must be a MechanicalSystem or a catalog entry")

    for _ in range(MAX_RESAMPLES):
        q = rng.uniform(-1.0, 1.0, mech.n)
        basis = basis_from_constraints(mech, q, derivatives=False) if mech.k > 0 else None
        if basis is None:
            p_unit = np.linalg.cholesky(mech.metric(q)) @ uniform_direction(rng, mech.n)
        else:
            u = uniform_direction(rng, basis.m)
            p_unit = p_from_rho(mech, basis, ReducedState(q, u)).p
        c = _scale_to_energy(lambda c: mech.hamiltonian(q, c * p_unit), p_unit, target_energy)
        if c is not None:
            return CanonicalState(q, c * p_unit)
    raise InfeasibleEnergy(f"target energy {target_energy} below V(q) after {MAX_RESAMPLES} samples")


def _sample_pure_momentum(red, rng, target_energy) -> ReducedState:
    if red is None or red.n_q != 0:
        raise TypeError("catalog entry has neither a canonical nor a pure-momentum form")
    u = uniform_direction(rng, red.N)
    c = _scale_to_energy(lambda c: red.hamiltonian(c * u), u, target_energy)
    if c is None:
        raise InfeasibleEnergy(f"target energy {target_energy} below the minimum of H")
    return ReducedState(np.zeros(0), c * u)
