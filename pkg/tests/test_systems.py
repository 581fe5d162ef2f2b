import numpy as np
import pytest
from numpy.testing import assert_allclose

from nonholo.reduced import rhs
from nonholo.systems import CATALOG, gearbox_potential, get_system, sleigh_coupling


def test_catalog_names():
    assert set(CATALOG) == {"rolling-disk", "chaotic-quartic", "chaplygin-sleigh", "suslov", "gearbox-pendulum"}
    with pytest.raises(KeyError):
        get_system("double-pendulum")


@pytest.mark.parametrize("name,params", [
    ("rolling-disk", dict(m=-1.0)),
    ("chaplygin-sleigh", dict(J=0.0)),
    ("chaotic-quartic", dict(n_param=0)),
    ("suslov", dict(I11=0.0)),
    ("gearbox-pendulum", dict(potential_sign=2.0)),
])
def test_bad_parameters(name, params):
    with pytest.raises(ValueError):
        get_system(name, **params)


def test_gearbox_potential_values():
    assert gearbox_potential(np.zeros(3)) == 1.0
    assert_allclose(gearbox_potential(np.array([1.0, 2.0, np.pi / 4])), 2.5 + np.sqrt(0.5) - 0.2, rtol=1e-15)
    gear = get_system("gearbox-pendulum")
    assert gear.mechanical.potential(np.zeros(3)) == 1.0
    flipped = get_system("gearbox-pendulum", potential_sign=-1)
    assert flipped.mechanical.potential(np.zeros(3)) == -1.0
    assert gear.reduced is None


def test_chaotic_potential_by_hand(chaotic):
    q = np.array([1.0, 0.5, -1.0, 2.0, 0.2, 1.0, -0.5])
    v = 0.5 * (q @ q + 0.25 * 0.04 + 1.0 + 4.0 * 0.25 + 0.04 * 1.0)
    assert_allclose(chaotic.mechanical.potential(q), v, rtol=1e-15)
    assert chaotic.target_energy == 3.06


def test_chaotic_single_parameter_has_no_cross_term():
    c = get_system("chaotic-quartic", n_param=1)
    q = np.array([0.0, 1.0, 2.0])
    assert_allclose(c.mechanical.potential(q), 0.5 * (5.0 + 4.0), rtol=1e-15)
    assert c.reduced.N == 5


def test_sleigh_coupling_value():
    assert sleigh_coupling(1.0, 1.0, 8.0) == pytest.approx(1.0 / 9.0, rel=1e-15)
    assert sleigh_coupling(2.0, 0.0, 1.0) == 0.0


def test_suslov_rhs_by_hand():
    sus = get_system("suslov")
    rho = np.array([1.0, 2.0])
    # c = I13/I11 rho1 + I23/I22 rho2 = 0.1 + 0.2
    c = 0.3
    grad = np.array([1.0, 1.0])
    assert_allclose(rhs(sus.reduced, rho), [-c * grad[1], c * grad[0]], rtol=1e-15)
    assert sus.mechanical is None and sus.reduced.n_q == 0


@pytest.mark.parametrize("name", ["rolling-disk", "chaotic-quartic", "chaplygin-sleigh"])
def test_reduced_momenta_are_consistent_with_hand_basis(name, rng):
    from nonholo.state import CanonicalState, rho_from_p, p_from_rho, ReducedState
    e = get_system(name)
    red = e.reduced
    q = rng.uniform(-1, 1, red.n_q)
    rho = rng.normal(size=red.N - red.n_q)
    z = p_from_rho(e.mechanical, e.hand_basis(q), ReducedState(q, rho))
    # reduced H equals canonical H at the reconstructed momentum
    assert_allclose(red.hamiltonian(np.concatenate([q, rho])), e.mechanical.hamiltonian(z.q, z.p), rtol=1e-13)
    assert_allclose(rho_from_p(e.mechanical, e.hand_basis(q), CanonicalState(q, z.p)).rho, rho, atol=1e-12)
