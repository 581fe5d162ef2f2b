import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from nonholo.discrete_gradients import (
    AVF,
    GONZALEZ,
    ITOH_ABE,
    DiscreteGradientKind,
    ScalarField,
    avf_gradient,
    discrete_gradient,
    gonzalez_gradient,
    itoh_abe_gradient,
    verify_discrete_gradient,
)

CUBIC = ScalarField(lambda x: x[0] ** 3, lambda x: np.array([3.0 * x[0] ** 2]))
PRODUCT = ScalarField(lambda x: x[0] * x[1], lambda x: np.array([x[1], x[0]]))

# fixed quartic H = sum c x^4 + x^T A x / 2 + b^T x
_C = np.array([0.3, 0.7, 0.5, 0.9])
_A = np.array([[2.0, 0.3, 0.0, 0.1], [0.3, 1.5, 0.2, 0.0], [0.0, 0.2, 1.0, 0.4], [0.1, 0.0, 0.4, 3.0]])
_B = np.array([0.5, -1.0, 0.25, 0.0])
QUARTIC = ScalarField(lambda x: np.sum(_C * x ** 4) + 0.5 * x @ _A @ x + _B @ x,
                      lambda x: 4.0 * _C * x ** 3 + _A @ x + _B)

points = arrays(np.float64, 4, elements=st.floats(-3.0, 3.0, allow_nan=False))


def test_cubic_gonzalez_and_avf_equal_mean_value():
    x, xp = np.array([1.0]), np.array([2.0])
    # (2^3 - 1^3) / (2 - 1) = 7
    assert_allclose(gonzalez_gradient(CUBIC, x, xp), [7.0], rtol=1e-15)
    assert_allclose(avf_gradient(CUBIC, x, xp), [7.0], rtol=1e-15)
    assert_allclose(itoh_abe_gradient(CUBIC, x, xp), [7.0], rtol=1e-15)


def test_cubic_coincident_points_give_exact_gradient():
    x = np.array([1.5])
    for tag in (AVF, GONZALEZ, ITOH_ABE):
        assert_allclose(discrete_gradient(DiscreteGradientKind(tag), CUBIC, x, x.copy()), [6.75], rtol=1e-15)


def test_itoh_abe_product_by_hand():
    x, xp = np.array([1.0, 2.0]), np.array([3.0, 5.0])
    # first coordinate: (3*2 - 1*2)/2 = 2; second: (3*5 - 3*2)/3 = 3
    assert_allclose(itoh_abe_gradient(PRODUCT, x, xp), [2.0, 3.0], rtol=1e-15)
    # Gonzalez on a quadratic is the midpoint gradient
    assert_allclose(gonzalez_gradient(PRODUCT, x, xp), [3.5, 2.0], rtol=1e-15)


def test_itoh_abe_is_not_symmetric():
    x, xp = np.array([1.0, 2.0]), np.array([3.0, 5.0])
    fwd = itoh_abe_gradient(PRODUCT, x, xp)
    bwd = itoh_abe_gradient(PRODUCT, xp, x)
    assert np.max(np.abs(fwd - bwd)) > 0.5


def test_avf_single_node_misses_the_secant_identity():
    x, xp = np.array([0.2, -1.0, 0.4, 1.1]), np.array([1.3, 0.6, -0.8, 2.0])
    d = xp - x
    g1 = avf_gradient(QUARTIC, x, xp, nodes=1)
    assert abs(g1 @ d - (QUARTIC.value(xp) - QUARTIC.value(x))) > 1e-3
    g4 = avf_gradient(QUARTIC, x, xp, nodes=4)
    assert abs(g4 @ d - (QUARTIC.value(xp) - QUARTIC.value(x))) <= 1e-12 * (1 + abs(QUARTIC.value(xp)))


@pytest.mark.parametrize("tag", [AVF, GONZALEZ, ITOH_ABE])
@settings(max_examples=200, deadline=None)
@given(x=points, xp=points)
def test_secant_identity_property(tag, x, xp):
    g = discrete_gradient(DiscreteGradientKind(tag), QUARTIC, x, xp)
    d = xp - x
    lhs, rhs = g @ d, QUARTIC.value(xp) - QUARTIC.value(x)
    scale = 1.0 + abs(QUARTIC.value(x)) + abs(QUARTIC.value(xp)) + np.linalg.norm(g) * np.linalg.norm(d)
    assert abs(lhs - rhs) <= 1e-12 * scale


@pytest.mark.parametrize("tag", [AVF, GONZALEZ])
@settings(max_examples=100, deadline=None)
@given(x=points, xp=points)
def test_symmetry_property(tag, x, xp):
    kind = DiscreteGradientKind(tag)
    a, b = discrete_gradient(kind, QUARTIC, x, xp), discrete_gradient(kind, QUARTIC, xp, x)
    assert np.max(np.abs(a - b)) <= 1e-12 * (1.0 + np.max(np.abs(a)))


@pytest.mark.parametrize("tag", [AVF, GONZALEZ, ITOH_ABE])
def test_consistency_as_points_merge(tag, rng):
    kind = DiscreteGradientKind(tag)
    x = rng.normal(size=4)
    exact = QUARTIC.gradient(x)
    d = rng.normal(size=4)
    errs = [np.max(np.abs(discrete_gradient(kind, QUARTIC, x, x + eps * d) - exact)) for eps in (1e-2, 1e-3, 1e-4)]
    # first order or better, and exact at coincidence
    assert errs[1] < 0.2 * errs[0] and errs[2] < 0.2 * errs[1]
    assert_allclose(discrete_gradient(kind, QUARTIC, x, x.copy()), exact, rtol=1e-14, atol=1e-14)


def test_verify_report(rng):
    pairs = [(rng.normal(size=4), rng.normal(size=4)) for _ in range(50)]
    for tag in (AVF, GONZALEZ, ITOH_ABE):
        rep = verify_discrete_gradient(DiscreteGradientKind(tag), QUARTIC, pairs)
        assert rep.pairs == 50 and rep.ok()
    bad = verify_discrete_gradient(DiscreteGradientKind(AVF, nodes=1), QUARTIC, pairs)
    assert not bad.ok()


def test_kind_validation():
    with pytest.raises(ValueError):
        DiscreteGradientKind("midpoint")
    with pytest.raises(ValueError):
        DiscreteGradientKind(AVF, nodes=0)
