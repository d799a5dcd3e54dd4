import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sp_integrate

from gfk.calculus import Box
from gfk.diffeo import Diffeo, push_test_function
from gfk.distributions import (Delta, DomainError, Heaviside, PointMass, PrincipalValueInvX, Regular,
                               RegularOnManifold, heaviside_on, lie_derivative_dist, local_rep_dist,
                               multiply_dist, pullback_dist)
from gfk.manifold import (circle, cosine, density_form, interval, sine, trig_field)
from gfk.mollifier import build_mollifier, scale_translate

PHI = build_mollifier(1, 3, 0.8)


def shifted(x0, eps=1.0, phi=PHI):
    return scale_translate(phi, eps, np.array([x0]))


def quad(f, a, b, **kw):
    return sp_integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400, **kw)[0]


def phi_scalar(test):
    return lambda t: float(test(np.array([[t]]))[0])


@given(st.floats(-0.5, 0.5), st.floats(0.3, 1.5))
def test_delta_evaluates(x0, weight):
    test = shifted(x0)
    assert Delta(0.1, weight).pair(test) == pytest.approx(weight * test(np.array([[0.1]]))[0], abs=1e-14)


@given(st.floats(-0.6, 0.6))
def test_heaviside_matches_quadrature_oracle(x0):
    test = shifted(x0)
    ref = quad(phi_scalar(test), max(0.0, x0 - 0.8), max(0.0, x0 + 0.8)) if x0 + 0.8 > 0 else 0.0
    assert Heaviside(0.0).pair(test) == pytest.approx(ref, abs=1e-11)


@given(st.floats(-0.5, 0.5))
def test_principal_value_matches_cauchy_weight_oracle(x0):
    test = shifted(x0)
    ref = quad(phi_scalar(test), x0 - 0.8, x0 + 0.8, weight="cauchy", wvar=0.0)
    assert PrincipalValueInvX().pair(test) == pytest.approx(ref, abs=1e-9)


def test_regular_distribution_with_breakpoint():
    u = Regular(lambda x: np.abs(x[:, 0]), 1, (0.0,))
    test = shifted(0.2)
    ref = quad(lambda t: abs(t) * phi_scalar(test)(t), -0.6, 1.0, points=[0.0])
    assert u.pair(test) == pytest.approx(ref, abs=1e-11)


@given(st.floats(-0.5, 0.5))
def test_derivative_is_minus_pairing_with_derivative(x0):
    test = shifted(x0, 0.5)
    h = Heaviside(0.0)
    assert h.partial(0).pair(test) == pytest.approx(test(np.array([[0.0]]))[0], abs=1e-10)
    d = Delta(0.0)
    assert d.partial(0).pair(test) == pytest.approx(-test.gradient(np.array([[0.0]]))[0, 0], abs=1e-10)


def test_linear_combinations_and_products():
    test = shifted(0.1)
    u = 2.0 * Delta(0.0) - Heaviside(0.0)
    assert u.pair(test) == pytest.approx(2.0 * test(np.zeros((1, 1)))[0] - Heaviside(0.0).pair(test))
    g = cosine(1)
    assert Delta(0.3).times(g).pair(test) == pytest.approx(math.cos(0.3) * test(np.array([[0.3]]))[0])
    assert multiply_dist(g, Delta(0.3)).pair(test) == pytest.approx(Delta(0.3).times(g).pair(test))


def test_domain_is_enforced():
    u = Heaviside(0.0, Box((-1.0,), (1.0,)))
    with pytest.raises(DomainError):
        u.pair(shifted(0.5))


@pytest.mark.parametrize("u", [Delta(0.2), Heaviside(-0.1), Regular(lambda x: np.sin(x[:, 0]), 1)],
                         ids=["delta", "heaviside", "regular"])
@given(w=st.floats(-0.5, 0.5))
def test_pullback_closed_forms_agree_with_transport(u, w):
    mu = Diffeo.sine_warp(w)
    test = shifted(0.05, 0.6)
    lhs = pullback_dist(u, mu).pair(test)
    rhs = u.pair(push_test_function(test, mu))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_point_mass_and_regular_on_circle():
    m = circle()
    omega = density_form(m, shifted(0.5, 0.7))
    assert PointMass(m, [0.5]).pair(omega) == pytest.approx(omega.density(np.array([[0.5]]))[0])
    reg = RegularOnManifold(m, sine(1))
    ref = quad(lambda t: math.sin(t) * phi_scalar(shifted(0.5, 0.7))(t), -0.1, 1.1)
    assert reg.pair(omega) == pytest.approx(ref, abs=1e-11)


def test_lie_derivative_of_point_mass_on_circle():
    m = circle()
    field = trig_field(1, 0, 1.0, 0.4, 0)
    omega = density_form(m, shifted(0.2, 0.9))
    u = lie_derivative_dist(PointMass(m, [0.3]), field)
    p = np.array([[0.3]])
    expected = -(omega.density(p)[0] * field.divergence(p)[0]
                 + shifted(0.2, 0.9).gradient(p)[0, 0] * field(p)[0, 0])
    assert u.pair(omega) == pytest.approx(expected, abs=1e-10)


def test_local_representation_of_point_mass():
    m = circle(0.3)
    chart = m.charts[1]
    rep = local_rep_dist(PointMass(m, [1.0]), chart)
    y0 = chart.forward(np.array([[1.0]]))[0, 0]
    assert rep.at[0] == pytest.approx(y0)


def test_heaviside_on_interval_only():
    assert heaviside_on(interval()).breakpoints == (0.0,)
    with pytest.raises(ValueError):
        heaviside_on(circle())


def test_principal_value_does_not_depend_on_magnitude_window():
    test = shifted(0.5)
    assert PrincipalValueInvX(1e-6).pair(test) == pytest.approx(PrincipalValueInvX(1e-2).pair(test), abs=1e-13)
