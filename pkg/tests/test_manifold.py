import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfk.manifold import (MANIFOLDS, NForm, circle, conformal_metric, constant_field, cosine,
                          density_form, euclidean_metric, exp_cos, interval, lie_form, make_manifold,
                          monomial, plateau_cutoff, pullback_form_by_flow, sine, smooth_step, sum_fields,
                          torus, trig_field, wrap_angle)
from gfk.mollifier import build_mollifier, scale_translate

angles = st.floats(-10.0, 10.0)


def test_smooth_step_limits_and_monotonicity():
    t = np.linspace(-0.5, 1.5, 401)
    s = smooth_step(t)
    assert s[0] == 0.0 and s[-1] == 1.0
    assert np.all(np.diff(s) >= 0.0)
    assert plateau_cutoff(np.array([0.1, 2.0]), 0.5, 1.0).tolist() == [1.0, 0.0]


@given(angles)
def test_wrap_angle_lands_in_fundamental_interval(theta):
    w = float(wrap_angle(np.array([theta]), -math.pi)[0])
    assert -math.pi <= w < math.pi
    assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-12)


@pytest.mark.parametrize("factory", [interval, circle, lambda: circle(0.4), torus, lambda: torus(0.3)],
                         ids=["interval", "circle", "warped-circle", "torus", "warped-torus"])
def test_partition_of_unity_sums_to_one(factory):
    m = factory()
    pts = m.sample_points(37 if m.dim == 1 else 13)
    chi = m.pou.chi(pts)
    assert np.all(chi >= -1e-15)
    np.testing.assert_allclose(chi.sum(axis=1), 1.0, atol=1e-13)


@given(angles, st.floats(0.0, 0.6))
def test_circle_charts_round_trip(theta, warp):
    m = circle(warp)
    p = m.canonical(np.array([[theta]]))
    for chart in m.charts:
        if chart.contains(p)[0]:
            q = chart.inverse(chart.forward(p))
            assert m.displacement(p, q)[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_transition_map_is_consistent():
    m = circle(0.3)
    a, b = m.charts
    t = a.transition(b)
    p = np.array([[1.0]])
    assert t(a.forward(p))[0, 0] == pytest.approx(b.forward(p)[0, 0])


def test_smooth_function_derivatives():
    pts = np.array([[0.3], [1.1]])
    np.testing.assert_allclose(sine(1).derivative(pts, (1,)), np.cos(pts[:, 0]))
    np.testing.assert_allclose(cosine(1).derivative(pts, (2,)), -np.cos(pts[:, 0]))
    np.testing.assert_allclose(monomial(1, (3,)).derivative(pts, (2,)), 6 * pts[:, 0])
    h = 1e-6
    fd = (exp_cos(1)(pts + h) - exp_cos(1)(pts - h)) / (2 * h)
    np.testing.assert_allclose(exp_cos(1).derivative(pts, (1,)), fd, atol=1e-8)


def test_product_rule_for_smooth_functions():
    f = sine(1) * cosine(1)
    pts = np.array([[0.7]])
    assert f.derivative(pts, (1,))[0] == pytest.approx(math.cos(1.4))


def test_vector_field_flow_of_constant_field():
    field = constant_field(2, [0.5, -1.0])
    p = np.array([[0.1, 0.2]])
    np.testing.assert_allclose(field.flow(p, 2.0), [[1.1, -1.8]], atol=1e-12)


def test_field_in_chart_transforms_components():
    m = circle(0.3)
    chart = m.charts[1]
    field = trig_field(1, 0, 1.0, 0.5, 0)
    y = chart.forward(np.array([[1.0]]))
    local = field.in_chart(chart)
    expected = chart.jacobian_diag(np.array([[1.0]]))[0, 0] * field(np.array([[1.0]]))[0, 0]
    assert local(y)[0, 0] == pytest.approx(expected)


def bump_form(m, center, radius):
    phi = build_mollifier(m.dim, 0, 1.0)
    return density_form(m, scale_translate(phi, radius, np.atleast_1d(np.asarray(center, dtype=float))))


@given(st.floats(-2.0, 2.0), st.floats(0.1, 0.9))
def test_integral_of_lie_derivative_vanishes(center, amplitude):
    m = circle()
    field = trig_field(1, 0, 0.3, amplitude, 0)
    omega = bump_form(m, center, 0.8)
    assert lie_form(field, omega).integral() == pytest.approx(0.0, abs=1e-12)


def test_lie_form_matches_flow_pullback_oracle():
    m = circle()
    field = sum_fields(trig_field(1, 0, 0.2, 0.6, 0), constant_field(1, [0.1]))
    omega = bump_form(m, 0.4, 0.9)
    q = np.linspace(-0.4, 1.2, 9)[:, None]
    t = 1e-4
    fd = (pullback_form_by_flow(field, omega, t)(q) - pullback_form_by_flow(field, omega, -t)(q)) / (2 * t)
    np.testing.assert_allclose(lie_form(field, omega).density(q), fd, atol=1e-6)


def test_lie_form_on_torus_integrates_to_zero():
    m = torus()
    field = trig_field(2, 0, 0.5, 0.4, 1)
    omega = bump_form(m, [0.2, -0.3], 0.9)
    assert lie_form(field, omega).integral() == pytest.approx(0.0, abs=1e-10)


def test_nform_algebra():
    m = interval()
    omega = bump_form(m, 0.0, 0.5)
    assert (2.0 * omega - omega).integral() == pytest.approx(1.0, abs=1e-12)
    assert (-omega).integral() == pytest.approx(-1.0, abs=1e-12)
    assert omega.times(cosine(1)).integral() < 1.0
    assert isinstance(omega + omega, NForm)


@pytest.mark.parametrize("name", sorted(MANIFOLDS))
def test_omega_ref_has_unit_integral(name):
    m = make_manifold({"manifold": name})
    assert m.omega_ref().integral() == pytest.approx(1.0, abs=1e-12)


def test_make_manifold_rejects_unknown_names():
    with pytest.raises(KeyError):
        make_manifold({"manifold": "sphere"})


def test_metrics_are_positive_definite():
    pts = np.array([[0.1, 0.2], [1.0, -2.0]])
    assert euclidean_metric(2).check(pts)
    assert conformal_metric(2, sine(2)).check(pts)
    assert conformal_metric(2, sine(2)).scaled(3.0)(pts)[0, 0, 0] == pytest.approx(3.0 * math.exp(2 * math.sin(0.1)))


@given(angles, angles)
def test_circle_displacement_is_shortest(p, q):
    m = circle()
    d = m.displacement(np.array([[p]]), np.array([[q]]))[0, 0]
    assert -math.pi <= d <= math.pi
    assert math.isclose(math.cos(p + d), math.cos(q), abs_tol=1e-9)
