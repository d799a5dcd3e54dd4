import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfk.calculus import Box, EpsilonLadder, SampleGrid
from gfk.distributions import PointMass, RegularOnManifold, heaviside_on, lie_derivative_dist, local_rep_dist
from gfk.global_colombeau import (Moderate, Negligible, associate, chart_coordinate_fields, embed,
                                  kernel_path, lie_derivative_global, local_rep_global, path_integral,
                                  test_global as run_global, weight_form)
from gfk.local_colombeau import iota
from gfk.manifold import circle, interval, sine, trig_field
from gfk.mollifier import build_mollifier, scale_translate
from gfk.smoothing_kernels import build_kernel

CIRCLE = circle(0.3)
KERNEL = build_kernel(CIRCLE, build_mollifier(1, 2, 0.5))
FIELD = trig_field(1, 0, 1.0, 0.5, 0)
SHORT = EpsilonLadder(0.1, 0.5, 7)


def form_at(center, eps=0.4):
    return KERNEL(eps, [center])


@given(st.floats(-3.0, 3.0))
def test_iota_of_point_mass_reads_density(p):
    omega = form_at(p)
    assert embed(PointMass(CIRCLE, [0.2]))(omega, [p]) == pytest.approx(omega.density(np.array([[0.2]]))[0])


@given(st.floats(-3.0, 3.0))
def test_sigma_ignores_the_form(p):
    assert embed(sine(1), CIRCLE)(form_at(0.0), [p]) == pytest.approx(math.sin(p))


def test_embed_requires_manifold_for_functions():
    with pytest.raises(ValueError):
        embed(sine(1))
    with pytest.raises(TypeError):
        embed(3.0)


@pytest.mark.parametrize("u", [PointMass(CIRCLE, [0.4]), RegularOnManifold(CIRCLE, sine(1))],
                         ids=["point-mass", "regular"])
@given(p=st.floats(-3.0, 3.0))
def test_lie_derivative_commutes_with_embedding(u, p):
    omega = form_at(p)
    lhs = lie_derivative_global(embed(u), FIELD)(omega, [p])
    rhs = embed(lie_derivative_dist(u, FIELD))(omega, [p])
    assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(rhs))


@given(st.floats(-3.0, 3.0))
def test_lie_derivative_of_sigma_is_directional_derivative(p):
    value = lie_derivative_global(embed(sine(1), CIRCLE), FIELD)(form_at(0.0), [p])
    expected = math.cos(p) * float(FIELD(np.array([[p]]))[0, 0])
    assert value == pytest.approx(expected, abs=1e-8)


def test_chart_representative_of_point_mass():
    chart = CIRCLE.charts[1]
    u = PointMass(CIRCLE, [1.0])
    rep = local_rep_global(embed(u), chart)
    phi = scale_translate(build_mollifier(1, 2), 0.3, chart.forward(np.array([[1.1]]))[0])
    x = chart.forward(np.array([[0.9]]))[0]
    assert rep(phi, x) == pytest.approx(iota(local_rep_dist(u, chart))(phi, x), abs=1e-12)


def test_chart_coordinate_fields_push_to_unit_vectors():
    chart = CIRCLE.charts[1]
    field = chart_coordinate_fields(chart)[0]
    p = np.array([[0.7]])
    assert chart.jacobian_diag(p)[0, 0] * field(p)[0, 0] == pytest.approx(1.0)


def test_kernel_path_of_point_mass_scales_like_inverse_eps():
    R = embed(PointMass(CIRCLE, [0.0]))
    report = run_global(R, SampleGrid(Box((-0.5,), (0.5,)), 5), [KERNEL], Moderate(1), ladder=SHORT)
    orders = [row["order"] for row in report["orders"]]
    assert orders == pytest.approx([-1.0, -2.0], abs=0.05)


def test_kernel_path_lie_derivative_uses_fields():
    R = embed(sine(1), CIRCLE)
    value, _ = kernel_path(R, KERNEL, 0.05, [0.3], [FIELD])
    assert value == pytest.approx(math.cos(0.3) * float(FIELD(np.array([[0.3]]))[0, 0]), abs=1e-6)


def test_iota_minus_sigma_negligible_on_circle():
    R = embed(RegularOnManifold(CIRCLE, sine(1))) - embed(sine(1), CIRCLE)
    report = run_global(R, SampleGrid(Box((-1.0,), (1.0,)), 3), [KERNEL], Negligible(0, (2.0,)),
                        ladder=SHORT)
    assert report["pass"]


def test_path_integral_of_smooth_embedding():
    m = interval()
    kernel = build_kernel(m, build_mollifier(1, 2))
    omega = weight_form(m, [0.2], 0.8)
    exact = omega.integrate(lambda p: np.sin(p[:, 0]))
    coarse = path_integral(embed(sine(1), m), kernel, 0.05, omega)
    fine = path_integral(embed(sine(1), m), kernel, 0.05, omega, panels=64)
    assert coarse == pytest.approx(exact, abs=1e-9)
    assert abs(fine - exact) < abs(coarse - exact)


def test_association_of_heaviside_product():
    m = interval()
    kernel = build_kernel(m, build_mollifier(1, 2))
    h, d = embed(heaviside_on(m)), embed(PointMass(m, [0.0]))
    omegas = [weight_form(m, [0.1], 0.7, tilt=0.4)]
    out = associate(h * d, PointMass(m, [0.0], 0.5), omegas, [kernel])
    assert out["pass"]
    assert out["results"][0]["error"] <= 1e-3


def test_negligible_difference_is_associated_to_zero():
    R = embed(RegularOnManifold(CIRCLE, sine(1))) - embed(sine(1), CIRCLE)
    grid = SampleGrid(Box((-1.0,), (1.0,)), 3)
    assert run_global(R, grid, [KERNEL], Negligible(0, (1.0,)), ladder=SHORT)["pass"]
    omegas = [weight_form(CIRCLE, [0.2], 0.8), weight_form(CIRCLE, [-1.0], 0.6, tilt=0.3)]
    assert associate(R, 0, omegas, [KERNEL])["pass"]


@pytest.mark.parametrize("points", [([0.0], [0.0]), ([0.0], [0.1])], ids=["same-point", "nearby-points"])
def test_products_of_moderate_elements_stay_moderate(points):
    grid = SampleGrid(Box((-0.5,), (0.5,)), 5)
    factors = [embed(PointMass(CIRCLE, p)) for p in points]
    exponents = [run_global(R, grid, [KERNEL], Moderate(0), ladder=SHORT)["N_or_r"] for R in factors]
    product = run_global(factors[0] * factors[1], grid, [KERNEL], Moderate(0), ladder=SHORT)
    assert product["pass"]
    assert product["N_or_r"] <= sum(exponents)
