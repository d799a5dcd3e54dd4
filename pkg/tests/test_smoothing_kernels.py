import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfk.calculus import Box, EpsilonLadder, SampleGrid
from gfk.local_colombeau import classify_test_object
from gfk.manifold import circle, conformal_metric, cosine, euclidean_metric, interval, torus, trig_field
from gfk.mollifier import build_mollifier
from gfk.smoothing_kernels import (KernelError, build_kernel, grading_functions, localize_kernel,
                                   metric_distance, two_point_density, validate_kernel)

CIRCLE = circle(0.3)
CIRCLE_KERNEL = build_kernel(CIRCLE, build_mollifier(1, 2, 0.5))
INTERVAL_KERNEL = build_kernel(interval(), build_mollifier(1, 2))
SHORT = EpsilonLadder(0.1, 0.5, 7)


@given(st.floats(-math.pi, math.pi), st.sampled_from([0.5, 0.1, 0.01]))
def test_circle_kernel_has_unit_integral(p, eps):
    assert CIRCLE_KERNEL(eps, [p]).integral() == pytest.approx(1.0, abs=1e-10)


@given(st.floats(-1.9, 1.9), st.sampled_from([0.5, 0.05]))
def test_interval_kernel_has_unit_integral(p, eps):
    assert INTERVAL_KERNEL(eps, [p]).integral() == pytest.approx(1.0, abs=1e-10)


def test_kernel_rejects_bad_eps_and_dimension():
    with pytest.raises(ValueError):
        CIRCLE_KERNEL(1.5, [0.0])
    with pytest.raises(KernelError):
        build_kernel(torus(), build_mollifier(1, 2))


@given(st.floats(-math.pi, math.pi))
def test_small_eps_kernel_moments_vanish(p):
    eps = 0.01
    form = CIRCLE_KERNEL(eps, [p])
    qs, ws = form.weighted_nodes()
    d = CIRCLE.displacement(np.array([[p]]), qs)[:, 0]
    # in chart coordinates moments vanish; in parameter coordinates the warp leaves O(eps^(q+1))
    for k in (1, 2):
        assert abs(float(ws @ d ** k)) <= 10 * eps ** 3


@given(st.floats(-3.0, 3.0), st.floats(-1.0, 1.0))
def test_parameter_derivative_matches_central_difference(p, v):
    eps, h = 0.2, 1e-5
    qs = np.linspace(p - 0.6, p + 0.6, 41)[:, None]
    exact = CIRCLE_KERNEL.parameter_derivative(eps, [p], [v]).density(qs)
    at = lambda t: CIRCLE_KERNEL(eps, [p + t * v]).density(qs)  # noqa: E731
    fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    scale = np.max(np.abs(CIRCLE_KERNEL(eps, [p]).density(qs))) / eps
    assert np.max(np.abs(exact - fd)) <= 1e-5 * scale


def test_two_point_density_zero_field_and_plain():
    eps = 0.1
    qs = np.linspace(-0.3, 0.3, 11)[:, None]
    plain = two_point_density(CIRCLE_KERNEL, eps, [0.0], qs, [])
    np.testing.assert_allclose(plain, CIRCLE_KERNEL(eps, [0.0]).density(qs))


def test_metric_distance_is_exact_for_constant_metric():
    m = circle()
    d = metric_distance(euclidean_metric(1), m, [3.0], np.array([[-3.0], [2.0]]))
    np.testing.assert_allclose(d, [2 * math.pi - 6.0, 1.0], atol=1e-12)
    scaled = metric_distance(euclidean_metric(1).scaled(4.0), m, [0.0], np.array([[0.5]]))
    assert scaled[0] == pytest.approx(1.0)


def test_metric_distance_for_conformal_metric_matches_integral():
    m = interval()
    d = metric_distance(conformal_metric(1, cosine(1)), m, [0.0], np.array([[1.0]]))[0]
    from scipy import integrate as sp_integrate
    ref = sp_integrate.quad(lambda t: math.exp(math.cos(t)), 0.0, 1.0)[0]
    assert d == pytest.approx(ref, rel=1e-12)


def test_grading_function_set():
    funcs = grading_functions(CIRCLE, 2)
    assert len(funcs) == 5
    values = funcs[0](np.array([[3.0]]))
    assert values[0] == 0.0


def test_support_mode_reports_finite_constant():
    grid = SampleGrid(Box((-0.5,), (0.5,)), 3)
    report = validate_kernel(CIRCLE_KERNEL, grid, "support", ladder=SHORT)
    assert report["pass"] and 0.0 < report["C"] < 2.0
    ratios = np.array(report["ratios"])
    assert np.max(ratios) <= 2 * np.min(ratios)


def test_growth_mode_zero_derivatives():
    grid = SampleGrid(Box((-1.0,), (1.0,)), 3)
    report = validate_kernel(CIRCLE_KERNEL, grid, "growth", ladder=SHORT)
    assert report["pass"]
    assert report["estimate"]["order"] == pytest.approx(-1.0, abs=0.05)


def test_growth_mode_with_a_lie_derivative():
    grid = SampleGrid(Box((-1.0,), (1.0,)), 3)
    field = trig_field(1, 0, 1.0, 0.5, 0)
    report = validate_kernel(CIRCLE_KERNEL, grid, "growth", ladder=SHORT, k=0, l=1, fields=[field])
    assert report["pass"]
    assert report["estimate"]["order"] == pytest.approx(-2.0, abs=0.1)
    with pytest.raises(ValueError):
        validate_kernel(CIRCLE_KERNEL, grid, "growth", k=1)


def test_grading_mode_on_interval():
    grid = SampleGrid(Box((-1.0,), (1.0,)), 3)
    report = validate_kernel(INTERVAL_KERNEL, grid, "grading", ladder=SHORT)
    assert report["pass"]


def test_localized_kernel_is_a_delta_class_family():
    fam = localize_kernel(build_kernel(circle(), build_mollifier(1, 3, 0.5)), "A")
    grid = SampleGrid(Box((-1.0,), (1.0,)), 3)
    verdict = classify_test_object(fam, 3, grid, EpsilonLadder(0.05, 0.5, 8))
    assert verdict["delta"]
    assert verdict["orders"]["1"]["floor_hit"] or verdict["orders"]["1"]["order"] >= 2.75
