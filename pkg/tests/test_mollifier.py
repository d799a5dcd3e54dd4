import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sp_integrate

from gfk.calculus import trapezoid_rule
from gfk.mollifier import (MomentSystemError, bump, build_mollifier, monomial_table, multi_indices,
                           scale_translate)

BUMP_INTEGRAL_1D = 0.4439938161680793


def moments(phi, max_order, points=600):
    nodes, weights = trapezoid_rule(phi.support, points if phi.dim == 1 else 240)
    exps = np.array(multi_indices(phi.dim, max_order), dtype=int)
    table = monomial_table(nodes, exps)
    return dict(zip(map(tuple, exps), (weights * phi(nodes)) @ table))


def test_bump_integral_frozen_value():
    ref = sp_integrate.quad(lambda t: math.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0,
                            epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    assert bump(1).integral() == pytest.approx(BUMP_INTEGRAL_1D, abs=1e-15)
    assert ref == pytest.approx(BUMP_INTEGRAL_1D, abs=1e-13)


def test_bump_is_compactly_supported_and_positive():
    b = bump(1, 0.5)
    x = np.linspace(-1, 1, 201)[:, None]
    vals = b(x)
    assert np.all(vals[np.abs(x[:, 0]) >= 0.5] == 0.0)
    assert np.all(vals[np.abs(x[:, 0]) < 0.49] > 0.0)


def test_multi_indices_counts():
    assert len(multi_indices(1, 4)) == 5
    assert len(multi_indices(2, 3)) == 10
    assert len(multi_indices(2, 3, 1)) == 9


@given(st.sampled_from([1, 2]), st.integers(0, 6), st.sampled_from([0.5, 1.0, 1.7]))
def test_mollifier_moment_conditions(dim, q, radius):
    phi = build_mollifier(dim, q, radius)
    mom = moments(phi, q)
    for alpha, value in mom.items():
        if sum(alpha) == 0:
            assert abs(value - 1.0) <= 1e-10
        else:
            assert abs(value) <= 1e-8 * max(1.0, radius ** sum(alpha))


def test_mollifier_odd_coefficients_vanish():
    phi = build_mollifier(2, 4)
    for alpha, c in phi.coefficients.items():
        if any(a % 2 for a in alpha):
            assert c == 0.0


def test_mollifier_first_nonvanishing_moment_is_detected():
    phi = build_mollifier(1, 2)
    mom = moments(phi, 4)
    assert abs(mom[(4,)]) > 1e-4


@pytest.mark.parametrize("args", [(3, 2), (1, 9), (1, -1)])
def test_build_mollifier_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        build_mollifier(*args)


def test_build_mollifier_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        build_mollifier(1, 2, radius=0.0)


def test_moment_system_error_is_a_linalg_error():
    assert issubclass(MomentSystemError, np.linalg.LinAlgError)


@given(st.integers(0, 5), st.floats(-0.9, 0.9))
def test_mollifier_gradient_matches_central_differences(q, x0):
    phi = build_mollifier(1, q)
    h = 1e-6
    x = np.array([[x0]])
    fd = (phi(x + h) - phi(x - h)) / (2 * h)
    assert phi.gradient(x)[0, 0] == pytest.approx(fd[0], abs=1e-6 * max(1.0, abs(fd[0])))


@given(st.floats(0.01, 1.0), st.floats(-2.0, 2.0))
def test_scale_translate_preserves_unit_integral(eps, x0):
    phi = build_mollifier(1, 3)
    moved = scale_translate(phi, eps, np.array([x0]))
    assert moved.integral() == pytest.approx(1.0, abs=1e-10)
    assert moved.support.lo[0] == pytest.approx(x0 - eps)


def test_linear_combination_and_partial_integrals():
    phi = build_mollifier(1, 2)
    combo = phi * 2.0 - phi.partial(0) * 0.5
    assert combo.integral() == pytest.approx(2.0, abs=1e-12)
    assert phi.partial(0).integral() == pytest.approx(0.0, abs=1e-14)
