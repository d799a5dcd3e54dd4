import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfk.calculus import Box, EpsilonLadder, LadderError, SampleGrid
from gfk.diffeo import Diffeo
from gfk.distributions import Delta, Heaviside, PrincipalValueInvX, Regular, pullback_dist
from gfk.local_colombeau import (DomainViolation, Moderate, Negligible, classify_test_object,
                                 constant_family, derivative_Di, eval_test_path, family_moments,
                                 injected_family, iota, pullback_local, sigma, test_local as run_local,
                                 transform_family)
from gfk.manifold import sine
from gfk.mollifier import build_mollifier, scale_translate

PHI = build_mollifier(1, 3)
SHORT = EpsilonLadder(0.25, 0.5, 8)
GRID = SampleGrid(Box((-1.0,), (1.0,)), 5)


def sample(x0, eps=0.3):
    return scale_translate(PHI, eps, np.array([x0])), np.array([x0])


@given(st.floats(-0.9, 0.9), st.floats(0.05, 0.5))
def test_iota_delta_path_is_rescaled_mollifier(x, eps):
    fam = constant_family(PHI)
    value = eval_test_path(iota(Delta(0.0)), fam, eps, [x])
    assert value == pytest.approx(float(PHI(np.array([[-x / eps]]))[0]) / eps, rel=1e-12, abs=1e-12)


@given(st.floats(-1.5, 1.5))
def test_sigma_ignores_test_function(x):
    phi, pt = sample(0.0)
    assert sigma(sine(1))(phi, [x]) == pytest.approx(math.sin(x))


@pytest.mark.parametrize("u", [Delta(0.0), Heaviside(0.0), PrincipalValueInvX(), Regular(lambda y: np.sin(y[:, 0]), 1)],
                         ids=["delta", "heaviside", "pv", "regular"])
@given(x0=st.floats(-0.8, 0.8))
def test_derivative_commutes_with_embedding(u, x0):
    phi, x = sample(x0)
    lhs = derivative_Di(iota(u), 0)(phi, x)
    rhs = iota(u.partial(0))(phi, x)
    assert abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))


def test_derivative_rejects_bad_direction():
    with pytest.raises(ValueError):
        derivative_Di(iota(Delta(0.0)), 1)


def test_products_are_pointwise_in_the_test_function():
    phi, x = sample(0.1)
    h = iota(Heaviside(0.0))
    assert (h * h)(phi, x) == pytest.approx(Heaviside(0.0).pair(phi) ** 2)
    assert (h - 2.0 * h)(phi, x) == pytest.approx(-Heaviside(0.0).pair(phi))


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_pullback_commutes_with_embedding(w, x0):
    mu = Diffeo.sine_warp(w)
    phi, x = sample(x0)
    for u in (Delta(0.2), Heaviside(0.0)):
        lhs = pullback_local(iota(u), mu)(phi, x)
        rhs = iota(pullback_dist(u, mu))(phi, x)
        assert abs(lhs - rhs) <= 1e-10


@given(st.floats(0.01, 0.5), st.floats(-1.0, 1.0), st.integers(1, 4))
def test_injected_family_first_moment(eps, x, m):
    fam = injected_family(PHI, m)
    values, _ = family_moments(fam, eps, [x], np.array([[0], [1], [2]]))
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    assert values[1] == pytest.approx(eps ** m, rel=1e-9, abs=1e-14)
    assert abs(values[2]) < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3])
def test_classify_injected_families(m):
    fam = injected_family(build_mollifier(1, 4), m)
    box_m = classify_test_object(fam, m, GRID, SHORT)
    box_next = classify_test_object(fam, m + 1, GRID, SHORT)
    assert box_m["box"] and not box_next["box"]
    assert box_m["orders"]["1"]["order"] == pytest.approx(m, abs=0.05)


def test_constant_mollifier_family_moments_resolve_to_floor():
    out = classify_test_object(constant_family(PHI), 3, GRID, SHORT)
    assert out["box"] and out["delta"]
    assert all(row["floor_hit"] for row in out["orders"].values())


def test_identity_transport_reproduces_family():
    mu = Diffeo.identity(1, Box((-3.0,), (3.0,)))
    moved = transform_family(constant_family(PHI), mu)
    xi = np.linspace(-0.9, 0.9, 7)[:, None]
    np.testing.assert_allclose(moved(0.1, [0.5])(xi), PHI(xi), atol=1e-12)


def test_transported_family_is_box_half_order():
    mu = Diffeo.sine_warp(0.3, source=Box((-2.0,), (2.0,)))
    moved = transform_family(constant_family(PHI), mu)
    verdict = classify_test_object(moved, 2, GRID, EpsilonLadder(0.0625, 0.5, 10))
    assert verdict["box"]
    assert verdict["orders"]["1"]["order"] == pytest.approx(3.0, abs=0.1)
    assert verdict["orders"]["2"]["order"] == pytest.approx(2.0, abs=0.1)


def test_transported_family_outside_domain():
    mu = Diffeo.sine_warp(0.3, source=Box((-2.0,), (2.0,)))
    moved = transform_family(constant_family(PHI), mu)
    assert not moved.in_domain(0.5, [[2.2]])[0]
    with pytest.raises(DomainViolation):
        eval_test_path(iota(Delta(0.0)), moved, 0.5, [2.2])
    with pytest.raises(LadderError):
        classify_test_object(moved, 2, SampleGrid(Box((-2.4,), (2.4,)), 5), SHORT)


def test_moderate_orders_of_embedded_delta():
    report = run_local(iota(Delta(0.0)), GRID, [constant_family(PHI)], Moderate(2), ladder=SHORT)
    orders = [row["order"] for row in report["orders"]]
    assert orders == pytest.approx([-1.0, -2.0, -3.0], abs=0.01)
    assert report["N_or_r"] == 3 and report["pass"]


def test_iota_minus_sigma_is_negligible_on_smooth_functions():
    f = sine(1)
    R = iota(Regular(lambda y: np.sin(y[:, 0]), 1)) - sigma(f)
    fams = {m: [injected_family(build_mollifier(1, m), m)] for m in (1, 2)}
    report = run_local(R, GRID, [], Negligible(1, (2.0,), fams), ladder=SHORT)
    assert report["pass"]
    assert report["N_or_r"] == {"2.0": 1}


def test_square_of_heaviside_minus_heaviside_is_not_negligible():
    h = iota(Heaviside(0.0))
    report = run_local(h * h - h, GRID, [constant_family(PHI)], Negligible(0, (1.0,)), ladder=SHORT)
    assert not report["pass"]
    order = report["orders"]["0"]["0"][0]["order"]
    assert abs(order) < 0.25
