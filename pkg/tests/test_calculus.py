import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate as sp_integrate

from gfk.calculus import (FLAT_RMS, MACHINE_EPS, AdmissibilityError, Box, EpsilonLadder, LadderError,
                          QuadratureError, SampleGrid, TraceLog, check_admissible, estimate_order,
                          gateaux, gauss_rule, integrate, quad_compact, resolution_floor, trapezoid_rule)
from gfk.local_colombeau import iota
from gfk.distributions import Heaviside
from gfk.mollifier import bump, build_mollifier


# --- boxes -------------------------------------------------------------------

def test_box_geometry():
    box = Box((-1.0, 0.0), (1.0, 3.0))
    assert box.dim == 2
    assert box.volume == pytest.approx(6.0)
    np.testing.assert_allclose(box.center, [0.0, 1.5])
    assert box.contains(np.array([[0.0, 1.0], [2.0, 1.0]])).tolist() == [True, False]
    assert box.expand(0.5).lo == (-1.5, -0.5)
    assert box.intersect(Box((5.0, 5.0), (6.0, 6.0))) is None


@given(st.floats(-3, 3), st.floats(0.1, 2), st.floats(0.1, 2))
def test_box_hull_contains_both(c, r1, r2):
    a, b = Box.cube([c], r1), Box.cube([c + 1.0], r2)
    hull = a.hull(b)
    assert hull.lo[0] <= min(a.lo[0], b.lo[0]) and hull.hi[0] >= max(a.hi[0], b.hi[0])


# --- quadrature --------------------------------------------------------------

@pytest.mark.parametrize("degree", [0, 5, 19])
def test_gauss_rule_integrates_polynomials_exactly(degree):
    nodes, weights = gauss_rule(Box((-1.0,), (2.0,)), 3, 10)
    exact = (2.0 ** (degree + 1) - (-1.0) ** (degree + 1)) / (degree + 1)
    assert math.isclose(float(weights @ nodes[:, 0] ** degree), exact, rel_tol=1e-13, abs_tol=1e-13)


def test_integrate_matches_scipy_quad():
    f = lambda x: np.exp(np.sin(3 * x[:, 0])) * np.cos(x[:, 0])  # noqa: E731
    ours = integrate(f, Box((-2.0,), (1.5,)), tol=1e-12)
    ref = sp_integrate.quad(lambda t: math.exp(math.sin(3 * t)) * math.cos(t), -2.0, 1.5,
                            epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert abs(ours.value - ref) < 1e-11
    assert ours.error < 1e-10


def test_integrate_splits_at_breakpoints():
    f = lambda x: np.where(x[:, 0] > 0.3, 1.0, 0.0) * x[:, 0]  # noqa: E731
    value = integrate(f, Box((-1.0,), (1.0,)), breakpoints=[0.3]).value
    assert value == pytest.approx((1.0 - 0.09) / 2.0, abs=1e-13)


def test_integrate_reports_non_convergence():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.abs(x[:, 0] - 0.1234567) ** 0.5, Box((-1.0,), (1.0,)), max_panels=64)


def test_integrate_rejects_tiny_tolerance():
    with pytest.raises(ValueError):
        integrate(lambda x: x[:, 0], Box((0.0,), (1.0,)), tol=1e-15)


def test_trapezoid_rule_is_spectral_for_bumps():
    b = bump(1)
    nodes, weights = trapezoid_rule(b.support, 256)
    assert float(weights @ b(nodes)) == pytest.approx(0.4439938161680793, abs=1e-14)


def test_quad_compact_two_dimensions_matches_iterated_scipy():
    b = bump(2, 0.8)
    ref = sp_integrate.dblquad(lambda y, x: float(b(np.array([[x, y]]))[0]), -0.8, 0.8, -0.8, 0.8,
                               epsabs=1e-12)[0]
    assert quad_compact(b, b.support) == pytest.approx(ref, abs=1e-9)


# --- Gateaux derivatives -----------------------------------------------------

def test_gateaux_uses_analytic_channel_and_checks_admissibility():
    phi = build_mollifier(1, 2)
    psi = phi.partial(0)
    R = iota(Heaviside(0.1))
    res = gateaux(R, phi, np.zeros(1), psi, full_output=True)
    assert res.value == pytest.approx(-float(phi(np.array([[0.1]]))[0]), abs=1e-10)
    with pytest.raises(AdmissibilityError):
        check_admissible(phi)


# --- ladders -----------------------------------------------------------------

def test_ladder_parse_and_values():
    ladder = EpsilonLadder.parse("0.5, 0.5, 6")
    np.testing.assert_allclose(ladder.eps, 0.5 ** np.arange(1, 7))
    assert ladder.to_dict() == {"eps0": 0.5, "ratio": 0.5, "length": 6}


@pytest.mark.parametrize("text", ["0.5,0.5", "0,0.5,8", "0.5,1.0,8", "0.5,0.5,3", "2,0.5,8"])
def test_ladder_rejects_bad_input(text):
    with pytest.raises(LadderError):
        EpsilonLadder.parse(text)


def test_ladder_truncation_drops_leading_rungs():
    ladder = EpsilonLadder(0.5, 0.5, 10).truncated(0.1)
    assert ladder.eps0 == pytest.approx(0.0625)
    assert ladder.length == 7
    with pytest.raises(LadderError):
        EpsilonLadder(0.5, 0.5, 8).truncated(0.01)


# --- order estimation --------------------------------------------------------

@given(st.floats(-4.0, 6.0), st.floats(0.01, 100.0), st.sampled_from([0.5, 0.7]))
def test_estimate_order_recovers_power_laws(order, constant, ratio):
    eps = 0.25 * ratio ** np.arange(12)
    est = estimate_order(zip(eps, constant * eps ** order))
    assert est.order == pytest.approx(order, abs=1e-9)
    assert est.r2 == pytest.approx(1.0) and not est.floor_hit


@given(st.floats(0.5, 3.0))
def test_estimate_order_ignores_values_below_floor(order):
    eps = 0.25 * 0.5 ** np.arange(12)
    values = eps ** order
    est = estimate_order(zip(eps, values), floor=np.full(12, 10.0))
    assert est.floor_hit and math.isinf(est.order)
    assert est.at_least(100.0)
    assert est.moderate_exponent() == 0


def test_estimate_order_flat_data_is_clean_fit():
    eps = 0.25 * 0.5 ** np.arange(12)
    est = estimate_order(zip(eps, 3.0 + 1e-6 * np.cos(np.arange(12))))
    assert abs(est.order) < 1e-4
    assert est.rms <= FLAT_RMS and est.fit_ok()


def test_moderate_exponent_rounds_with_slack():
    eps = 0.25 * 0.5 ** np.arange(12)
    assert estimate_order(zip(eps, eps ** -2.0)).moderate_exponent() == 2
    assert estimate_order(zip(eps, eps ** -1.8)).moderate_exponent() == 2
    assert estimate_order(zip(eps, eps ** -1.7)).moderate_exponent() == 2
    assert estimate_order(zip(eps, eps ** -1.2)).moderate_exponent() == 1


def test_estimate_order_rejects_non_geometric_and_short_input():
    with pytest.raises(LadderError):
        estimate_order([(1.0, 1.0), (0.5, 1.0), (0.3, 1.0), (0.2, 1.0), (0.1, 1.0), (0.05, 1.0)])
    with pytest.raises(LadderError):
        estimate_order([(0.5 ** k, 1.0) for k in range(5)])
    with pytest.raises(FloatingPointError):
        estimate_order([(0.5 ** k, math.nan) for k in range(6)])


def test_resolution_floor_scales_with_magnitude():
    assert float(resolution_floor(2.0)) == pytest.approx(2e3 * MACHINE_EPS)


# --- sampling and traces -----------------------------------------------------

def test_sample_grid_focus_points_shrink_with_eps():
    grid = SampleGrid(Box((-1.0,), (1.0,)), 5).with_focus([(0.0,)], 2.0)
    pts = grid.points(0.01)
    extra = pts[5:, 0]
    assert len(extra) == grid.focus_n
    assert np.max(np.abs(extra)) == pytest.approx(0.02)


def test_trace_log_writes_csv(tmp_path):
    log = TraceLog()
    log.add("demo", [0.5, 0.25], [1.0, 2.0])
    path = tmp_path / "t.csv"
    log.write(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "eps,value,tag"
    assert len(lines) == 3
