import numpy as np
import pytest
from hypothesis import given, strategies as st

from gfk.calculus import Box
from gfk.diffeo import AxisMap, Diffeo, push_test_function
from gfk.mollifier import build_mollifier

warps = st.floats(-0.8, 0.8)
points = st.floats(-3.0, 3.0)


@given(warps, st.floats(-1, 1), st.floats(0.5, 2.0), st.floats(-1, 1), points)
def test_axis_map_inverse_round_trip(warp, center, scale, shift, x):
    m = AxisMap(warp, center, scale, shift)
    assert m.inverse(m(np.array([x])))[0] == pytest.approx(x, abs=1e-12)


@given(warps, points, st.floats(-1e-3, 1e-3))
def test_increment_agrees_with_difference(warp, x, d):
    m = AxisMap(warp, 0.3, 1.2, 0.1)
    direct = m(np.array([x + d])) - m(np.array([x]))
    assert m.increment(np.array([x]), np.array([d]))[0] == pytest.approx(direct[0], abs=1e-14)


@given(warps, points, st.floats(1e-12, 1e-2))
def test_inverse_increment_is_relatively_accurate(warp, x, d):
    m = AxisMap(warp, 0.3, 1.2, 0.1)
    dy = m.increment(np.array([x]), np.array([d]))
    assert m.inverse_increment(np.array([x]), dy)[0] == pytest.approx(d, rel=1e-12)


def test_axis_map_rejects_non_monotone_warp():
    with pytest.raises(ValueError):
        AxisMap(warp=1.0)


@given(warps, warps, points)
def test_composition_and_inversion(w1, w2, x):
    a, b = Diffeo.sine_warp(w1), Diffeo.sine_warp(w2)
    comp = a.compose(b)
    pt = np.array([[x]])
    np.testing.assert_allclose(comp(pt), a(b(pt)), atol=1e-13)
    inv = comp.inverted()
    np.testing.assert_allclose(inv(comp(pt)), pt, atol=1e-11)
    d = 1e-7
    inc = inv.axis_maps[0].increment(comp(pt)[:, 0], np.array([d]))[0]
    assert inc == pytest.approx((inv(comp(pt) + d) - pt)[0, 0], rel=1e-6)


def test_jacobian_determinants():
    mu = Diffeo.sine_warp(0.3, dim=2)
    x = np.array([[0.4, -1.0]])
    jac = mu.jacobian(x)[0]
    np.testing.assert_allclose(np.diag(jac), 1.0 + 0.3 * np.cos(x[0]))
    y = mu(x)
    assert mu.det_inverse_jacobian(y)[0] == pytest.approx(1.0 / np.prod(1.0 + 0.3 * np.cos(x[0])))


def test_image_and_preimage_boxes():
    mu = Diffeo.sine_warp(0.3, source=Box((-2.0,), (2.0,)))
    box = Box((-1.0,), (1.5,))
    img = mu.image_box(box)
    assert img.lo[0] == pytest.approx(-1.0 - 0.3 * np.sin(1.0))
    back = mu.preimage_box(img)
    assert back.lo[0] == pytest.approx(-1.0) and back.hi[0] == pytest.approx(1.5)
    assert mu.in_source(np.array([[2.5]])).tolist() == [False]


@given(st.floats(-0.6, 0.6), st.floats(-0.5, 0.5))
def test_pushed_test_function_keeps_integral(warp, shift):
    phi = build_mollifier(1, 2, 0.5)
    mu = Diffeo.from_axis_maps([AxisMap(warp, 0.0, 1.0, shift)])
    moved = push_test_function(phi, mu)
    assert moved.integral() == pytest.approx(1.0, abs=1e-10)
