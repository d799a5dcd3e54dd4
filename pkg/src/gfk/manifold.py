"""Example manifolds with atlases, partitions of unity, compactly supported
top-degree forms, vector fields, Riemannian distances and Lie derivatives.

Points of a manifold are given in *parameter coordinates*: the angle(s) for
the circle and the torus, the coordinate itself for the interval.  Charts
are products of increasing one-dimensional maps of parameter intervals.
Because every shipped manifold is oriented, n-forms and densities are
identified.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, sparse
from scipy.sparse import csgraph
from scipy.special import expit

from .calculus import Box, as_points, quad_compact, trapezoid_rule
from .diffeo import AxisMap, Diffeo
from .mollifier import TestFunction, bump

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------------
# Smooth steps
# ----------------------------------------------------------------------------

def smooth_step(t) -> np.ndarray:
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``, strictly increasing between."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = np.clip(t[mid], 1e-3, 1.0 - 1e-3)
    out[mid] = expit(-(1.0 / tm - 1.0 / (1.0 - tm)))
    return out


def smooth_step_derivative(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mid = (t > 1e-3) & (t < 1.0 - 1e-3)
    tm = t[mid]
    z = 1.0 / tm - 1.0 / (1.0 - tm)
    out[mid] = expit(z) * expit(-z) * (1.0 / tm ** 2 + 1.0 / (1.0 - tm) ** 2)
    return out


def plateau_cutoff(x, inner: float, outer: float) -> np.ndarray:
    """1 for ``|x| <= inner``, 0 for ``|x| >= outer``, smooth in between."""
    return 1.0 - smooth_step((np.abs(x) - inner) / (outer - inner))


def plateau_cutoff_derivative(x, inner: float, outer: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -np.sign(x) * smooth_step_derivative((np.abs(x) - inner) / (outer - inner)) / (outer - inner)


def cutoff_ramp(eps, eta) -> np.ndarray:
    """Cutoff in epsilon: 1 on ``(0, eta/3]``, 0 on ``[eta/2, inf)``."""
    eta = np.asarray(eta, dtype=float)
    return 1.0 - smooth_step((eps - eta / 3.0) / (eta / 6.0))


def wrap_angle(x, lo: float) -> np.ndarray:
    """Representative of ``x`` modulo ``2 pi`` in ``[lo, lo + 2 pi)``."""
    return lo + np.mod(np.asarray(x, dtype=float) - lo, TWO_PI)


# ----------------------------------------------------------------------------
# Smooth functions
# ----------------------------------------------------------------------------

class SmoothFunction:
    """Smooth function of parameter coordinates with an optional derivative channel.

    ``derivative(pts, alpha)`` returns ``d^alpha f`` at the points; when it is not
    supplied, derivatives of order one and two are taken by central differences.
    """

    def __init__(self, dim: int, func: Callable, derivative: Callable | None = None,
                 name: str = "f"):
        self.dim = dim
        self._func = func
        self._derivative = derivative
        self.name = name

    def __call__(self, pts) -> np.ndarray:
        return np.asarray(self._func(as_points(pts, self.dim)), dtype=float).reshape(-1)

    @property
    def has_derivatives(self) -> bool:
        return self._derivative is not None

    def derivative(self, pts, alpha) -> np.ndarray:
        pts = as_points(pts, self.dim)
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) == 0:
            return self(pts)
        if self._derivative is not None:
            return np.asarray(self._derivative(pts, alpha), dtype=float).reshape(-1)
        return _fd_derivative(self, pts, alpha, 1e-4)

    def gradient(self, pts) -> np.ndarray:
        pts = as_points(pts, self.dim)
        return np.stack([self.derivative(pts, tuple(np.eye(self.dim, dtype=int)[i]))
                         for i in range(self.dim)], axis=1)

    def __add__(self, other: "SmoothFunction") -> "SmoothFunction":
        return _combine(self, other, 1.0)

    def __sub__(self, other: "SmoothFunction") -> "SmoothFunction":
        return _combine(self, other, -1.0)

    def __mul__(self, other):
        if isinstance(other, SmoothFunction):
            return _product(self, other)
        c = float(other)
        deriv = None
        if self.has_derivatives:
            def deriv(pts, alpha):
                return c * self.derivative(pts, alpha)
        return SmoothFunction(self.dim, lambda pts: c * self(pts), deriv, f"{c}*{self.name}")

    __rmul__ = __mul__

    def lie(self, field: "VectorField") -> "SmoothFunction":
        """``X f = sum_i X^i d_i f``."""
        parent = self
        return SmoothFunction(self.dim, lambda pts: np.sum(field(pts) * parent.gradient(pts), axis=1),
                              None, f"X({self.name})")

    def __repr__(self) -> str:
        return f"<SmoothFunction {self.name}>"


def _fd_derivative(fn, pts, alpha, h):
    stencils = {0: [(0.0, 1.0)], 1: [(-1.0, -0.5), (1.0, 0.5)], 2: [(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)]}
    if max(alpha) > 2:
        raise ValueError("finite-difference derivatives only up to order 2 per axis")
    total = np.zeros(len(pts))
    for combo in itertools.product(*[stencils[a] for a in alpha]):
        shift = np.array([c[0] for c in combo]) * h
        weight = float(np.prod([c[1] for c in combo]))
        total += weight * fn(pts + shift)
    return total / h ** sum(alpha)


def _combine(f, g, sign):
    deriv = None
    if f.has_derivatives and g.has_derivatives:
        def deriv(pts, alpha):
            return f.derivative(pts, alpha) + sign * g.derivative(pts, alpha)
    return SmoothFunction(f.dim, lambda pts: f(pts) + sign * g(pts), deriv,
                          f"({f.name}{'+' if sign > 0 else '-'}{g.name})")


def leibniz_terms(alpha):
    """Pairs ``(coef, beta)`` with ``d^alpha(uv) = sum coef d^beta u d^(alpha-beta) v``."""
    out = []
    for beta in itertools.product(*[range(a + 1) for a in alpha]):
        coef = float(np.prod([math.comb(a, b) for a, b in zip(alpha, beta)]))
        out.append((coef, tuple(beta)))
    return out


def _product(f, g):
    deriv = None
    if f.has_derivatives and g.has_derivatives:
        def deriv(pts, alpha):
            total = np.zeros(len(pts))
            for coef, beta in leibniz_terms(alpha):
                rest = tuple(a - b for a, b in zip(alpha, beta))
                total += coef * f.derivative(pts, beta) * g.derivative(pts, rest)
            return total
    return SmoothFunction(f.dim, lambda pts: f(pts) * g(pts), deriv, f"{f.name}*{g.name}")


def trig(dim: int, axis: int = 0, k: float = 1.0, phase: float = 0.0, amplitude: float = 1.0,
         name: str | None = None) -> SmoothFunction:
    """``amplitude * sin(k x_axis + phase)`` with exact derivatives of every order."""
    def f(pts):
        return amplitude * np.sin(k * pts[:, axis] + phase)

    def d(pts, alpha):
        if any(a for i, a in enumerate(alpha) if i != axis):
            return np.zeros(len(pts))
        n = alpha[axis]
        return amplitude * k ** n * np.sin(k * pts[:, axis] + phase + n * math.pi / 2)

    return SmoothFunction(dim, f, d, name or f"{amplitude:g}sin({k:g}x{axis}+{phase:g})")


def sine(dim: int = 1, axis: int = 0, k: float = 1.0) -> SmoothFunction:
    return trig(dim, axis, k, 0.0, 1.0, f"sin({k:g}x{axis})")


def cosine(dim: int = 1, axis: int = 0, k: float = 1.0) -> SmoothFunction:
    return trig(dim, axis, k, math.pi / 2, 1.0, f"cos({k:g}x{axis})")


def constant(dim: int, value: float = 1.0) -> SmoothFunction:
    return SmoothFunction(dim, lambda pts: np.full(len(pts), value),
                          lambda pts, alpha: np.zeros(len(pts)), f"{value:g}")


def exp_cos(dim: int = 1, axis: int = 0) -> SmoothFunction:
    """``exp(cos x_axis)``; derivatives by differences."""
    return SmoothFunction(dim, lambda pts: np.exp(np.cos(pts[:, axis])), None, f"exp(cos x{axis})")


def monomial(dim: int, exponents) -> SmoothFunction:
    exps = tuple(int(e) for e in exponents)

    def f(pts):
        return np.prod(pts ** np.array(exps)[None, :], axis=1)

    def d(pts, alpha):
        coef = 1.0
        powers = []
        for e, a in zip(exps, alpha):
            if a > e:
                return np.zeros(len(pts))
            coef *= math.perm(e, a)
            powers.append(e - a)
        return coef * np.prod(pts ** np.array(powers)[None, :], axis=1)

    return SmoothFunction(dim, f, d, "x^" + "".join(str(e) for e in exps))


# ----------------------------------------------------------------------------
# Charts
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisChart:
    """One factor of a product chart: an open parameter interval and an increasing map."""

    lo: float
    hi: float
    map: AxisMap
    periodic: bool = False

    def wrap(self, x):
        return wrap_angle(x, self.lo) if self.periodic else np.asarray(x, dtype=float)

    def contains(self, x):
        w = self.wrap(x)
        return (w > self.lo) & (w < self.hi)


class Chart:
    """Product chart ``psi(p) = (g_1(p_1), ..., g_n(p_n))`` on a parameter box."""

    def __init__(self, name: str, axes: Sequence[AxisChart]):
        self.name = name
        self.axes = tuple(axes)
        self.dim = len(self.axes)
        self.image_box = Box(tuple(a.map(a.lo) for a in self.axes), tuple(a.map(a.hi) for a in self.axes))
        self.param_box = Box(tuple(a.lo for a in self.axes), tuple(a.hi for a in self.axes))

    def wrap(self, p) -> np.ndarray:
        pts = as_points(p, self.dim)
        return np.stack([a.wrap(pts[:, i]) for i, a in enumerate(self.axes)], axis=1)

    def contains(self, p) -> np.ndarray:
        pts = as_points(p, self.dim)
        return np.all(np.stack([a.contains(pts[:, i]) for i, a in enumerate(self.axes)], axis=1), axis=1)

    def image_contains(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        lo, hi = np.asarray(self.image_box.lo), np.asarray(self.image_box.hi)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def forward(self, p) -> np.ndarray:
        w = self.wrap(p)
        return np.stack([a.map(w[:, i]) for i, a in enumerate(self.axes)], axis=1)

    __call__ = forward

    def inverse(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        return np.stack([a.map.inverse(pts[:, i]) for i, a in enumerate(self.axes)], axis=1)

    def jacobian_diag(self, p) -> np.ndarray:
        w = self.wrap(p)
        return np.stack([a.map.d1(w[:, i]) for i, a in enumerate(self.axes)], axis=1)

    def second_diag(self, p) -> np.ndarray:
        w = self.wrap(p)
        return np.stack([a.map.d2(w[:, i]) for i, a in enumerate(self.axes)], axis=1)

    def det(self, p) -> np.ndarray:
        """``det D psi`` at parameter points."""
        return np.prod(self.jacobian_diag(p), axis=1)

    def det_inverse(self, y) -> np.ndarray:
        """``det D psi^{-1}`` at chart points."""
        return 1.0 / self.det(self.inverse(y))

    def as_diffeo(self) -> Diffeo:
        """The chart as a diffeomorphism from its parameter box onto its image."""
        return Diffeo.from_axis_maps([a.map for a in self.axes], self.param_box, self.name)

    def transition(self, other: "Chart") -> Diffeo:
        """``other o self^{-1}`` on the chart image of the overlap (parameters unwrapped consistently)."""
        src, dst = self, other

        def fwd(y):
            return dst.forward(src.inverse(y))

        def inv(z):
            return src.forward(dst.inverse(z))

        def jac(y):
            p = src.inverse(y)
            d = dst.jacobian_diag(p) / src.jacobian_diag(p)
            return d[:, :, None] * np.eye(self.dim)[None]

        return Diffeo(self.dim, fwd, inv, jac, None, None, f"{other.name}<-{self.name}")

    def to_dict(self) -> dict:
        return {"name": self.name, "axes": [{"lo": a.lo, "hi": a.hi, "periodic": a.periodic,
                                             **a.map.to_dict()} for a in self.axes]}


# ----------------------------------------------------------------------------
# Partitions of unity
# ----------------------------------------------------------------------------

class _CircleAxisPartition:
    """Two-chart partition of unity on one angle axis.

    ``chi_A`` is supported in ``|theta| <= support * pi`` and the plateau
    ``chi^1_A`` equals one on ``|theta| <= plateau * pi``; chart B is the same
    construction rotated by ``pi``.
    """

    def __init__(self, flat: float = 0.55, support: float = 0.8, plateau: float = 0.88,
                 plateau_outer: float = 0.96):
        if not (0.5 < support < plateau < plateau_outer < 1.0 and 1.0 - support < flat < support):
            raise ValueError("inconsistent partition parameters")
        self.flat, self.support, self.plateau, self.plateau_outer = flat, support, plateau, plateau_outer

    @staticmethod
    def _centered(theta, k):
        center = 0.0 if k == 0 else math.pi
        return wrap_angle(np.asarray(theta) - center, -math.pi)

    def _raw(self, theta, k):
        return plateau_cutoff(self._centered(theta, k), self.flat * math.pi, self.support * math.pi)

    def chi(self, theta, k):
        a, b = self._raw(theta, 0), self._raw(theta, 1)
        return (a if k == 0 else b) / (a + b)

    def plateau_fn(self, theta, k):
        return plateau_cutoff(self._centered(theta, k), self.plateau * math.pi, self.plateau_outer * math.pi)

    def plateau_derivative(self, theta, k):
        return plateau_cutoff_derivative(self._centered(theta, k), self.plateau * math.pi,
                                         self.plateau_outer * math.pi)

    def support_interval(self, k):
        c = 0.0 if k == 0 else math.pi
        return c - self.support * math.pi, c + self.support * math.pi

    def plateau_interval(self, k):
        c = 0.0 if k == 0 else math.pi
        return c - self.plateau * math.pi, c + self.plateau * math.pi


class PartitionOfUnity:
    """Partition of unity ``chi_alpha`` subordinate to a product atlas, with plateau
    functions ``chi^1_alpha`` and epsilon cutoffs ``lambda_alpha``.

    For periodic axes the two-chart axis partition is used.  For the interval
    the single chart carries ``chi = chi^1 = 1``; the cutoff then depends on
    the point through ``eps_0(p)``, proportional to a smooth lower bound of the
    distance to the boundary.
    """

    def __init__(self, manifold: "Manifold", axis_partition: _CircleAxisPartition | None = None):
        self.manifold = manifold
        self.axis_partition = axis_partition or _CircleAxisPartition()
        self.n_charts = len(manifold.charts)

    # chart index -> tuple of axis chart indices
    def _axis_indices(self, alpha):
        return self.manifold.chart_axes[alpha]

    def chi(self, p) -> np.ndarray:
        """Values ``chi_alpha(p)`` with shape ``(N, n_charts)``."""
        pts = self.manifold.canonical(p)
        out = np.ones((len(pts), self.n_charts))
        for alpha in range(self.n_charts):
            for ax, k in enumerate(self._axis_indices(alpha)):
                if self.manifold.periodic[ax]:
                    out[:, alpha] *= self.axis_partition.chi(pts[:, ax], k)
        return out

    def plateau(self, alpha: int, y) -> np.ndarray:
        """``chi^1_alpha`` at chart points ``y`` (zero outside the chart image)."""
        chart = self.manifold.charts[alpha]
        pts = as_points(y, chart.dim)
        inside = chart.image_contains(pts)
        out = np.zeros(len(pts))
        if not np.any(inside):
            return out
        p = chart.inverse(pts[inside])
        val = np.ones(len(p))
        for ax, k in enumerate(self._axis_indices(alpha)):
            if self.manifold.periodic[ax]:
                val *= self.axis_partition.plateau_fn(p[:, ax], k)
        out[inside] = val
        return out

    def plateau_grad(self, alpha: int, y) -> np.ndarray:
        chart = self.manifold.charts[alpha]
        pts = as_points(y, chart.dim)
        inside = chart.image_contains(pts)
        out = np.zeros_like(pts)
        if not np.any(inside):
            return out
        p = chart.inverse(pts[inside])
        jd = chart.jacobian_diag(p)
        axes = self._axis_indices(alpha)
        factors, derivs = [], []
        for ax, k in enumerate(axes):
            if self.manifold.periodic[ax]:
                factors.append(self.axis_partition.plateau_fn(p[:, ax], k))
                derivs.append(self.axis_partition.plateau_derivative(p[:, ax], k))
            else:
                factors.append(np.ones(len(p)))
                derivs.append(np.zeros(len(p)))
        grads = np.zeros((len(p), chart.dim))
        for ax in range(chart.dim):
            others = np.prod([factors[j] for j in range(chart.dim) if j != ax], axis=0) if chart.dim > 1 else 1.0
            grads[:, ax] = derivs[ax] * others / jd[:, ax]
        out[inside] = grads
        return out

    def plateau_function(self, alpha: int) -> tuple:
        """``(value, gradient)`` callables of ``chi^1_alpha`` in chart coordinates."""
        return (lambda y: self.plateau(alpha, y)), (lambda y: self.plateau_grad(alpha, y))

    def support_box(self, alpha: int) -> Box:
        """Chart-coordinate box containing ``psi_alpha(supp chi_alpha)``."""
        chart = self.manifold.charts[alpha]
        lo, hi = [], []
        for ax, (k, axis) in enumerate(zip(self._axis_indices(alpha), chart.axes)):
            if self.manifold.periodic[ax]:
                a, b = self.axis_partition.support_interval(k)
                lo.append(axis.map(a))
                hi.append(axis.map(b))
            else:
                lo.append(chart.image_box.lo[ax])
                hi.append(chart.image_box.hi[ax])
        return Box(tuple(lo), tuple(hi))

    def plateau_box(self, alpha: int) -> Box:
        """Chart-coordinate box on which ``chi^1_alpha = 1``."""
        chart = self.manifold.charts[alpha]
        lo, hi = [], []
        for ax, (k, axis) in enumerate(zip(self._axis_indices(alpha), chart.axes)):
            if self.manifold.periodic[ax]:
                a, b = self.axis_partition.plateau_interval(k)
                lo.append(axis.map(a))
                hi.append(axis.map(b))
            else:
                lo.append(chart.image_box.lo[ax])
                hi.append(chart.image_box.hi[ax])
        return Box(tuple(lo), tuple(hi))

    def eps0(self, alpha: int, p, radius: float) -> np.ndarray:
        """Largest admissible epsilon so that ``radius * eps`` balls around
        ``psi_alpha(supp chi_alpha)`` stay inside the plateau, at each point ``p``."""
        pts = self.manifold.canonical(p)
        out = np.full(len(pts), np.inf)
        supp, plat = self.support_box(alpha), self.plateau_box(alpha)
        for ax in range(self.manifold.dim):
            if self.manifold.periodic[ax]:
                gap = min(supp.lo[ax] - plat.lo[ax], plat.hi[ax] - supp.hi[ax])
                if gap <= 0:
                    raise ValueError("plateau does not contain the support of the partition function")
                out = np.minimum(out, min(1.0, 0.99 * gap / radius))
            else:
                a, b = self.manifold.param_box.lo[ax], self.manifold.param_box.hi[ax]
                dist = (pts[:, ax] - a) * (b - pts[:, ax]) / (b - a)
                scale = 0.99 / max(radius, 0.99 * (b - a) / 4.0)
                out = np.minimum(out, scale * np.clip(dist, 0.0, None))
        return out

    def cutoff(self, alpha: int, eps: float, p, radius: float) -> np.ndarray:
        """``lambda_alpha(eps)`` (point-dependent on the interval)."""
        e0 = self.eps0(alpha, p, radius)
        out = np.zeros_like(e0)
        ok = e0 > 0
        out[ok] = cutoff_ramp(eps, e0[ok])
        return out

    def to_dict(self) -> dict:
        ap = self.axis_partition
        return {"flat": ap.flat, "support": ap.support, "plateau": ap.plateau,
                "plateau_outer": ap.plateau_outer}


# ----------------------------------------------------------------------------
# Vector fields
# ----------------------------------------------------------------------------

class VectorField:
    """Vector field given by components in some coordinates, with first derivatives.

    ``components(p)`` has shape ``(N, dim)``; ``jacobian(p)[n, i, j] = d_j X^i``.
    """

    def __init__(self, dim: int, components: Callable, jacobian: Callable | None = None,
                 name: str = "X", zero: bool = False):
        self.dim = dim
        self._components = components
        self._jacobian = jacobian
        self.name = name
        self.zero = zero

    def __call__(self, p) -> np.ndarray:
        pts = as_points(p, self.dim)
        return np.asarray(self._components(pts), dtype=float).reshape(len(pts), self.dim)

    def jacobian(self, p, step: float = 1e-6) -> np.ndarray:
        pts = as_points(p, self.dim)
        if self._jacobian is not None:
            return np.asarray(self._jacobian(pts), dtype=float).reshape(len(pts), self.dim, self.dim)
        out = np.empty((len(pts), self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            out[:, :, j] = (self(pts + e) - self(pts - e)) / (2 * step)
        return out

    def divergence(self, p) -> np.ndarray:
        return np.trace(self.jacobian(p), axis1=1, axis2=2)

    def in_chart(self, chart: Chart | None) -> "VectorField":
        """Components in the coordinates of ``chart`` (``None``: unchanged)."""
        if chart is None:
            return self
        parent = self

        def comp(y):
            p = chart.inverse(y)
            return chart.jacobian_diag(p) * parent(p)

        def jac(y):
            p = chart.inverse(y)
            d1 = chart.jacobian_diag(p)
            d2 = chart.second_diag(p)
            x = parent(p)
            jx = parent.jacobian(p)
            inner = d1[:, :, None] * jx
            idx = np.arange(self.dim)
            inner[:, idx, idx] += d2 * x
            return inner / d1[:, None, :]

        return VectorField(self.dim, comp, jac, f"{self.name}@{chart.name}", self.zero)

    def flow(self, p, t: float, steps: int = 64, with_jacobian: bool = False):
        """Classical fourth-order Runge-Kutta flow ``Fl_t(p)`` with a fixed step."""
        x = as_points(p, self.dim).copy()
        if t == 0.0:
            return (x, np.broadcast_to(np.eye(self.dim), (len(x), self.dim, self.dim)).copy()) if with_jacobian else x
        h = t / steps
        jac = np.broadcast_to(np.eye(self.dim), (len(x), self.dim, self.dim)).copy()

        def rhs(xv, jv):
            return self(xv), self.jacobian(xv) @ jv

        for _ in range(steps):
            k1, m1 = rhs(x, jac)
            k2, m2 = rhs(x + 0.5 * h * k1, jac + 0.5 * h * m1)
            k3, m3 = rhs(x + 0.5 * h * k2, jac + 0.5 * h * m2)
            k4, m4 = rhs(x + h * k3, jac + h * m3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            jac = jac + h / 6.0 * (m1 + 2 * m2 + 2 * m3 + m4)
        return (x, jac) if with_jacobian else x

    def to_dict(self) -> dict:
        return {"name": self.name, "dim": self.dim}


def constant_field(dim: int, vector) -> VectorField:
    v = np.atleast_1d(np.asarray(vector, dtype=float))
    return VectorField(dim, lambda p: np.broadcast_to(v, p.shape).copy(),
                       lambda p: np.zeros((len(p), dim, dim)), f"const{v.tolist()}",
                       zero=bool(np.all(v == 0)))


def zero_field(dim: int) -> VectorField:
    return constant_field(dim, np.zeros(dim))


def trig_field(dim: int, axis: int, base: float, amplitude: float, along: int, k: float = 1.0,
               phase: float = 0.0) -> VectorField:
    """``(base + amplitude sin(k p_along + phase)) e_axis``."""
    def comp(p):
        out = np.zeros_like(p)
        out[:, axis] = base + amplitude * np.sin(k * p[:, along] + phase)
        return out

    def jac(p):
        out = np.zeros((len(p), dim, dim))
        out[:, axis, along] = amplitude * k * np.cos(k * p[:, along] + phase)
        return out

    return VectorField(dim, comp, jac, f"({base:g}+{amplitude:g}sin({k:g}p{along}+{phase:g}))e{axis}")


def sum_fields(*fields: VectorField) -> VectorField:
    dim = fields[0].dim
    return VectorField(dim, lambda p: sum(f(p) for f in fields),
                       lambda p: sum(f.jacobian(p) for f in fields),
                       "+".join(f.name for f in fields), all(f.zero for f in fields))


# ----------------------------------------------------------------------------
# Top-degree forms
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Piece:
    """A compactly supported form ``weight * coeff(y) d^n y`` in the coordinates of ``chart``
    (``None``: parameter coordinates).  ``coeff.support`` is the integration box."""

    coeff: TestFunction
    chart: Chart | None = None
    weight: float = 1.0


class NForm:
    """Compactly supported n-form: a finite sum of coordinate pieces.

    The density with respect to ``d^n p`` (parameter coordinates) is the sum
    of the pulled-back piece coefficients.
    """

    def __init__(self, manifold: "Manifold", pieces: Sequence[Piece]):
        self.manifold = manifold
        self.pieces = tuple(p for p in pieces if p.weight != 0.0)

    @property
    def dim(self) -> int:
        return self.manifold.dim

    # -- pointwise ----------------------------------------------------------------
    def density(self, q) -> np.ndarray:
        """Coefficient of the form with respect to ``d^n p`` at parameter points ``q``."""
        pts = as_points(q, self.dim)
        total = np.zeros(len(pts))
        for piece in self.pieces:
            total += piece.weight * _piece_density(self.manifold, piece, pts)
        return total

    def coefficient(self, chart: Chart, y) -> np.ndarray:
        """Coefficient in the coordinates of ``chart`` at chart points ``y``."""
        p = chart.inverse(y)
        return self.density(p) / chart.det(p)

    def support_boxes(self) -> list:
        """Parameter-coordinate boxes covering the support."""
        out = []
        for piece in self.pieces:
            box = piece.coeff.support
            if piece.chart is not None:
                box = piece.chart.as_diffeo().preimage_box(box)
            out.append(box)
        return out

    # -- integration --------------------------------------------------------------
    def integrate(self, f: Callable | None = None, breakpoints: Sequence[float] = (),
                  points: int | None = None) -> float:
        """``int f * omega`` (``f`` a function of parameter points; ``None`` means 1)."""
        return float(sum(piece.weight * _piece_integral(piece, f, breakpoints, points)
                         for piece in self.pieces))

    def integral(self) -> float:
        return self.integrate()

    def weighted_nodes(self, points: int | None = None) -> tuple:
        """Parameter points ``q`` and weights ``w`` with ``int f omega ~ sum w f(q)`` for smooth ``f``.

        Trapezoid nodes of every piece (zero-coefficient nodes dropped), so one
        set of nodes serves many integrands.
        """
        qs, ws = [np.empty((0, self.dim))], [np.empty(0)]
        for piece in self.pieces:
            box = piece.coeff.support
            nodes, weights = trapezoid_rule(box, points or (512 if box.dim == 1 else 200))
            vals = piece.coeff(nodes)
            keep = vals != 0.0
            qs.append(nodes[keep] if piece.chart is None else piece.chart.inverse(nodes[keep]))
            ws.append(piece.weight * weights[keep] * vals[keep])
        return np.concatenate(qs), np.concatenate(ws)

    def sup_norm(self) -> float:
        return max((abs(p.weight) * p.coeff.sup_norm() * _chart_det_scale(p) for p in self.pieces), default=0.0)

    @property
    def support_volume(self) -> float:
        return sum(box.volume for box in self.support_boxes())

    # -- algebra ------------------------------------------------------------------
    def __add__(self, other: "NForm") -> "NForm":
        return NForm(self.manifold, self.pieces + other.pieces)

    def __sub__(self, other: "NForm") -> "NForm":
        return self + other * -1.0

    def __mul__(self, c) -> "NForm":
        c = float(c)
        return NForm(self.manifold, [Piece(p.coeff, p.chart, p.weight * c) for p in self.pieces])

    __rmul__ = __mul__

    def __neg__(self) -> "NForm":
        return self * -1.0

    def times(self, f: SmoothFunction) -> "NForm":
        """The form ``f * omega`` for a smooth function ``f`` of parameter points."""
        pieces = []
        for piece in self.pieces:
            chart = piece.chart

            def g(y, chart=chart):
                return f(y if chart is None else chart.inverse(y))

            def g_grad(y, chart=chart):
                if chart is None:
                    return f.gradient(y)
                p = chart.inverse(y)
                return f.gradient(p) / chart.jacobian_diag(p)

            pieces.append(Piece(piece.coeff.multiply(g, g_grad, f.name), chart, piece.weight))
        return NForm(self.manifold, pieces)

    def __repr__(self) -> str:
        return f"<NForm on {self.manifold.name} with {len(self.pieces)} pieces>"


def _chart_det_scale(piece):
    if piece.chart is None:
        return 1.0
    return float(np.max(piece.chart.jacobian_diag(piece.chart.inverse(piece.coeff.support.center[None, :]))))


def _piece_density(manifold, piece, pts):
    if piece.chart is None:
        q = manifold.nearest_representative(pts, piece.coeff.support.center)
        return piece.coeff(q)
    chart = piece.chart
    inside = chart.contains(pts)
    out = np.zeros(len(pts))
    if np.any(inside):
        p = pts[inside]
        out[inside] = piece.coeff(chart.forward(p)) * chart.det(p)
    return out


def _piece_integral(piece, f, breakpoints, points):
    coeff = piece.coeff
    chart = piece.chart
    if f is None:
        if points is None:
            return coeff.integral()
        return quad_compact(coeff, coeff.support, points=points)
    if chart is None:
        integrand = lambda y: f(y) * coeff(y)  # noqa: E731
        bps = tuple(breakpoints)
    else:
        integrand = lambda y: f(chart.inverse(y)) * coeff(y)  # noqa: E731
        bps = tuple(float(chart.forward(np.array([[b]]))[0, 0]) for b in breakpoints
                    if chart.contains(np.array([[b]]))[0]) if coeff.dim == 1 else ()
    return quad_compact(integrand, coeff.support, breakpoints=bps, points=points)


def chart_form(manifold: "Manifold", chart: Chart, coeff: TestFunction) -> NForm:
    """``psi^*(coeff d^n y)`` for a coefficient compactly supported in the chart image."""
    return NForm(manifold, [Piece(coeff, chart)])


def density_form(manifold: "Manifold", coeff: TestFunction) -> NForm:
    """Form with the given density in parameter coordinates."""
    return NForm(manifold, [Piece(coeff, None)])


def integrate_form(omega: NForm) -> float:
    """``int_M omega``."""
    return omega.integrate()


def lie_form(field: VectorField, omega: NForm) -> NForm:
    """Lie derivative of a top-degree form: ``L_X(rho d^n y) = div(rho X) d^n y`` chartwise."""
    if field.zero:
        return NForm(omega.manifold, [])
    pieces = []
    for piece in omega.pieces:
        local = field.in_chart(piece.chart)
        coeff = piece.coeff

        def f(y, coeff=coeff, local=local):
            return np.sum(coeff.gradient(y) * local(y), axis=1) + coeff(y) * local.divergence(y)

        pieces.append(Piece(TestFunction(coeff.dim, f, coeff.support, None, f"L({coeff.name})"),
                            piece.chart, piece.weight))
    return NForm(omega.manifold, pieces)


def pullback_form_by_flow(field: VectorField, omega: NForm, t: float, steps: int = 64) -> Callable:
    """Density of ``Fl_t^* omega`` as a function of parameter points (oracle for :func:`lie_form`)."""
    def dens(q):
        moved, jac = field.flow(q, t, steps, with_jacobian=True)
        return omega.density(moved) * np.linalg.det(jac)

    return dens


# Two-point (kernel-valued) maps --------------------------------------------------

FormMap = Callable[[np.ndarray], NForm]


def lie_q_slot(field: VectorField, form_map: FormMap) -> FormMap:
    """``L_X`` acting in the form slot of ``p -> F(p)``."""
    return lambda p: lie_form(field, form_map(p))


def lie_p_slot(field: VectorField, form_map: FormMap, step: float) -> FormMap:
    """``L'_X`` acting in the parameter slot: central difference of ``F`` along ``X`` at ``p``."""
    def moved(p):
        p = np.asarray(p, dtype=float).reshape(-1)
        v = field(p[None, :])[0]
        plus = form_map(p + step * v)
        minus = form_map(p - step * v)
        return (plus - minus) * (0.5 / step)

    return moved


def lie_two_point(field: VectorField, form_map: FormMap, step: float) -> FormMap:
    """The combined operator ``L'_X + L_X``."""
    p_slot = lie_p_slot(field, form_map, step)
    q_slot = lie_q_slot(field, form_map)
    return lambda p: p_slot(p) + q_slot(p)


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

class Metric:
    """Riemannian metric ``h(p)`` in parameter coordinates (``(N, n, n)`` matrices)."""

    def __init__(self, dim: int, matrix: Callable, name: str = "h", constant: bool = False):
        self.dim = dim
        self._matrix = matrix
        self.name = name
        self.constant = constant

    def __call__(self, p) -> np.ndarray:
        pts = as_points(p, self.dim)
        return np.asarray(self._matrix(pts), dtype=float).reshape(len(pts), self.dim, self.dim)

    def scaled(self, c: float) -> "Metric":
        return Metric(self.dim, lambda p: c * self(p), f"{c:g}*{self.name}", self.constant)

    def check(self, p) -> bool:
        m = self(p)
        sym = np.allclose(m, np.transpose(m, (0, 2, 1)), atol=1e-12)
        return bool(sym and np.all(np.linalg.eigvalsh(m) > 0))


def euclidean_metric(dim: int) -> Metric:
    return Metric(dim, lambda p: np.broadcast_to(np.eye(dim), (len(p), dim, dim)).copy(), "euclid", True)


def conformal_metric(dim: int, u: SmoothFunction) -> Metric:
    """``exp(2u) * euclidean``."""
    return Metric(dim, lambda p: np.exp(2.0 * u(p))[:, None, None] * np.eye(dim)[None], f"exp(2{u.name})")


def _distance_1d(metric, manifold, p: float, q: float) -> float:
    speed = lambda t: math.sqrt(float(metric(np.array([[t]]))[0, 0, 0]))  # noqa: E731
    if not manifold.periodic[0]:
        a, b = sorted((p, q))
        return sp_integrate.quad(speed, a, b, epsabs=1e-12, epsrel=1e-12)[0]
    d = float(manifold.displacement(np.array([[p]]), np.array([[q]]))[0, 0])
    forward = sp_integrate.quad(speed, p, p + d, epsabs=1e-12, epsrel=1e-12)[0] if d > 0 else \
        sp_integrate.quad(speed, p + d, p, epsabs=1e-12, epsrel=1e-12)[0]
    total = sp_integrate.quad(speed, -math.pi, math.pi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return min(forward, total - forward)


def _ball_endpoints_1d(metric, manifold, p: float, radius: float):
    speed = lambda t: math.sqrt(float(metric(np.array([[t]]))[0, 0, 0]))  # noqa: E731
    out = []
    for sign in (1.0, -1.0):
        g = lambda s: sp_integrate.quad(speed, min(p, p + sign * s), max(p, p + sign * s),  # noqa: E731
                                        epsabs=1e-13, epsrel=1e-13)[0] - radius
        hi = radius
        while g(hi) < 0:
            hi *= 2.0
        out.append(p + sign * optimize.brentq(g, 0.0, hi, xtol=1e-14))
    return out


def _grid_distances(metric, manifold, p, half_width, n=81):
    """Dijkstra distances from ``p`` on a local grid (16-neighbour stencil)."""
    axes = [np.linspace(c - half_width, c + half_width, n) for c in p]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    idx = np.arange(n * n).reshape(n, n)
    h = 2 * half_width / (n - 1)
    offsets = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)]
    rows, cols, vals = [], [], []
    for di, dj in offsets:
        i0, i1 = max(0, -di), n - max(0, di)
        j0, j1 = max(0, -dj), n - max(0, dj)
        a = idx[i0:i1, j0:j1].ravel()
        b = idx[i0 + di:i1 + di, j0 + dj:j1 + dj].ravel()
        mid = 0.5 * (grid[a] + grid[b])
        delta = np.array([di * h, dj * h])
        m = metric(mid)
        length = np.sqrt(np.einsum("i,nij,j->n", delta, m, delta))
        rows.append(a)
        cols.append(b)
        vals.append(length)
    graph = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n * n, n * n)).tocsr()
    center = idx[n // 2, n // 2]
    dist = csgraph.dijkstra(graph, directed=False, indices=center)
    return grid, dist


def riemann_ball_check(h1: Metric, h2: Metric, manifold: "Manifold", points, eps_list,
                       margin: float = 1e6) -> dict:
    """Smallest ``C`` with ``B^{(2)}_eps(p)`` inside ``B^{(1)}_{C eps}(p)`` over the samples.

    In one dimension distances are integrals of ``sqrt(h)`` and ball endpoints
    are found by root finding.  In two dimensions constant metrics use the
    closed form; other metrics use Dijkstra distances on a local grid.
    """
    pts = as_points(points, manifold.dim)
    eps_list = [float(e) for e in eps_list]
    ratios = []
    for p in pts:
        for eps in eps_list:
            if manifold.dim == 1:
                ends = _ball_endpoints_1d(h2, manifold, float(p[0]), eps)
                d1 = max(_distance_1d(h1, manifold, float(p[0]), e) for e in ends)
                ratios.append(d1 / eps)
            elif h1.constant and h2.constant:
                m1, m2 = h1(p[None, :])[0], h2(p[None, :])[0]
                # max of sqrt(v'm1 v) subject to v'm2 v = 1
                w = np.linalg.eigvals(np.linalg.solve(m2, m1))
                ratios.append(float(np.sqrt(np.max(w.real))))
            else:
                half = 4.0 * eps
                grid, d2 = _grid_distances(h2, manifold, p, half)
                _, d1 = _grid_distances(h1, manifold, p, half)
                inside = d2 <= eps
                ratios.append(float(np.max(d1[inside]) / eps))
    c = float(np.max(ratios)) if ratios else math.inf
    return {"C": c, "eps0": max(eps_list), "pass": bool(np.isfinite(c) and c < margin),
            "ratios": [float(r) for r in ratios]}


# ----------------------------------------------------------------------------
# Manifolds
# ----------------------------------------------------------------------------

class Manifold:
    """A shipped example manifold: interval, circle or flat torus."""

    def __init__(self, name: str, dim: int, param_box: Box, periodic: Sequence[bool],
                 charts: Sequence[Chart], chart_axes: Sequence[tuple], params: dict):
        self.name = name
        self.dim = dim
        self.param_box = param_box
        self.periodic = tuple(bool(b) for b in periodic)
        self.charts = tuple(charts)
        self.chart_axes = tuple(chart_axes)
        self.params = dict(params)
        self.pou = PartitionOfUnity(self)
        self._omega_ref = None

    def canonical(self, p) -> np.ndarray:
        """Parameter points with periodic axes wrapped into the fundamental box."""
        pts = as_points(p, self.dim).copy()
        for ax, per in enumerate(self.periodic):
            if per:
                pts[:, ax] = wrap_angle(pts[:, ax], self.param_box.lo[ax])
        return pts

    def nearest_representative(self, p, center) -> np.ndarray:
        """For periodic axes, the representative of ``p`` closest to ``center``."""
        pts = as_points(p, self.dim).copy()
        c = np.asarray(center, dtype=float)
        for ax, per in enumerate(self.periodic):
            if per:
                pts[:, ax] = c[ax] + wrap_angle(pts[:, ax] - c[ax], -math.pi)
        return pts

    def displacement(self, p, q) -> np.ndarray:
        """``q - p`` using the shortest representative on periodic axes."""
        d = as_points(q, self.dim) - as_points(p, self.dim)
        for ax, per in enumerate(self.periodic):
            if per:
                d[:, ax] = wrap_angle(d[:, ax], -math.pi)
        return d

    def contains(self, p) -> np.ndarray:
        pts = as_points(p, self.dim)
        ok = np.ones(len(pts), dtype=bool)
        for ax, per in enumerate(self.periodic):
            if not per:
                ok &= (pts[:, ax] > self.param_box.lo[ax]) & (pts[:, ax] < self.param_box.hi[ax])
        return ok

    def chart_index(self, name: str) -> int:
        for i, c in enumerate(self.charts):
            if c.name == name:
                return i
        raise KeyError(f"no chart named {name!r} on {self.name}")

    def omega_ref(self) -> NForm:
        """A fixed smooth form of total integral one (normalized bump in parameter coordinates)."""
        if self._omega_ref is None:
            center = self.param_box.center.copy()
            for ax, per in enumerate(self.periodic):
                if per:
                    center[ax] = 0.0
            radius = 1.0 if all(self.periodic) else 0.25 * float(np.min(self.param_box.widths))
            b = bump(self.dim, radius)
            shifted = TestFunction(self.dim, lambda y: b(y - center), b.support.affine(1.0, center),
                                   lambda y: b.gradient(y - center), "omega_ref")
            total = shifted.integral()
            self._omega_ref = density_form(self, shifted * (1.0 / total))
        return self._omega_ref

    def sample_points(self, n: int) -> np.ndarray:
        axes = []
        for ax in range(self.dim):
            lo, hi = self.param_box.lo[ax], self.param_box.hi[ax]
            if self.periodic[ax]:
                axes.append(np.linspace(lo, hi, n, endpoint=False))
            else:
                axes.append(np.linspace(lo, hi, n + 2)[1:-1])
        return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)

    def to_dict(self) -> dict:
        return {"manifold": self.name, "params": dict(self.params)}

    def __repr__(self) -> str:
        return f"<Manifold {self.name} dim={self.dim}>"


def _circle_axis_charts(warp_a: float, warp_b: float):
    a = AxisChart(-math.pi, math.pi, AxisMap(warp=warp_a), periodic=True)
    b = AxisChart(0.0, TWO_PI, AxisMap(warp=warp_b), periodic=True)
    return a, b


def interval(a: float = -2.0, b: float = 2.0) -> Manifold:
    """Open interval with the identity chart."""
    if not b > a:
        raise ValueError("interval needs a < b")
    chart = Chart("id", [AxisChart(a, b, AxisMap())])
    return Manifold("interval", 1, Box((a,), (b,)), [False], [chart], [(0,)], {"a": a, "b": b})


def circle(warp: float = 0.0) -> Manifold:
    """Unit circle by angle, with charts on ``(-pi, pi)`` and ``(0, 2 pi)``.

    The second chart is ``theta -> theta + warp sin theta`` (identity for ``warp = 0``).
    """
    ax_a, ax_b = _circle_axis_charts(0.0, warp)
    charts = [Chart("A", [ax_a]), Chart("B", [ax_b])]
    return Manifold("circle", 1, Box((-math.pi,), (math.pi,)), [True], charts, [(0,), (1,)],
                    {"warp": warp})


def torus(warp: float = 0.0) -> Manifold:
    """Flat 2-torus with the four product charts of two circle atlases."""
    ax = _circle_axis_charts(0.0, warp)
    charts, axes = [], []
    for i, j in itertools.product(range(2), range(2)):
        charts.append(Chart("AB"[i] + "AB"[j], [ax[i], ax[j]]))
        axes.append((i, j))
    return Manifold("torus", 2, Box((-math.pi, -math.pi), (math.pi, math.pi)), [True, True],
                    charts, axes, {"warp": warp})


MANIFOLDS = {"interval": interval, "circle": circle, "torus": torus}


def make_manifold(config: dict) -> Manifold:
    """Build a manifold from ``{"manifold": name, "params": {...}}``."""
    name = config["manifold"]
    if name not in MANIFOLDS:
        raise KeyError(f"unknown manifold {name!r}; choose from {sorted(MANIFOLDS)}")
    return MANIFOLDS[name](**config.get("params", {}))
