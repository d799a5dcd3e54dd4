"""Concrete distributions on open sets of R^n and on the example manifolds.

Local distributions act on :class:`~gfk.mollifier.TestFunction` objects;
manifold distributions act on compactly supported n-forms
(:class:`~gfk.manifold.NForm`).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .calculus import Box, gauss_rule, quad_compact
from .diffeo import Diffeo, push_test_function
from .manifold import (Chart, Manifold, NForm, Piece, SmoothFunction, VectorField, chart_form,
                       lie_form)
from .mollifier import TestFunction

PV_WINDOW = 1e-3


class DomainError(ValueError):
    """A test function or form is not supported inside the domain of a distribution."""


def _gauss_integral(f, lo: float, hi: float, panels: int = 64) -> float:
    if hi <= lo:
        return 0.0
    nodes, weights = gauss_rule(Box((lo,), (hi,)), panels, 10)
    return float(np.dot(weights, f(nodes)))


def _divergence_of_product(phi: TestFunction, field: VectorField) -> TestFunction:
    """``div(phi X) = grad phi . X + phi div X`` as a test function."""
    def f(y):
        return np.sum(phi.gradient(y) * field(y), axis=1) + phi(y) * field.divergence(y)

    return TestFunction(phi.dim, f, phi.support, None, f"div({phi.name}X)")


# ----------------------------------------------------------------------------
# Local distributions
# ----------------------------------------------------------------------------

class LocalDistribution:
    """Distribution on an open box ``domain`` of R^dim (``None``: all of R^dim)."""

    kind = "abstract"

    def __init__(self, dim: int, domain: Box | None = None):
        self.dim = dim
        self.domain = domain

    def pair(self, phi: TestFunction) -> float:
        """``<u, phi>``."""
        self._check(phi)
        return float(self._pair(phi))

    __call__ = pair

    def magnitude(self, phi: TestFunction) -> float:
        """Size of the terms entering the pairing; sets the numerical resolution."""
        return abs(self.pair(phi))

    def _pair(self, phi):
        raise NotImplementedError

    def _check(self, phi: TestFunction) -> None:
        if phi.dim != self.dim:
            raise DomainError(f"test function of dimension {phi.dim} paired with a {self.dim}-d distribution")
        if self.domain is not None:
            s, d = phi.support, self.domain
            if np.any(np.asarray(s.lo) < np.asarray(d.lo)) or np.any(np.asarray(s.hi) > np.asarray(d.hi)):
                raise DomainError(f"support {s} escapes the domain {d}")

    @property
    def singular_points(self) -> tuple:
        return ()

    def derivative(self, alpha) -> "LocalDistribution":
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) == 0:
            return self
        return Derivative(self, alpha)

    def partial(self, i: int) -> "LocalDistribution":
        return self.derivative(tuple(int(j == i) for j in range(self.dim)))

    def times(self, g: SmoothFunction) -> "LocalDistribution":
        return Multiplied(self, g)

    def __add__(self, other):
        return Combination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return Combination([(1.0, self), (-1.0, other)])

    def __mul__(self, c):
        return Combination([(float(c), self)])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.to_dict()}>"


class Delta(LocalDistribution):
    """``weight * delta_at``."""

    kind = "delta"

    def __init__(self, at=0.0, weight: float = 1.0, dim: int | None = None, domain: Box | None = None):
        at = np.atleast_1d(np.asarray(at, dtype=float))
        super().__init__(dim or len(at), domain)
        self.at = at
        self.weight = float(weight)

    def _pair(self, phi):
        return self.weight * phi(self.at[None, :])[0]

    def magnitude(self, phi):
        return abs(self._pair(phi))

    @property
    def singular_points(self):
        return (tuple(self.at),)

    def to_dict(self):
        return {"kind": "delta", "at": self.at.tolist(), "weight": self.weight}


class Heaviside(LocalDistribution):
    """Indicator of ``[at, inf)`` in one dimension."""

    kind = "heaviside"

    def __init__(self, at: float = 0.0, domain: Box | None = None):
        super().__init__(1, domain)
        self.at = float(at)

    def _pair(self, phi):
        lo, hi = phi.support.lo[0], phi.support.hi[0]
        if hi <= self.at:
            return 0.0
        if lo >= self.at:
            return phi.integral()
        return _gauss_integral(phi, self.at, hi)

    def magnitude(self, phi):
        lo, hi = phi.support.lo[0], phi.support.hi[0]
        return _gauss_integral(lambda y: np.abs(phi(y)), max(lo, self.at), hi)

    @property
    def singular_points(self):
        return ((self.at,),)

    def to_dict(self):
        return {"kind": "heaviside", "at": self.at}


class PrincipalValueInvX(LocalDistribution):
    """``pv(1/x)``, paired as ``int_0^R (phi(y) - phi(-y)) / y dy`` whose integrand is smooth.

    ``h`` is the width of the window around the origin used by :meth:`magnitude`.
    """

    kind = "pv_inv_x"

    def __init__(self, h: float = PV_WINDOW, domain: Box | None = None):
        super().__init__(1, domain)
        self.h = float(h)

    def _pair(self, phi):
        lo, hi = phi.support.lo[0], phi.support.hi[0]
        reach = max(abs(lo), abs(hi))
        odd = lambda y: (phi(y) - phi(-y)) / y[:, 0]  # noqa: E731
        edges = sorted({0.0, reach, *[abs(c) for c in (lo, hi) if 0.0 < abs(c) < reach]})
        return sum(_gauss_integral(odd, a, b) for a, b in zip(edges[:-1], edges[1:]))

    def magnitude(self, phi):
        lo, hi = phi.support.lo[0], phi.support.hi[0]
        h = self.h
        absinv = lambda y: np.abs(phi(y) / y[:, 0])  # noqa: E731
        out = _gauss_integral(absinv, max(lo, h), hi) + _gauss_integral(absinv, lo, min(hi, -h))
        return out + 2 * h * float(np.max(np.abs(phi.gradient(np.linspace(-h, h, 5)[:, None]))))

    @property
    def singular_points(self):
        return ((0.0,),)

    def to_dict(self):
        return {"kind": "pv_inv_x", "h": self.h}


class Regular(LocalDistribution):
    """Locally integrable function ``f``; ``breakpoints`` mark jumps (1D)."""

    kind = "regular"

    def __init__(self, f: Callable, dim: int = 1, breakpoints: Sequence[float] = (),
                 domain: Box | None = None, name: str | None = None):
        super().__init__(dim, domain)
        self.f = f
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.name = name or getattr(f, "name", "f")

    def _pair(self, phi):
        return quad_compact(lambda y: self.f(y) * phi(y), phi.support, breakpoints=self.breakpoints)

    def magnitude(self, phi):
        return quad_compact(lambda y: np.abs(self.f(y) * phi(y)), phi.support,
                            breakpoints=self.breakpoints)

    @property
    def singular_points(self):
        return tuple((b,) for b in self.breakpoints)

    def to_dict(self):
        return {"kind": "regular", "f": self.name}


class Derivative(LocalDistribution):
    """``d^alpha u``: pairs as ``(-1)^{|alpha|} <u, d^alpha phi>``."""

    kind = "derivative"

    def __init__(self, base: LocalDistribution, alpha):
        super().__init__(base.dim, base.domain)
        self.base = base
        self.alpha = tuple(int(a) for a in alpha)

    def _pair(self, phi):
        return (-1.0) ** sum(self.alpha) * self.base.pair(phi.derivative(self.alpha))

    def magnitude(self, phi):
        return self.base.magnitude(phi.derivative(self.alpha))

    @property
    def singular_points(self):
        return self.base.singular_points

    def derivative(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        return Derivative(self.base, tuple(a + b for a, b in zip(self.alpha, alpha)))

    def to_dict(self):
        return {"kind": "derivative", "of": self.base.to_dict(), "alpha": list(self.alpha)}


class Combination(LocalDistribution):
    kind = "combination"

    def __init__(self, terms):
        flat = []
        for c, u in terms:
            if isinstance(u, Combination):
                flat.extend((c * c2, u2) for c2, u2 in u.terms)
            else:
                flat.append((float(c), u))
        super().__init__(flat[0][1].dim, flat[0][1].domain)
        self.terms = tuple(flat)

    def _pair(self, phi):
        return sum(c * u.pair(phi) for c, u in self.terms)

    def magnitude(self, phi):
        return sum(abs(c) * u.magnitude(phi) for c, u in self.terms)

    @property
    def singular_points(self):
        return tuple(dict.fromkeys(sp for _, u in self.terms for sp in u.singular_points))

    def to_dict(self):
        return {"kind": "combination", "terms": [[c, u.to_dict()] for c, u in self.terms]}


class Multiplied(LocalDistribution):
    """``g u`` for smooth ``g``."""

    kind = "product"

    def __init__(self, base: LocalDistribution, g: SmoothFunction):
        super().__init__(base.dim, base.domain)
        self.base = base
        self.g = g

    def _pair(self, phi):
        return self.base.pair(phi.multiply(self.g, self.g.gradient, self.g.name))

    def magnitude(self, phi):
        return self.base.magnitude(phi.multiply(self.g, self.g.gradient, self.g.name))

    @property
    def singular_points(self):
        return self.base.singular_points

    def to_dict(self):
        return {"kind": "product", "g": self.g.name, "of": self.base.to_dict()}


class PulledBack(LocalDistribution):
    """``mu^* u`` acting by ``<u, (phi o mu^{-1}) |det D mu^{-1}|>``."""

    kind = "pullback"

    def __init__(self, base: LocalDistribution, mu: Diffeo):
        super().__init__(base.dim, mu.source)
        self.base = base
        self.mu = mu

    def _pair(self, phi):
        return self.base.pair(push_test_function(phi, self.mu))

    def magnitude(self, phi):
        return self.base.magnitude(push_test_function(phi, self.mu))

    @property
    def singular_points(self):
        pts = self.base.singular_points
        if not pts:
            return ()
        return tuple(tuple(r) for r in self.mu.inverse(np.array(pts)))

    def to_dict(self):
        return {"kind": "pullback", "of": self.base.to_dict(), "mu": self.mu.name}


class LieDerivedLocal(LocalDistribution):
    """``L_X u``: ``<L_X u, phi> = -<u, div(phi X)>``."""

    kind = "lie"

    def __init__(self, base: LocalDistribution, field: VectorField):
        super().__init__(base.dim, base.domain)
        self.base = base
        self.field = field

    def _pair(self, phi):
        if self.field.zero:
            return 0.0
        return -self.base.pair(_divergence_of_product(phi, self.field))

    def magnitude(self, phi):
        if self.field.zero:
            return 0.0
        return self.base.magnitude(_divergence_of_product(phi, self.field))

    @property
    def singular_points(self):
        return self.base.singular_points

    def to_dict(self):
        return {"kind": "lie", "field": self.field.name, "of": self.base.to_dict()}


class ChartRepresentation(LocalDistribution):
    """Local representation of a manifold distribution in a chart, by definition:
    ``phi -> <u, psi^*(phi d^n y)>``."""

    kind = "chart_rep"

    def __init__(self, base: "ManifoldDistribution", chart: Chart):
        super().__init__(chart.dim, chart.image_box)
        self.base = base
        self.chart = chart

    def _pair(self, phi):
        return self.base.pair(chart_form(self.base.manifold, self.chart, phi))

    def magnitude(self, phi):
        return self.base.magnitude(chart_form(self.base.manifold, self.chart, phi))

    @property
    def singular_points(self):
        pts = [p for p in self.base.singular_points if self.chart.contains(np.array([p]))[0]]
        return tuple(tuple(r) for r in self.chart.forward(np.array(pts))) if pts else ()


# ----------------------------------------------------------------------------
# Manifold distributions
# ----------------------------------------------------------------------------

class ManifoldDistribution:
    """Continuous linear functional on compactly supported n-forms of ``manifold``."""

    kind = "abstract"

    def __init__(self, manifold: Manifold):
        self.manifold = manifold

    def pair(self, omega: NForm) -> float:
        return float(self._pair(omega))

    __call__ = pair

    def magnitude(self, omega: NForm) -> float:
        return abs(self.pair(omega))

    def _pair(self, omega):
        raise NotImplementedError

    @property
    def singular_points(self) -> tuple:
        return ()

    def __add__(self, other):
        return CombinationOnManifold([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return CombinationOnManifold([(1.0, self), (-1.0, other)])

    def __mul__(self, c):
        return CombinationOnManifold([(float(c), self)])

    __rmul__ = __mul__

    def to_dict(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.to_dict()}>"


class RegularOnManifold(ManifoldDistribution):
    """``omega -> int f omega`` for a (piecewise) smooth function of parameter points."""

    kind = "regular"

    def __init__(self, manifold: Manifold, f: Callable, breakpoints: Sequence[float] = (),
                 name: str | None = None):
        super().__init__(manifold)
        self.f = f
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.name = name or getattr(f, "name", "f")

    def _pair(self, omega):
        return omega.integrate(self.f, self.breakpoints)

    def magnitude(self, omega):
        absform = NForm(omega.manifold, [Piece(_absolute(p.coeff), p.chart, abs(p.weight))
                                         for p in omega.pieces])
        return absform.integrate(lambda p: np.abs(self.f(p)), self.breakpoints)

    @property
    def singular_points(self):
        return tuple((b,) for b in self.breakpoints)

    def to_dict(self):
        return {"kind": "regular", "f": self.name}


def _absolute(tf: TestFunction) -> TestFunction:
    return TestFunction(tf.dim, lambda y: np.abs(tf(y)), tf.support, None, f"|{tf.name}|")


def heaviside_on(manifold: Manifold, at: float = 0.0) -> RegularOnManifold:
    """Indicator of ``p >= at`` on the interval."""
    if manifold.dim != 1 or manifold.periodic[0]:
        raise ValueError("the Heaviside function is provided on the interval only")
    f = SmoothFunction(1, lambda p: (p[:, 0] >= at).astype(float), None, "H")
    return RegularOnManifold(manifold, f, (at,), "H")


class PointMass(ManifoldDistribution):
    """``weight * delta_{p0}``, pairing with the density with respect to ``d^n p``."""

    kind = "delta"

    def __init__(self, manifold: Manifold, p0, weight: float = 1.0):
        super().__init__(manifold)
        self.p0 = manifold.canonical(np.atleast_1d(np.asarray(p0, dtype=float)))[0]
        self.weight = float(weight)

    def _pair(self, omega):
        return self.weight * omega.density(self.p0[None, :])[0]

    def magnitude(self, omega):
        return abs(self.weight) * sum(abs(p.weight) * abs(NForm(omega.manifold, [p]).density(self.p0[None, :])[0])
                                      for p in omega.pieces)

    @property
    def singular_points(self):
        return (tuple(self.p0),)

    def to_dict(self):
        return {"kind": "delta", "at": self.p0.tolist(), "weight": self.weight}


class CombinationOnManifold(ManifoldDistribution):
    kind = "combination"

    def __init__(self, terms):
        flat = []
        for c, u in terms:
            if isinstance(u, CombinationOnManifold):
                flat.extend((c * c2, u2) for c2, u2 in u.terms)
            else:
                flat.append((float(c), u))
        super().__init__(flat[0][1].manifold)
        self.terms = tuple(flat)

    def _pair(self, omega):
        return sum(c * u.pair(omega) for c, u in self.terms)

    def magnitude(self, omega):
        return sum(abs(c) * u.magnitude(omega) for c, u in self.terms)

    @property
    def singular_points(self):
        return tuple(dict.fromkeys(sp for _, u in self.terms for sp in u.singular_points))

    def to_dict(self):
        return {"kind": "combination", "terms": [[c, u.to_dict()] for c, u in self.terms]}


class MultipliedOnManifold(ManifoldDistribution):
    """``f u`` for smooth ``f``: ``<f u, omega> = <u, f omega>``."""

    kind = "product"

    def __init__(self, base: ManifoldDistribution, f: SmoothFunction):
        super().__init__(base.manifold)
        self.base = base
        self.f = f

    def _pair(self, omega):
        return self.base.pair(omega.times(self.f))

    def magnitude(self, omega):
        return self.base.magnitude(omega.times(self.f))

    @property
    def singular_points(self):
        return self.base.singular_points

    def to_dict(self):
        return {"kind": "product", "f": self.f.name, "of": self.base.to_dict()}


class LieDerivedOnManifold(ManifoldDistribution):
    """``<L_X u, omega> = -<u, L_X omega>``."""

    kind = "lie"

    def __init__(self, base: ManifoldDistribution, field: VectorField):
        super().__init__(base.manifold)
        self.base = base
        self.field = field

    def _pair(self, omega):
        if self.field.zero:
            return 0.0
        return -self.base.pair(lie_form(self.field, omega))

    def magnitude(self, omega):
        if self.field.zero:
            return 0.0
        return self.base.magnitude(lie_form(self.field, omega))

    @property
    def singular_points(self):
        return self.base.singular_points

    def to_dict(self):
        return {"kind": "lie", "field": self.field.name, "of": self.base.to_dict()}


# ----------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------

def pair(u, arg) -> float:
    """``<u, arg>`` for a local distribution and test function, or a manifold
    distribution and n-form."""
    return u.pair(arg)


def pullback_dist(u: LocalDistribution, mu: Diffeo) -> LocalDistribution:
    """``mu^* u`` with ``<mu^* u, phi> = <u, (phi o mu^{-1}) |det D mu^{-1}|>``.

    Point masses, Heaviside functions, regular functions, multiples and
    combinations are pulled back in closed form; other kinds through the
    defining transport of test functions.
    """
    if isinstance(u, Delta):
        a = u.at[None, :]
        return Delta(mu.inverse(a)[0], u.weight * mu.det_inverse_jacobian(a)[0], u.dim, mu.source)
    if isinstance(u, Heaviside):
        return Heaviside(float(mu.inverse(np.array([[u.at]]))[0, 0]), mu.source)
    if isinstance(u, Regular):
        bps = tuple(float(mu.inverse(np.array([[b]]))[0, 0]) for b in u.breakpoints) if u.dim == 1 else ()
        f = u.f
        return Regular(lambda x: f(mu(x)), u.dim, bps, mu.source, f"{u.name}o{mu.name}")
    if isinstance(u, Combination):
        return Combination([(c, pullback_dist(v, mu)) for c, v in u.terms])
    if isinstance(u, Multiplied):
        g = u.g
        moved = SmoothFunction(g.dim, lambda x: g(mu(x)), None, f"{g.name}o{mu.name}")
        return Multiplied(pullback_dist(u.base, mu), moved)
    return PulledBack(u, mu)


def local_rep_dist(u: ManifoldDistribution, chart: Chart) -> LocalDistribution:
    """Local representation ``phi -> <u, psi^*(phi d^n y)>`` as a distribution on the chart image."""
    if isinstance(u, RegularOnManifold):
        f = u.f
        bps = tuple(float(chart.forward(np.array([[b]]))[0, 0]) for b in u.breakpoints
                    if chart.contains(np.array([[b]]))[0]) if chart.dim == 1 else ()
        return Regular(lambda y: f(chart.inverse(y)), chart.dim, bps, chart.image_box,
                       f"{u.name}o{chart.name}^-1")
    if isinstance(u, PointMass):
        p = u.p0[None, :]
        if not chart.contains(p)[0]:
            return Delta(chart.image_box.center, 0.0, chart.dim, chart.image_box)
        return Delta(chart.forward(p)[0], u.weight * chart.det(p)[0], chart.dim, chart.image_box)
    if isinstance(u, CombinationOnManifold):
        return Combination([(c, local_rep_dist(v, chart)) for c, v in u.terms])
    if isinstance(u, LieDerivedOnManifold):
        return LieDerivedLocal(local_rep_dist(u.base, chart), u.field.in_chart(chart))
    return ChartRepresentation(u, chart)


def lie_derivative_dist(u, field: VectorField):
    """``L_X u`` acting by ``omega -> -<u, L_X omega>``."""
    if isinstance(u, ManifoldDistribution):
        return LieDerivedOnManifold(u, field)
    return LieDerivedLocal(u, field)


def multiply_dist(f: SmoothFunction, u):
    """``f u`` for a smooth function ``f``."""
    if isinstance(u, PointMass):
        return PointMass(u.manifold, u.p0, u.weight * float(f(u.p0[None, :])[0]))
    if isinstance(u, RegularOnManifold):
        g = u.f
        return RegularOnManifold(u.manifold, lambda p: f(p) * g(p), u.breakpoints, f"{f.name}*{u.name}")
    if isinstance(u, ManifoldDistribution):
        return MultipliedOnManifold(u, f)
    if isinstance(u, Delta):
        return Delta(u.at, u.weight * float(f(u.at[None, :])[0]), u.dim, u.domain)
    return Multiplied(u, f)


LOCAL_KINDS = {"delta", "heaviside", "pv_inv_x", "regular", "derivative"}
