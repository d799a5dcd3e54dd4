"""Local theory on open sets of R^n.

Representatives are functions ``R(phi, x)`` of a unit-integral test function
and a point.  They are tested along paths ``eps -> R(T_x S_eps phi(eps, x), x)``
built from test-object families, and the resulting epsilon sequences are
turned into moderateness and negligibility verdicts.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calculus import (SLACK, AsymptoticEstimate, Box, EpsilonLadder, LadderError, SampleGrid,
                       TraceLog, central_gateaux, estimate_order, gateaux, resolution_floor,
                       trapezoid_rule)
from .diffeo import Diffeo, push_test_function
from .distributions import LocalDistribution
from .manifold import SmoothFunction, leibniz_terms
from .mollifier import TestFunction, monomial_table, multi_indices, scale_translate


class DomainViolation(ValueError):
    """A path was evaluated outside the domain of a (weak) test-object family."""


def unit(dim: int, i: int) -> tuple:
    return tuple(int(j == i) for j in range(dim))


# ----------------------------------------------------------------------------
# Representatives
# ----------------------------------------------------------------------------

class LocalGF:
    """Representative ``R(phi, x)`` on ``A_0(Omega) x Omega``.

    Subclasses override :meth:`eval` and, where available, the analytic
    channels :meth:`d1` (first-argument derivative, flagged by ``d1_channel``)
    and :meth:`dx`.
    """

    linear_in_omega = False
    d1_channel = False

    def __init__(self, dim: int, name: str = "R"):
        self.dim = dim
        self.name = name

    def eval(self, phi: TestFunction, x) -> float:
        raise NotImplementedError

    def __call__(self, phi, x) -> float:
        return self.eval(phi, x)

    def magnitude(self, phi: TestFunction, x) -> float:
        """Scale of the terms that make up ``eval``; used as numerical resolution."""
        return abs(self.eval(phi, x))

    def d1(self, phi, x, psi) -> float:
        return central_gateaux(self, phi, x, psi).value

    def dx(self, phi, x, i: int, step: float = 1e-5) -> float:
        """``d/dx_i`` with the test function held fixed."""
        x = np.asarray(x, dtype=float)
        e = np.zeros(self.dim)
        e[i] = step
        return (self.eval(phi, x + e) - self.eval(phi, x - e)) / (2 * step)

    def path_derivative(self, fam: "TestObjectFamily", eps: float, x, alpha):
        """Analytic ``d^alpha_x R(T_x S_eps phi(eps, x), x)`` as ``(value, magnitude)``, or ``None``."""
        return None

    @property
    def singular_points(self) -> tuple:
        return ()

    # algebra
    def __add__(self, other):
        return SumLocal([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return SumLocal([(1.0, self), (-1.0, other)])

    def __mul__(self, other):
        if isinstance(other, LocalGF):
            return ProductLocal(self, other)
        return SumLocal([(float(other), self)])

    def __rmul__(self, other):
        return SumLocal([(float(other), self)])

    def __neg__(self):
        return SumLocal([(-1.0, self)])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class IotaLocal(LocalGF):
    """``(phi, x) -> <u, phi>``."""

    linear_in_omega = True
    d1_channel = True

    def __init__(self, u: LocalDistribution, name: str | None = None):
        super().__init__(u.dim, name or f"iota({u.kind})")
        self.u = u

    def eval(self, phi, x):
        return self.u.pair(phi)

    def magnitude(self, phi, x):
        return self.u.magnitude(phi)

    def d1(self, phi, x, psi):
        return self.u.pair(psi)

    def dx(self, phi, x, i, step=1e-5):
        return 0.0

    def path_derivative(self, fam, eps, x, alpha):
        if not fam.constant:
            return None
        phi = scale_translate(fam(eps, x), eps, x)
        du = self.u.derivative(alpha)
        return du.pair(phi), du.magnitude(phi)

    @property
    def singular_points(self):
        return self.u.singular_points


class SigmaLocal(LocalGF):
    """``(phi, x) -> f(x)``."""

    linear_in_omega = False
    d1_channel = True

    def __init__(self, f: SmoothFunction, name: str | None = None):
        super().__init__(f.dim, name or f"sigma({f.name})")
        self.f = f

    def eval(self, phi, x):
        return float(self.f(np.asarray(x, dtype=float)[None, :])[0])

    def d1(self, phi, x, psi):
        return 0.0

    def dx(self, phi, x, i, step=1e-5):
        return float(self.f.derivative(np.asarray(x, dtype=float)[None, :], unit(self.dim, i))[0])

    def path_derivative(self, fam, eps, x, alpha):
        v = float(self.f.derivative(np.asarray(x, dtype=float)[None, :], alpha)[0])
        return v, abs(v)


class SumLocal(LocalGF):
    """Linear combination ``sum c_k R_k``."""

    d1_channel = True

    def __init__(self, terms):
        flat = []
        for c, r in terms:
            if isinstance(r, SumLocal):
                flat.extend((c * c2, r2) for c2, r2 in r.terms)
            else:
                flat.append((float(c), r))
        self.terms = tuple(flat)
        super().__init__(flat[0][1].dim, " + ".join(f"{c:g}*{r.name}" for c, r in flat))
        self.linear_in_omega = all(r.linear_in_omega for _, r in flat)

    def eval(self, phi, x):
        return sum(c * r.eval(phi, x) for c, r in self.terms)

    def magnitude(self, phi, x):
        return sum(abs(c) * r.magnitude(phi, x) for c, r in self.terms)

    def d1(self, phi, x, psi):
        return sum(c * gateaux(r, phi, x, psi, check=False) for c, r in self.terms)

    def dx(self, phi, x, i, step=1e-5):
        return sum(c * r.dx(phi, x, i, step) for c, r in self.terms)

    def path_derivative(self, fam, eps, x, alpha):
        parts = [r.path_derivative(fam, eps, x, alpha) for _, r in self.terms]
        if any(p is None for p in parts):
            return None
        return (sum(c * p[0] for (c, _), p in zip(self.terms, parts)),
                sum(abs(c) * p[1] for (c, _), p in zip(self.terms, parts)))

    @property
    def singular_points(self):
        return tuple(dict.fromkeys(sp for _, r in self.terms for sp in r.singular_points))


class ProductLocal(LocalGF):
    """Pointwise product ``R * S``."""

    d1_channel = True

    def __init__(self, left: LocalGF, right: LocalGF):
        super().__init__(left.dim, f"({left.name})*({right.name})")
        self.left, self.right = left, right

    def eval(self, phi, x):
        return self.left.eval(phi, x) * self.right.eval(phi, x)

    def magnitude(self, phi, x):
        return self.left.magnitude(phi, x) * self.right.magnitude(phi, x)

    def d1(self, phi, x, psi):
        return (gateaux(self.left, phi, x, psi, check=False) * self.right.eval(phi, x)
                + self.left.eval(phi, x) * gateaux(self.right, phi, x, psi, check=False))

    def dx(self, phi, x, i, step=1e-5):
        return (self.left.dx(phi, x, i, step) * self.right.eval(phi, x)
                + self.left.eval(phi, x) * self.right.dx(phi, x, i, step))

    def path_derivative(self, fam, eps, x, alpha):
        total, mag = 0.0, 0.0
        for coef, beta in leibniz_terms(alpha):
            rest = tuple(a - b for a, b in zip(alpha, beta))
            a = self.left.path_derivative(fam, eps, x, beta)
            b = self.right.path_derivative(fam, eps, x, rest)
            if a is None or b is None:
                return None
            total += coef * a[0] * b[0]
            mag += coef * a[1] * b[1]
        return total, mag

    @property
    def singular_points(self):
        return tuple(dict.fromkeys(self.left.singular_points + self.right.singular_points))


class DerivativeLocal(LocalGF):
    """``D_i R(phi, x) = -d_1 R(phi, x)(d_i phi) + (d_i R)(phi, x)``."""

    def __init__(self, base: LocalGF, i: int):
        super().__init__(base.dim, f"D{i}({base.name})")
        self.base = base
        self.i = i
        self.linear_in_omega = base.linear_in_omega
        self.d1_channel = base.linear_in_omega

    def eval(self, phi, x):
        direction = phi.partial(self.i)
        first = gateaux(self.base, phi, x, direction, check=False)
        return -first + self.base.dx(phi, x, self.i)

    def magnitude(self, phi, x):
        return self.base.magnitude(phi.partial(self.i), x) + abs(self.base.dx(phi, x, self.i))

    def d1(self, phi, x, psi):
        if self.base.linear_in_omega:
            return self.eval(psi, x)
        return central_gateaux(self, phi, x, psi).value

    def dx(self, phi, x, i, step=1e-5):
        return super().dx(phi, x, i, step)

    @property
    def singular_points(self):
        return self.base.singular_points


class PullbackLocal(LocalGF):
    """``(mu^ R)(phi, x) = R((phi o mu^{-1}) |det D mu^{-1}|, mu(x))``."""

    def __init__(self, base: LocalGF, mu: Diffeo):
        super().__init__(base.dim, f"pull({base.name})")
        self.base = base
        self.mu = mu
        self.linear_in_omega = base.linear_in_omega
        self.d1_channel = True

    def _moved(self, phi, x):
        return push_test_function(phi, self.mu), self.mu(np.asarray(x, dtype=float)[None, :])[0]

    def eval(self, phi, x):
        return self.base.eval(*self._moved(phi, x))

    def magnitude(self, phi, x):
        return self.base.magnitude(*self._moved(phi, x))

    def d1(self, phi, x, psi):
        moved, y = self._moved(phi, x)
        return gateaux(self.base, moved, y, push_test_function(psi, self.mu), check=False)

    @property
    def singular_points(self):
        pts = self.base.singular_points
        if not pts:
            return ()
        return tuple(tuple(r) for r in self.mu.inverse(np.array(pts)))


class GenericLocal(LocalGF):
    """Representative from a plain callable ``func(phi, x)``."""

    def __init__(self, dim: int, func: Callable, name: str = "R", linear: bool = False):
        super().__init__(dim, name)
        self._func = func
        self.linear_in_omega = linear

    def eval(self, phi, x):
        return float(self._func(phi, np.asarray(x, dtype=float)))


def iota(u: LocalDistribution) -> IotaLocal:
    return IotaLocal(u)


def sigma(f: SmoothFunction) -> SigmaLocal:
    return SigmaLocal(f)


def derivative_Di(R: LocalGF, i: int) -> LocalGF:
    """The algebra derivative ``D_i R``."""
    if not 0 <= i < R.dim:
        raise ValueError(f"direction {i} out of range for dimension {R.dim}")
    return DerivativeLocal(R, i)


def pullback_local(R: LocalGF, mu: Diffeo) -> LocalGF:
    """``mu^ R`` for a diffeomorphism ``mu`` onto the domain of ``R``."""
    return PullbackLocal(R, mu)


# ----------------------------------------------------------------------------
# Test-object families
# ----------------------------------------------------------------------------

class TestObjectFamily:
    """Map ``(eps, x) -> phi(eps, x)`` of unit-integral test functions centred at the origin.

    Parameters
    ----------
    func : callable
        ``(eps, x) -> TestFunction``.
    support_radius : float
        Radius of a cube containing every ``supp phi(eps, x)`` for ``(eps, x)`` in the domain.
    moment_class : tuple or None
        Claimed class, ``("box", m)`` or ``("delta", m)``.
    domain : callable or None
        ``(eps, xs) -> bool array``; ``None`` means all of ``(0, 1] x Omega``.
    eps0 : callable or None
        ``box -> eps_0`` such that ``(0, eps_0] x box`` lies in the domain.
    constant : bool
        ``phi(eps, x)`` independent of ``eps`` and ``x``.
    """

    __test__ = False

    def __init__(self, dim: int, func: Callable, *, name: str, support_radius: float,
                 moment_class: tuple | None = None, weak: bool = False,
                 domain: Callable | None = None, eps0: Callable | None = None,
                 constant: bool = False, meta: dict | None = None):
        self.dim = dim
        self._func = func
        self.name = name
        self.support_radius = float(support_radius)
        self.moment_class = moment_class
        self.weak = weak
        self._domain = domain
        self._eps0 = eps0
        self.constant = constant
        self.meta = dict(meta or {})

    def __call__(self, eps: float, x) -> TestFunction:
        return self._func(float(eps), np.asarray(x, dtype=float).reshape(self.dim))

    def in_domain(self, eps: float, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        if self._domain is None:
            return np.ones(len(xs), dtype=bool)
        return np.asarray(self._domain(float(eps), xs), dtype=bool)

    def eps0(self, box: Box) -> float:
        if self._eps0 is None:
            return 1.0
        return float(self._eps0(box))

    def to_dict(self) -> dict:
        return {"name": self.name, "moment_class": list(self.moment_class) if self.moment_class else None,
                "weak": self.weak, **self.meta}


def constant_family(phi: TestFunction, moment_class: tuple | None = None,
                    name: str | None = None) -> TestObjectFamily:
    """``phi(eps, x) = phi``."""
    radius = float(np.max(np.abs(np.concatenate([phi.support.lo, phi.support.hi]))))
    if moment_class is None and hasattr(phi, "moment_order"):
        moment_class = ("box", phi.moment_order)
    return TestObjectFamily(phi.dim, lambda eps, x: phi, name=name or phi.name,
                            support_radius=radius, moment_class=moment_class, constant=True)


def injected_family(phi: TestFunction, m: int, amplitude: Callable | None = None,
                    name: str | None = None) -> TestObjectFamily:
    """``phi(eps, x) = phi - eps^m a(x) d_1 phi``.

    The perturbation integrates to zero and has first moment ``eps^m a(x)`` in
    direction 1 (its other moments up to the moment order of ``phi`` vanish),
    so the family is in the box class of order ``m`` but not ``m + 1`` when
    ``a`` does not vanish on the sample set.
    """
    amplitude = amplitude or (lambda x: 1.0)
    d1 = phi.partial(0)
    radius = float(np.max(np.abs(np.concatenate([phi.support.lo, phi.support.hi]))))

    def func(eps, x):
        return phi - d1 * (eps ** m * float(amplitude(x)))

    return TestObjectFamily(phi.dim, func, name=name or f"injected(m={m},{phi.name})",
                            support_radius=radius, moment_class=("box", m),
                            meta={"injected_order": m})


def transform_family(fam: TestObjectFamily, mu: Diffeo) -> TestObjectFamily:
    """Transport a family on the source of ``mu`` to its target.

    ``phi(eps, x)(xi) = phi~(eps, mu^{-1} x)((mu^{-1}(eps xi + x) - mu^{-1} x) / eps)
    * |det D mu^{-1}(eps xi + x)|``, defined where the transported support
    stays inside ``mu``'s domains (a weak family).
    """
    if mu.axis_maps is None:
        raise ValueError("family transport needs a diffeomorphism with per-axis maps")
    r = fam.support_radius
    maps = mu.axis_maps

    def support_box(eps, x, xt):
        lo = [(m(c - eps * r) - xi) / eps for m, c, xi in zip(maps, xt, x)]
        hi = [(m(c + eps * r) - xi) / eps for m, c, xi in zip(maps, xt, x)]
        return Box(tuple(lo), tuple(hi))

    def func(eps, x):
        xt = mu.inverse(x[None, :])[0]
        base = fam(eps, xt)
        box = support_box(eps, x, xt)

        def f(xi):
            y = eps * xi + x
            # increments avoid the 1/eps blow-up of rounding in mu^{-1}(y) - mu^{-1}(x)
            arg = np.stack([m.inverse_increment(c, eps * xi[:, i]) for i, (m, c) in enumerate(zip(maps, xt))],
                           axis=1) / eps
            return base(arg) * mu.det_inverse_jacobian(y)

        return TestFunction(fam.dim, f, box, None, f"transported({base.name})")

    def domain(eps, xs):
        ok = mu.in_target(xs)
        xt = mu.inverse(xs)
        if mu.source is not None:
            lo, hi = np.asarray(mu.source.lo), np.asarray(mu.source.hi)
            ok &= np.all((xt - eps * r > lo) & (xt + eps * r < hi), axis=1)
        ok &= fam.in_domain(eps, xt)
        return ok

    def eps0(box):
        if mu.source is None:
            return fam.eps0(mu.preimage_box(box))
        pre = mu.preimage_box(box)
        gap = min(min(a - b for a, b in zip(pre.lo, mu.source.lo)),
                  min(b - a for a, b in zip(pre.hi, mu.source.hi)))
        if gap <= 0:
            return 0.0
        return min(1.0, 0.999 * gap / r, fam.eps0(pre))

    lipschitz = max(float(np.max(np.abs(m.d1(np.linspace(-50, 50, 2001))))) for m in maps)
    inv_lip = max(float(np.max(np.abs(1.0 / m.d1(np.linspace(-50, 50, 2001))))) for m in maps)
    mc = None
    if fam.moment_class is not None:
        mc = ("box", (fam.moment_class[1] + 1) // 2)
    return TestObjectFamily(fam.dim, func, name=f"transport[{mu.name}]({fam.name})",
                            support_radius=r * lipschitz, moment_class=mc, weak=True,
                            domain=domain, eps0=eps0,
                            meta={"source_family": fam.name, "lipschitz": lipschitz, "inverse_lipschitz": inv_lip})


# ----------------------------------------------------------------------------
# Paths
# ----------------------------------------------------------------------------

_STENCILS = {0: ((0.0, 1.0),), 1: ((-1.0, -0.5), (1.0, 0.5)), 2: ((-1.0, 1.0), (0.0, -2.0), (1.0, 1.0))}


def path_step(eps: float) -> float:
    return max(1e-3 * eps, 1e-7)


def _path_value(R: LocalGF, fam: TestObjectFamily, eps: float, x) -> tuple:
    phi = scale_translate(fam(eps, x), eps, x)
    return R.eval(phi, x), R.magnitude(phi, x)


def path_point(R: LocalGF, fam: TestObjectFamily, eps: float, x, alpha=None,
               analytic: bool = True, step: float | None = None) -> tuple:
    """``(value, magnitude)`` of ``d^alpha_x R(T_x S_eps phi(eps, x), x)``."""
    x = np.asarray(x, dtype=float).reshape(R.dim)
    alpha = tuple(alpha) if alpha is not None else (0,) * R.dim
    if sum(alpha) > 2 or max(alpha) > 2:
        raise ValueError("path derivatives are supported up to total order 2")
    if not fam.in_domain(eps, x)[0]:
        raise DomainViolation(f"(eps={eps:g}, x={x.tolist()}) outside the domain of {fam.name}")
    if sum(alpha) == 0:
        return _path_value(R, fam, eps, x)
    if analytic:
        out = R.path_derivative(fam, eps, x, alpha)
        if out is not None:
            return float(out[0]), float(out[1])
    h = step or path_step(eps)
    total, mag = 0.0, 0.0
    for combo in itertools.product(*[_STENCILS[a] for a in alpha]):
        shift = np.array([c[0] for c in combo]) * h
        weight = float(np.prod([c[1] for c in combo]))
        v, m = _path_value(R, fam, eps, x + shift)
        total += weight * v
        mag += abs(weight) * m
    scale = h ** sum(alpha)
    return total / scale, mag / scale


def eval_test_path(R: LocalGF, fam: TestObjectFamily, eps: float, x, alpha=None,
                   analytic: bool = True) -> float:
    """``d^alpha_x R(T_x S_eps phi(eps, x), x)`` at one point."""
    return path_point(R, fam, eps, x, alpha, analytic)[0]


@dataclass
class PathSweep:
    """Sup over a sample set of a path, on every rung of a ladder."""

    eps: np.ndarray
    sup: np.ndarray
    floor: np.ndarray
    estimate: AsymptoticEstimate
    argmax: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict()}


def sup_sweep(point_fn: Callable, grid: SampleGrid, ladder: EpsilonLadder,
              floor_factor: float = 1e3) -> PathSweep:
    """Evaluate ``point_fn(eps, x) -> (value, magnitude)`` over ``grid`` on each rung.

    The resolution floor of a rung is ``floor_factor * machine eps`` times the
    largest magnitude seen on it.
    """
    eps_values = ladder.eps
    sups, floors, where = [], [], []
    for eps in eps_values:
        pts = grid.points(eps)
        vals, mags = zip(*(point_fn(eps, p) for p in pts))
        vals = np.abs(np.asarray(vals))
        k = int(np.argmax(vals))
        sups.append(vals[k])
        floors.append(float(resolution_floor(np.max(mags), floor_factor)))
        where.append(pts[k].tolist())
    sups, floors = np.asarray(sups), np.asarray(floors)
    est = estimate_order(zip(eps_values, sups), floor=floors)
    return PathSweep(eps_values, sups, floors, est, where)


def _ladder_for(fam: TestObjectFamily, grid: SampleGrid, ladder: EpsilonLadder) -> EpsilonLadder:
    if not fam.weak:
        return ladder
    e0 = fam.eps0(grid.box)
    if e0 <= 0:
        raise LadderError(f"sample box {grid.box} is not inside the domain of {fam.name}")
    return ladder.truncated(e0)


def grid_for(R: LocalGF, grid: SampleGrid, fams: Sequence[TestObjectFamily]) -> SampleGrid:
    """Add the singular points of ``R`` as epsilon-scaled focus points."""
    pts = R.singular_points
    if not pts:
        return grid
    scale = 1.5 * max(f.support_radius for f in fams)
    return grid.with_focus(pts, scale)


# ----------------------------------------------------------------------------
# Classification of families
# ----------------------------------------------------------------------------

def family_moments(fam: TestObjectFamily, eps: float, x, exponents: np.ndarray,
                   points: int | None = None) -> tuple:
    """``(int phi(eps,x)(xi) xi^alpha d xi, int |phi xi^alpha|)`` for all rows of ``exponents``."""
    phi = fam(eps, x)
    if points is None:
        points = 512 if fam.dim == 1 else 160
    nodes, weights = trapezoid_rule(phi.support, points)
    vals = phi(nodes)
    mon = monomial_table(nodes, exponents)
    terms = (weights * vals)[:, None] * mon
    return terms.sum(axis=0), np.abs(terms).sum(axis=0)


def classify_test_object(fam: TestObjectFamily, m: int, K: SampleGrid,
                         ladder: EpsilonLadder | None = None, slack: float = SLACK,
                         trace: TraceLog | None = None) -> dict:
    """Fitted orders of ``sup_K |int phi(eps,x)(xi) xi^alpha d xi|`` for ``1 <= |alpha| <= m``
    and the resulting box and delta class verdicts of order ``m``."""
    if m > 6:
        raise ValueError("classification is supported for m <= 6")
    ladder = _ladder_for(fam, K, ladder or EpsilonLadder())
    alphas = multi_indices(fam.dim, m, 1)
    exps = np.array(alphas, dtype=int)
    xs = K.base_points()
    sups = np.zeros((ladder.length, len(alphas)))
    mags = np.zeros((ladder.length, len(alphas)))
    for k, eps in enumerate(ladder.eps):
        for x in xs:
            v, a = family_moments(fam, eps, x, exps)
            sups[k] = np.maximum(sups[k], np.abs(v))
            mags[k] = np.maximum(mags[k], a)
    orders, box_ok, delta_ok = {}, True, True
    for j, alpha in enumerate(alphas):
        est = estimate_order(zip(ladder.eps, sups[:, j]), floor=resolution_floor(mags[:, j]))
        key = "".join(str(a) for a in alpha)
        orders[key] = est.to_dict()
        box_ok &= est.at_least(m, slack)
        delta_ok &= est.at_least(m + 1 - sum(alpha), slack)
        if trace is not None:
            trace.add(f"moment[{fam.name}][{key}]", ladder.eps, sups[:, j])
    return {"family": fam.name, "m": m, "box": bool(box_ok), "delta": bool(delta_ok),
            "orders": orders, "ladder": ladder.to_dict(), "grid": K.to_dict()}


# ----------------------------------------------------------------------------
# Verdicts
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Moderate:
    alpha_max: int = 2


@dataclass(frozen=True)
class Negligible:
    alpha_max: int = 2
    r: tuple = (1.0,)
    families_by_m: dict = field(default_factory=dict)


def path_sweep(R: LocalGF, fam: TestObjectFamily, K: SampleGrid, ladder: EpsilonLadder,
               alpha, analytic: bool = True, floor_factor: float = 1e3) -> PathSweep:
    ladder = _ladder_for(fam, K, ladder)
    grid = grid_for(R, K, [fam])
    return sup_sweep(lambda eps, x: path_point(R, fam, eps, x, alpha, analytic), grid, ladder,
                     floor_factor)


def test_local(R: LocalGF, K: SampleGrid, fams: Sequence[TestObjectFamily], mode,
               ladder: EpsilonLadder | None = None, slack: float = SLACK,
               trace: TraceLog | None = None, floor_factor: float = 1e3) -> dict:
    """Moderateness or negligibility verdict for ``R`` on the sample set ``K``.

    ``Moderate(alpha_max)``: fitted orders of every family and every
    ``|alpha| <= alpha_max``; reports ``N``, the smallest integer with all orders
    ``>= -N - slack``.

    ``Negligible(alpha_max, r, families_by_m)``: for each ``r`` the smallest
    tested ``m`` whose families all reach order ``r - slack``; also reports the
    verdict obtained from ``alpha = 0`` alone.  Certification covers the
    supplied families only.
    """
    ladder = ladder or EpsilonLadder()
    report = {"claim": None, "R": R.name, "grid": K.to_dict(), "ladder": ladder.to_dict()}
    if isinstance(mode, Moderate):
        alphas = multi_indices(R.dim, mode.alpha_max)
        rows, worst = [], math.inf
        for fam in fams:
            for alpha in alphas:
                sw = path_sweep(R, fam, K, ladder, alpha, floor_factor=floor_factor)
                tag = f"{R.name}|{fam.name}|{''.join(map(str, alpha))}"
                if trace is not None:
                    trace.add(tag, sw.eps, sw.sup)
                rows.append({"family": fam.name, "alpha": list(alpha), **sw.estimate.to_dict(),
                             "fit_ok": sw.estimate.fit_ok()})
                if not sw.estimate.floor_hit:
                    worst = min(worst, sw.estimate.order)
        n = 0 if math.isinf(worst) else max(0, math.ceil(-worst - slack))
        report.update({"claim": "moderate", "families": [f.name for f in fams], "orders": rows,
                       "N_or_r": n, "pass": all(r["fit_ok"] for r in rows)})
        return report
    if isinstance(mode, Negligible):
        by_m = mode.families_by_m or {0: list(fams)}
        profile = {}
        for m in sorted(by_m):
            profile[m] = {}
            for k in range(mode.alpha_max + 1):
                ests = []
                for fam in by_m[m]:
                    for alpha in multi_indices(R.dim, k, k):
                        sw = path_sweep(R, fam, K, ladder, alpha, floor_factor=floor_factor)
                        if trace is not None:
                            trace.add(f"{R.name}|{fam.name}|{''.join(map(str, alpha))}", sw.eps, sw.sup)
                        ests.append((fam.name, alpha, sw.estimate))
                profile[m][k] = ests
        verdicts = _negligible_verdicts(profile, mode.r, mode.alpha_max, slack)
        k0 = _negligible_verdicts(profile, mode.r, 0, slack)
        report.update({"claim": "negligible", "families": {str(m): [f.name for f in by_m[m]] for m in by_m},
                       "orders": {str(m): {str(k): [{"family": n, "alpha": list(a), **e.to_dict()}
                                                    for n, a, e in profile[m][k]]
                                           for k in profile[m]} for m in profile},
                       "N_or_r": verdicts["m_for_r"], "k0_only": k0,
                       "pass": verdicts["pass"],
                       "note": "certified over the supplied families only"})
        return report
    raise TypeError(f"unknown mode {mode!r}")


test_local.__test__ = False


def _negligible_verdicts(profile, rs, alpha_max, slack):
    m_for_r, ok = {}, True
    for r in rs:
        found = None
        for m in sorted(profile):
            ests = [e for k in range(alpha_max + 1) for _, _, e in profile[m].get(k, [])]
            if ests and all(e.at_least(r, slack) for e in ests):
                found = m
                break
        m_for_r[str(r)] = found
        ok &= found is not None
    return {"m_for_r": m_for_r, "pass": bool(ok)}
