"""Compactly supported test functions and mollifiers with vanishing moments.

A :class:`TestFunction` is a vectorized evaluator on ``R^dim`` with a
gradient channel and a box known to contain its support.  Mollifiers are
bump profiles multiplied by a polynomial chosen so that the integral is one
and all moments of order ``1..q`` vanish.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from .calculus import Box, as_points, gauss_rule, integrate, quad_compact

MAX_MOMENT_ORDER = 8
_CONDITION_LIMIT = 1e12


class MomentSystemError(np.linalg.LinAlgError):
    """The linear system for the polynomial correction is numerically singular."""


def multi_indices(dim: int, max_order: int, min_order: int = 0) -> list:
    """All multi-indices ``alpha`` with ``min_order <= |alpha| <= max_order``, graded order."""
    out = []
    for total in range(min_order, max_order + 1):
        for alpha in itertools.product(range(total + 1), repeat=dim):
            if sum(alpha) == total:
                out.append(tuple(reversed(alpha)))
    return out


def monomial_table(pts: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """``pts^alpha`` for every row ``alpha`` of ``exponents``; shape ``(N, K)``."""
    exponents = np.asarray(exponents, dtype=int).reshape(-1, pts.shape[1])
    top = int(exponents.max(initial=0))
    out = np.ones((len(pts), len(exponents)))
    for i in range(pts.shape[1]):
        powers = np.ones((len(pts), top + 1))
        for k in range(1, top + 1):
            powers[:, k] = powers[:, k - 1] * pts[:, i]
        out *= powers[:, exponents[:, i]]
    return out


class TestFunction:
    """Smooth function on ``R^dim`` vanishing outside ``support``.

    Parameters
    ----------
    dim : int
        Dimension of the argument.
    func : callable
        Maps an ``(N, dim)`` array to ``(N,)`` values.
    support : Box
        Box guaranteed to contain the support.
    grad : callable, optional
        Maps ``(N, dim)`` to ``(N, dim)``; central differences are used when absent.
    """

    __test__ = False

    def __init__(self, dim: int, func: Callable, support: Box, grad: Callable | None = None,
                 name: str = "test function"):
        if support.dim != dim:
            raise ValueError("support box dimension mismatch")
        self.dim = dim
        self._func = func
        self._grad = grad
        self.support = support
        self.name = name
        self.smooth = True
        self._sup = None

    # -- evaluation -----------------------------------------------------------
    def __call__(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        return np.asarray(self._func(pts), dtype=float).reshape(-1)

    eval = __call__

    @property
    def fd_step(self) -> float:
        return 1e-5 * 0.5 * float(np.max(self.support.widths))

    def gradient(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        if self._grad is not None:
            return np.asarray(self._grad(pts), dtype=float).reshape(len(pts), self.dim)
        return _central_gradient(self, pts, self.fd_step)

    @property
    def has_exact_gradient(self) -> bool:
        return self._grad is not None

    def partial(self, i: int) -> "TestFunction":
        """``d/dy_i`` of this function; its own gradient is one difference level on ours."""
        parent = self
        step = self.fd_step

        def f(pts):
            return parent.gradient(pts)[:, i]

        def g(pts):
            out = np.empty_like(pts)
            for j in range(parent.dim):
                e = np.zeros(parent.dim)
                e[j] = step
                out[:, j] = (parent.gradient(pts + e)[:, i] - parent.gradient(pts - e)[:, i]) / (2 * step)
            return out

        return TestFunction(self.dim, f, self.support, g, f"d{i}({self.name})")

    def derivative(self, alpha) -> "TestFunction":
        """``d^alpha`` by repeated :meth:`partial`."""
        out = self
        for i, k in enumerate(alpha):
            for _ in range(k):
                out = out.partial(i)
        return out

    # -- functionals ------------------------------------------------------------
    def integral(self) -> float:
        return quad_compact(self, self.support)

    def sup_norm(self) -> float:
        if self._sup is None:
            n = 256 if self.dim == 1 else 96
            axes = [np.linspace(a, b, n + 1) for a, b in zip(self.support.lo, self.support.hi)]
            grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
            self._sup = float(np.max(np.abs(self(grid))))
        return self._sup

    @property
    def support_volume(self) -> float:
        return self.support.volume

    # -- algebra ----------------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, TestFunction):
            return NotImplemented
        return LinearCombination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        if not isinstance(other, TestFunction):
            return NotImplemented
        return LinearCombination([(1.0, self), (-1.0, other)])

    def __mul__(self, c):
        if isinstance(c, TestFunction) or not np.isscalar(c):
            return NotImplemented
        return LinearCombination([(float(c), self)])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def multiply(self, g: Callable, g_grad: Callable | None = None, name: str = "g") -> "TestFunction":
        """Pointwise product with a smooth function ``g`` defined near the support."""
        parent = self

        def f(pts):
            return parent(pts) * np.asarray(g(pts), dtype=float).reshape(-1)

        grad = None
        if g_grad is not None:
            def grad(pts):
                gv = np.asarray(g(pts), dtype=float).reshape(-1, 1)
                return parent.gradient(pts) * gv + parent(pts)[:, None] * np.asarray(g_grad(pts))
        return TestFunction(self.dim, f, self.support, grad, f"{name}*{self.name}")

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name} dim={self.dim} support={self.support}>"


def _central_gradient(fn, pts, step):
    out = np.empty_like(pts)
    for j in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[j] = step
        out[:, j] = (fn(pts + e) - fn(pts - e)) / (2 * step)
    return out


class LinearCombination(TestFunction):
    """Finite linear combination of test functions; derivative channels are kept exact."""

    def __init__(self, terms):
        flat = []
        for c, tf in terms:
            if isinstance(tf, LinearCombination):
                flat.extend((c * c2, t2) for c2, t2 in tf.terms)
            else:
                flat.append((float(c), tf))
        self.terms = tuple(flat)
        dim = flat[0][1].dim
        support = flat[0][1].support
        for _, tf in flat[1:]:
            support = support.hull(tf.support)
        exact = all(tf.has_exact_gradient for _, tf in flat)
        super().__init__(dim, self._eval_terms, support, self._grad_terms if exact else None,
                         "lincomb")

    def _eval_terms(self, pts):
        return sum(c * tf(pts) for c, tf in self.terms)

    def _grad_terms(self, pts):
        return sum(c * tf.gradient(pts) for c, tf in self.terms)

    def partial(self, i):
        return LinearCombination([(c, tf.partial(i)) for c, tf in self.terms])

    def integral(self) -> float:
        return float(sum(c * tf.integral() for c, tf in self.terms))


class AffineImage(TestFunction):
    """``y -> factor * base((y - shift) / scale)``."""

    def __init__(self, base: TestFunction, scale: float, shift, factor: float):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.scale = float(scale)
        self.shift = np.atleast_1d(np.asarray(shift, dtype=float)).copy()
        if self.shift.shape != (base.dim,):
            raise ValueError("shift has wrong dimension")
        self.factor = float(factor)
        super().__init__(base.dim, self._eval_affine, base.support.affine(self.scale, self.shift),
                         self._grad_affine, f"affine({base.name})")

    def _eval_affine(self, pts):
        return self.factor * self.base((pts - self.shift) / self.scale)

    def _grad_affine(self, pts):
        return (self.factor / self.scale) * self.base.gradient((pts - self.shift) / self.scale)

    @property
    def has_exact_gradient(self) -> bool:
        return self.base.has_exact_gradient

    def partial(self, i):
        return AffineImage(self.base.partial(i), self.scale, self.shift, self.factor / self.scale)

    def integral(self) -> float:
        return self.factor * self.scale ** self.dim * self.base.integral()


def scale_translate(phi: TestFunction, eps: float, x) -> TestFunction:
    """Return ``T_x S_eps phi``, i.e. ``y -> eps**(-dim) * phi((y - x) / eps)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return AffineImage(phi, eps, x, eps ** (-phi.dim))


# ----------------------------------------------------------------------------
# Bump profile and mollifiers
# ----------------------------------------------------------------------------

def bump_profile(r2: np.ndarray, sharpness: float = 1.0) -> np.ndarray:
    """``exp(-sharpness / (1 - r2))`` for ``r2 < 1`` and ``0`` otherwise."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = np.exp(-sharpness / (1.0 - r2[inside]))
    return out


def bump_profile_derivative(r2: np.ndarray, sharpness: float = 1.0) -> np.ndarray:
    """Derivative of :func:`bump_profile` with respect to ``r2``."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    t = 1.0 - r2[inside]
    out[inside] = -sharpness / t ** 2 * np.exp(-sharpness / t)
    return out


def bump(dim: int, radius: float = 1.0, sharpness: float = 1.0) -> TestFunction:
    """The unnormalized bump ``exp(-s / (1 - |y/radius|^2))``."""
    def f(pts):
        return bump_profile(np.sum((pts / radius) ** 2, axis=1), sharpness)

    def g(pts):
        r2 = np.sum((pts / radius) ** 2, axis=1)
        return (2.0 / radius ** 2) * bump_profile_derivative(r2, sharpness)[:, None] * pts

    return TestFunction(dim, f, Box.cube(np.zeros(dim), radius), g, f"bump(r={radius})")


class Mollifier(TestFunction):
    """Bump times polynomial with unit integral and vanishing moments of orders ``1..q``.

    Attributes
    ----------
    moment_order : int
        ``q``.
    radius : float
        Support is the closed ball of this radius.
    sharpness : float
        Profile parameter ``s`` in ``exp(-s / (1 - r^2))``.
    coefficients : dict
        Polynomial coefficients on the unit ball, keyed by exponent multi-index.
    """

    def __init__(self, dim: int, moment_order: int, radius: float, sharpness: float,
                 coefficients: dict):
        self.moment_order = moment_order
        self.radius = float(radius)
        self.sharpness = float(sharpness)
        self.coefficients = dict(coefficients)
        active = [(a, c) for a, c in self.coefficients.items() if c != 0.0]
        self._exponents = np.array([a for a, _ in active], dtype=int).reshape(-1, dim)
        self._coefs = np.array([c for _, c in active], dtype=float)
        self._norm = self.radius ** (-dim)
        super().__init__(dim, self._eval_moll, Box.cube(np.zeros(dim), self.radius),
                         self._grad_moll,
                         f"mollifier(dim={dim}, q={moment_order}, r={radius:g}, s={sharpness:g})")

    def _poly(self, eta):
        return monomial_table(eta, self._exponents) @ self._coefs

    def _poly_grad(self, eta):
        out = np.zeros_like(eta)
        for i in range(self.dim):
            lowered = np.maximum(self._exponents - np.eye(self.dim, dtype=int)[i], 0)
            out[:, i] = monomial_table(eta, lowered) @ (self._coefs * self._exponents[:, i])
        return out

    def _eval_moll(self, pts):
        eta = pts / self.radius
        r2 = np.sum(eta ** 2, axis=1)
        out = np.zeros(len(pts))
        inside = r2 < 1.0
        if np.any(inside):
            e = eta[inside]
            out[inside] = self._norm * bump_profile(r2[inside], self.sharpness) * self._poly(e)
        return out

    def _grad_moll(self, pts):
        eta = pts / self.radius
        r2 = np.sum(eta ** 2, axis=1)
        out = np.zeros_like(pts)
        inside = r2 < 1.0
        if np.any(inside):
            e = eta[inside]
            b = bump_profile(r2[inside], self.sharpness)
            db = bump_profile_derivative(r2[inside], self.sharpness)
            poly = self._poly(e)
            grad_eta = 2.0 * db[:, None] * e * poly[:, None] + b[:, None] * self._poly_grad(e)
            out[inside] = self._norm / self.radius * grad_eta
        return out

    def to_dict(self) -> dict:
        return {"dim": self.dim, "q": self.moment_order, "radius": self.radius,
                "sharpness": self.sharpness}


_GRAM_CACHE: dict = {}


def _unit_ball_moments(dim: int, max_order: int, sharpness: float, panels: int = 64) -> dict:
    """``int bump(eta) eta^alpha d eta`` on the unit ball for all ``|alpha| <= max_order``."""
    key = (dim, max_order, sharpness, panels)
    if key in _GRAM_CACHE:
        return _GRAM_CACHE[key]
    x, w = gauss_rule(Box((-1.0,), (1.0,)), panels, 8)
    x = x[:, 0]
    if dim == 1:
        b = w * bump_profile(x ** 2, sharpness)
        out = {(k,): math.fsum(b * x ** k) for k in range(max_order + 1)}
    else:
        r2 = x[:, None] ** 2 + x[None, :] ** 2
        weighted = (w[:, None] * w[None, :]) * bump_profile(r2, sharpness)
        powers = np.array([x ** k for k in range(max_order + 1)])
        table = powers @ weighted @ powers.T
        out = {(i, j): float(table[i, j]) for i in range(max_order + 1)
               for j in range(max_order + 1 - i)}
    _GRAM_CACHE[key] = out
    return out


def build_mollifier(dim: int, q: int, radius: float = 1.0, sharpness: float = 1.0) -> Mollifier:
    """Mollifier in ``dim`` dimensions with vanishing moments of orders ``1..q``.

    The correction polynomial has total degree ``<= q``.  Its coefficients solve
    the square system ``int phi eta^alpha = delta_{alpha,0}`` for ``|alpha| <= q``.
    Because the bump is even in every coordinate, the system splits by the
    parity pattern of ``alpha``; only the all-even block has a nonzero right
    hand side, so coefficients of every other parity class are exactly zero.

    Raises
    ------
    ValueError
        If ``dim`` is not 1 or 2, ``q`` is outside ``0..8`` or ``radius <= 0``.
    MomentSystemError
        If a parity block of the system is numerically singular.
    """
    if dim not in (1, 2):
        raise ValueError("only dim 1 and 2 are supported")
    if not (0 <= q <= MAX_MOMENT_ORDER):
        raise ValueError(f"moment order q must lie in 0..{MAX_MOMENT_ORDER}")
    if radius <= 0 or sharpness <= 0:
        raise ValueError("radius and sharpness must be positive")
    indices = multi_indices(dim, q)
    raw = _unit_ball_moments(dim, 2 * q, sharpness)
    coefficients = {}
    for parity in itertools.product((0, 1), repeat=dim):
        block = [a for a in indices if tuple(k % 2 for k in a) == parity]
        if not block:
            continue
        gram = np.array([[raw[tuple(i + j for i, j in zip(a, b))] for b in block] for a in block])
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > _CONDITION_LIMIT:
            raise MomentSystemError(f"moment system block {parity} has condition number {cond:.3e}")
        if any(parity):
            coefficients.update({a: 0.0 for a in block})
            continue
        rhs = np.array([1.0 if sum(a) == 0 else 0.0 for a in block])
        sol = np.linalg.solve(gram, rhs)
        coefficients.update({a: float(c) for a, c in zip(block, sol)})
    return Mollifier(dim, q, radius, sharpness, coefficients)


def moments(phi: TestFunction, up_to: int, tol: float = 1e-11) -> dict:
    """``int phi(xi) xi^alpha d xi`` for all ``|alpha| <= up_to``, keyed by ``alpha``."""
    if up_to > MAX_MOMENT_ORDER:
        raise ValueError(f"moments are available up to order {MAX_MOMENT_ORDER}")
    indices = multi_indices(phi.dim, up_to)
    exps = np.array(indices, dtype=int)

    def f(pts):
        return phi(pts)[:, None] * monomial_table(pts, exps)

    result = integrate(f, phi.support, tol)
    return {a: float(v) for a, v in zip(indices, np.atleast_1d(result.value))}
