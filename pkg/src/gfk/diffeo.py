"""Diffeomorphisms between open subsets of R^n and transport of test functions."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .calculus import Box, as_points
from .mollifier import TestFunction


class AxisMap:
    """Increasing smooth bijection of an interval, ``x -> scale * (x + warp*sin(x - center)) + shift``.

    With ``warp = 0`` and ``scale = 1`` this is the translation by ``shift``.
    ``|warp| < 1`` keeps the derivative ``1 + warp*cos(x - center)`` positive.
    """

    def __init__(self, warp: float = 0.0, center: float = 0.0, scale: float = 1.0,
                 shift: float = 0.0):
        if abs(warp) >= 1.0:
            raise ValueError("|warp| must be below 1 for an increasing map")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.warp, self.center, self.scale, self.shift = float(warp), float(center), float(scale), float(shift)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * (x + self.warp * np.sin(x - self.center)) + self.shift

    def d1(self, x):
        return self.scale * (1.0 + self.warp * np.cos(np.asarray(x, dtype=float) - self.center))

    def d2(self, x):
        return -self.scale * self.warp * np.sin(np.asarray(x, dtype=float) - self.center)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        target = (y - self.shift) / self.scale
        if self.warp == 0.0:
            return target
        x = target.copy()
        for _ in range(60):
            step = (x + self.warp * np.sin(x - self.center) - target) / (1.0 + self.warp * np.cos(x - self.center))
            x = x - step
            if np.all(np.abs(step) <= 1e-15 * (1.0 + np.abs(x))):
                break
        return x

    def increment(self, x, d):
        """``self(x + d) - self(x)`` without cancellation for small ``d``."""
        x, d = np.asarray(x, dtype=float), np.asarray(d, dtype=float)
        return self.scale * (d + 2.0 * self.warp * np.cos(x - self.center + 0.5 * d) * np.sin(0.5 * d))

    def inverse_increment(self, x, dy):
        """The ``d`` with ``self(x + d) - self(x) = dy``."""
        return _solve_increment(self, x, dy)

    def to_dict(self) -> dict:
        return {"warp": self.warp, "center": self.center, "scale": self.scale, "shift": self.shift}


def _solve_increment(axis_map, x, dy):
    x, dy = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(dy, dtype=float))
    d = dy / axis_map.d1(x)
    for _ in range(60):
        step = (axis_map.increment(x, d) - dy) / axis_map.d1(x + d)
        d = d - step
        if np.all(np.abs(step) <= 1e-15 * np.abs(d) + 1e-300):
            break
    return d


class Diffeo:
    """Diffeomorphism ``mu`` from ``source`` onto ``target`` (open sets in R^n).

    Parameters
    ----------
    forward, inverse : callable
        ``(N, n) -> (N, n)``.
    jacobian : callable
        ``x -> D mu(x)`` with shape ``(N, n, n)``.
    source, target : Box or None
        Open boxes describing the domains; ``None`` means all of R^n.
    """

    def __init__(self, dim: int, forward: Callable, inverse: Callable, jacobian: Callable,
                 source: Box | None = None, target: Box | None = None, name: str = "mu",
                 axis_maps: tuple | None = None):
        self.dim = dim
        self._forward = forward
        self._inverse = inverse
        self._jacobian = jacobian
        self.source = source
        self.target = target
        self.name = name
        self.axis_maps = axis_maps

    # -- constructors -------------------------------------------------------------
    @classmethod
    def from_axis_maps(cls, maps, source: Box | None = None, name: str = "mu") -> "Diffeo":
        maps = tuple(maps)
        dim = len(maps)

        def fwd(x):
            return np.stack([m(x[:, i]) for i, m in enumerate(maps)], axis=1)

        def inv(y):
            return np.stack([m.inverse(y[:, i]) for i, m in enumerate(maps)], axis=1)

        def jac(x):
            d = np.stack([m.d1(x[:, i]) for i, m in enumerate(maps)], axis=1)
            return d[:, :, None] * np.eye(dim)[None]

        target = None
        if source is not None:
            target = Box(tuple(m(lo) for m, lo in zip(maps, source.lo)),
                         tuple(m(hi) for m, hi in zip(maps, source.hi)))
        return cls(dim, fwd, inv, jac, source, target, name, maps)

    @classmethod
    def identity(cls, dim: int, source: Box | None = None) -> "Diffeo":
        return cls.from_axis_maps([AxisMap() for _ in range(dim)], source, "id")

    @classmethod
    def translation(cls, c, source: Box | None = None) -> "Diffeo":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls.from_axis_maps([AxisMap(shift=v) for v in c], source, f"x+{c.tolist()}")

    @classmethod
    def scaling(cls, a: float, dim: int = 1, source: Box | None = None) -> "Diffeo":
        return cls.from_axis_maps([AxisMap(scale=a) for _ in range(dim)], source, f"{a}x")

    @classmethod
    def sine_warp(cls, w: float, dim: int = 1, source: Box | None = None) -> "Diffeo":
        """``x -> x + w sin x`` on every axis."""
        return cls.from_axis_maps([AxisMap(warp=w) for _ in range(dim)], source, f"x+{w}sin(x)")

    # -- evaluation ---------------------------------------------------------------
    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._forward(as_points(x, self.dim)), dtype=float)

    forward = __call__

    def inverse(self, y) -> np.ndarray:
        return np.asarray(self._inverse(as_points(y, self.dim)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return np.asarray(self._jacobian(as_points(x, self.dim)), dtype=float)

    def inverse_jacobian(self, y) -> np.ndarray:
        """``D(mu^{-1})(y)`` as the matrix inverse of ``D mu`` at ``mu^{-1}(y)``."""
        return np.linalg.inv(self.jacobian(self.inverse(y)))

    def det_inverse_jacobian(self, y) -> np.ndarray:
        """``|det D(mu^{-1})(y)|``."""
        return 1.0 / np.abs(np.linalg.det(self.jacobian(self.inverse(y))))

    def det_inverse_jacobian_grad(self, y, step: float = 1e-6) -> np.ndarray:
        pts = as_points(y, self.dim)
        out = np.empty_like(pts)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            out[:, j] = (self.det_inverse_jacobian(pts + e) - self.det_inverse_jacobian(pts - e)) / (2 * step)
        return out

    def in_source(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        if self.source is None:
            return np.ones(len(pts), dtype=bool)
        lo, hi = np.asarray(self.source.lo), np.asarray(self.source.hi)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def in_target(self, y) -> np.ndarray:
        pts = as_points(y, self.dim)
        if self.target is None:
            return np.ones(len(pts), dtype=bool)
        lo, hi = np.asarray(self.target.lo), np.asarray(self.target.hi)
        return np.all((pts > lo) & (pts < hi), axis=1)

    def image_box(self, box: Box) -> Box:
        """A box containing ``mu(box)``; exact for per-axis monotone maps."""
        if self.axis_maps is not None:
            return Box(tuple(m(lo) for m, lo in zip(self.axis_maps, box.lo)),
                       tuple(m(hi) for m, hi in zip(self.axis_maps, box.hi)))
        pts = self(box.shell(0.0, 65))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.01 * (hi - lo) + 1e-12
        return Box(tuple(lo - pad), tuple(hi + pad))

    def preimage_box(self, box: Box) -> Box:
        return self.inverted().image_box(box)

    # -- algebra ------------------------------------------------------------------
    def inverted(self) -> "Diffeo":
        parent = self

        def jac(y):
            return parent.inverse_jacobian(y)

        maps = None
        if self.axis_maps is not None:
            maps = tuple(_InverseAxisMap(m) for m in self.axis_maps)
        return Diffeo(self.dim, self._inverse, self._forward, jac, self.target, self.source,
                      f"inv({self.name})", maps)

    def compose(self, inner: "Diffeo") -> "Diffeo":
        """``self o inner``: first ``inner``, then ``self``."""
        outer = self

        def fwd(x):
            return outer(inner(x))

        def inv(y):
            return inner.inverse(outer.inverse(y))

        def jac(x):
            return outer.jacobian(inner(x)) @ inner.jacobian(x)

        maps = None
        if self.axis_maps is not None and inner.axis_maps is not None:
            maps = tuple(_ComposedAxisMap(a, b) for a, b in zip(self.axis_maps, inner.axis_maps))
        return Diffeo(self.dim, fwd, inv, jac, inner.source, self.target,
                      f"{self.name}o{inner.name}", maps)

    def to_dict(self) -> dict:
        return {"name": self.name, "dim": self.dim}


class _InverseAxisMap:
    def __init__(self, base):
        self.base = base

    def __call__(self, y):
        return self.base.inverse(y)

    def inverse(self, x):
        return self.base(x)

    def increment(self, y, d):
        return self.base.inverse_increment(self.base.inverse(y), d)

    def inverse_increment(self, y, dy):
        return self.base.increment(self.base.inverse(y), dy)

    def d1(self, y):
        return 1.0 / self.base.d1(self.base.inverse(y))

    def d2(self, y):
        x = self.base.inverse(y)
        return -self.base.d2(x) / self.base.d1(x) ** 3


class _ComposedAxisMap:
    def __init__(self, outer, inner):
        self.outer, self.inner = outer, inner

    def __call__(self, x):
        return self.outer(self.inner(x))

    def inverse(self, y):
        return self.inner.inverse(self.outer.inverse(y))

    def increment(self, x, d):
        return self.outer.increment(self.inner(x), self.inner.increment(x, d))

    def inverse_increment(self, x, dy):
        return self.inner.inverse_increment(x, self.outer.inverse_increment(self.inner(x), dy))

    def d1(self, x):
        return self.outer.d1(self.inner(x)) * self.inner.d1(x)

    def d2(self, x):
        u = self.inner(x)
        return self.outer.d2(u) * self.inner.d1(x) ** 2 + self.outer.d1(u) * self.inner.d2(x)


def push_test_function(phi: TestFunction, mu: Diffeo) -> TestFunction:
    """``(phi o mu^{-1}) |det D mu^{-1}|``: the transport of ``phi`` from source to target."""
    support = mu.image_box(phi.support)

    def f(y):
        return phi(mu.inverse(y)) * mu.det_inverse_jacobian(y)

    def g(y):
        x = mu.inverse(y)
        jinv = mu.inverse_jacobian(y)
        chain = np.einsum("nij,ni->nj", jinv, phi.gradient(x))
        return chain * mu.det_inverse_jacobian(y)[:, None] + phi(x)[:, None] * mu.det_inverse_jacobian_grad(y)

    return TestFunction(phi.dim, f, support, g, f"push({phi.name})")
