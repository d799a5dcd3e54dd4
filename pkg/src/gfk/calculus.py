"""Shared numerical engines.

Quadrature on axis-aligned boxes, first-argument (Gateaux) derivatives of
generalized-function representatives, geometric epsilon ladders and the
log-log regression that turns an epsilon-indexed sequence into an
asymptotic order.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

MACHINE_EPS = float(np.finfo(float).eps)

#: Default verdict slack on fitted exponents.
SLACK = 0.25
#: Default minimal coefficient of determination of a log-log fit.
MIN_R2 = 0.98
#: Residual RMS (in natural-log units) below which a fit counts as clean even
#: when r2 is meaningless because the data are essentially flat.
FLAT_RMS = 0.05


class QuadratureError(RuntimeError):
    """Raised when a quadrature does not reach its tolerance before the panel cap."""

    def __init__(self, message: str, value: float, error: float):
        super().__init__(f"{message} (best value {value!r}, error estimate {error:.3e})")
        self.value = value
        self.error = error


class LadderError(ValueError):
    """Raised for malformed or insufficient epsilon ladders."""


class AdmissibilityError(ValueError):
    """Raised when a perturbation direction leaves the unit-integral test space."""


def as_points(y, dim: int) -> np.ndarray:
    """Coerce ``y`` to a float array of shape ``(N, dim)``."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lo_1, hi_1] x ... x [lo_n, hi_n]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("box corners of different dimension")
        if any(b < a for a, b in zip(lo, hi)):
            raise ValueError(f"empty box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, center, radius: float) -> "Box":
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return cls(tuple(c - radius), tuple(c + radius))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.hi) + np.asarray(self.lo))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        pts = as_points(points, self.dim)
        lo = np.asarray(self.lo) - margin
        hi = np.asarray(self.hi) + margin
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def expand(self, margin: float) -> "Box":
        return Box(tuple(np.asarray(self.lo) - margin), tuple(np.asarray(self.hi) + margin))

    def hull(self, other: "Box") -> "Box":
        return Box(tuple(np.minimum(self.lo, other.lo)), tuple(np.maximum(self.hi, other.hi)))

    def intersect(self, other: "Box") -> "Box | None":
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(hi < lo):
            return None
        return Box(tuple(lo), tuple(hi))

    def affine(self, scale: float, shift) -> "Box":
        """Image of the box under ``y -> scale * y + shift`` (``scale > 0``)."""
        s = np.atleast_1d(np.asarray(shift, dtype=float))
        return Box(tuple(scale * np.asarray(self.lo) + s), tuple(scale * np.asarray(self.hi) + s))

    def shell(self, fraction: float = 0.05, per_axis: int = 9) -> np.ndarray:
        """Sample points on the boundary of the box enlarged by ``fraction`` of its widths."""
        big = Box(tuple(np.asarray(self.lo) - fraction * self.widths),
                  tuple(np.asarray(self.hi) + fraction * self.widths))
        axes = [np.linspace(a, b, per_axis) for a, b in zip(big.lo, big.hi)]
        grid = np.array(list(itertools.product(*axes)))
        on_face = np.zeros(len(grid), dtype=bool)
        for i in range(self.dim):
            on_face |= np.isclose(grid[:, i], big.lo[i]) | np.isclose(grid[:, i], big.hi[i])
        return grid[on_face]

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Integral:
    """A quadrature value together with its error estimate."""

    value: float
    error: float

    def __float__(self) -> float:
        return self.value


_LEGENDRE_CACHE: dict = {}


def _legendre(order: int):
    if order not in _LEGENDRE_CACHE:
        _LEGENDRE_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _LEGENDRE_CACHE[order]


def _tensor(axes_nodes, axes_weights):
    grids = np.meshgrid(*axes_nodes, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*axes_weights, indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def gauss_rule(box: Box, panels, order: int = 10):
    """Composite Gauss-Legendre nodes and weights on ``box``.

    ``panels`` is an int (same count per axis) or a sequence of per-axis counts.
    """
    if np.isscalar(panels):
        panels = [int(panels)] * box.dim
    x, w = _legendre(order)
    axes_nodes, axes_weights = [], []
    for lo, hi, m in zip(box.lo, box.hi, panels):
        edges = np.linspace(lo, hi, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        axes_nodes.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
        axes_weights.append((half[:, None] * w[None, :]).ravel())
    return _tensor(axes_nodes, axes_weights)


def trapezoid_rule(box: Box, points):
    """Equispaced trapezoid nodes and weights on ``box``.

    For integrands that vanish together with all derivatives on the boundary of
    the box (smooth functions compactly supported inside it) this rule
    converges faster than any power of the node spacing.
    """
    if np.isscalar(points):
        points = [int(points)] * box.dim
    axes_nodes, axes_weights = [], []
    for lo, hi, m in zip(box.lo, box.hi, points):
        nodes = np.linspace(lo, hi, m + 1)
        h = (hi - lo) / m
        w = np.full(m + 1, h)
        w[0] = w[-1] = 0.5 * h
        axes_nodes.append(nodes)
        axes_weights.append(w)
    return _tensor(axes_nodes, axes_weights)


def _split_box(box: Box, breakpoints) -> list:
    if not breakpoints or box.dim != 1:
        return [box]
    lo, hi = box.lo[0], box.hi[0]
    cuts = sorted(float(b) for b in breakpoints if lo < float(b) < hi)
    edges = [lo, *cuts, hi]
    return [Box((a,), (b,)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def integrate(f: Callable[[np.ndarray], np.ndarray], box: Box, tol: float = 1e-12, *,
              order: int = 10, panels: int = 2, max_panels: int | None = None,
              breakpoints: Sequence[float] = ()) -> Integral:
    """Adaptive composite Gauss-Legendre quadrature on a box.

    The panel count per axis is doubled until two successive values agree to
    ``tol`` (absolute), or to a rounding floor proportional to the sum of the
    absolute weighted integrand values.  The error estimate is the difference
    of the last two levels.

    Parameters
    ----------
    f : callable
        Vectorized integrand taking an ``(N, dim)`` array.
    box : Box
        Integration box.
    tol : float
        Absolute tolerance, at least ``1e-13``.
    breakpoints : sequence of float, optional
        Interior points (1D only) where ``f`` may fail to be smooth; the
        interval is split there.

    Returns
    -------
    Integral
        Value and error estimate.

    Raises
    ------
    QuadratureError
        If the tolerance is not reached before ``max_panels``.
    """
    if tol < 1e-13:
        raise ValueError("tolerance below 1e-13 is not supported")
    if max_panels is None:
        max_panels = 4096 if box.dim == 1 else 128
    pieces = _split_box(box, breakpoints)
    total, total_err = 0.0, 0.0
    for piece in pieces:
        value, err = _integrate_piece(f, piece, tol / len(pieces), order, panels, max_panels)
        total += value
        total_err += err
    return Integral(total, total_err)


def _integrate_piece(f, box, tol, order, panels, max_panels):
    def level(m):
        nodes, weights = gauss_rule(box, m, order)
        vals = np.asarray(f(nodes), dtype=float)
        if vals.ndim == 1:
            terms = weights * vals
            return math.fsum(terms), float(np.sum(np.abs(terms)))
        terms = weights[:, None] * vals.reshape(len(weights), -1)
        return terms.sum(axis=0), np.abs(terms).sum(axis=0)

    m = panels
    prev, _ = level(m)
    while True:
        m *= 2
        cur, absum = level(m)
        diff = np.abs(np.asarray(cur) - np.asarray(prev))
        err = float(np.max(diff))
        if np.all(diff <= np.maximum(tol, 50.0 * MACHINE_EPS * np.asarray(absum))):
            return cur, err
        if 2 * m > max_panels:
            raise QuadratureError("composite Gauss quadrature did not converge",
                                  float(np.max(np.abs(cur))), err)
        prev = cur


def quad_compact(f: Callable[[np.ndarray], np.ndarray], box: Box, *,
                 breakpoints: Sequence[float] = (), points: int | None = None) -> float:
    """Fixed-cost integral of a smooth integrand compactly supported in ``box``.

    Without breakpoints the trapezoid rule is used (spectrally accurate for
    such integrands).  Pieces adjacent to a breakpoint do not vanish at the cut,
    so they are handled with composite Gauss panels instead.
    """
    pieces = _split_box(box, breakpoints)
    if len(pieces) == 1:
        if points is None:
            points = 512 if box.dim == 1 else 200
        nodes, weights = trapezoid_rule(box, points)
        return float(np.dot(weights, np.asarray(f(nodes), dtype=float).reshape(-1)))
    total = 0.0
    for piece in pieces:
        nodes, weights = gauss_rule(piece, 64, 10)
        total += float(np.dot(weights, np.asarray(f(nodes), dtype=float).reshape(-1)))
    return total


# --------------------------------------------------------------------------
# Gateaux derivative in the first argument
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GateauxResult:
    value: float
    step: float | None
    analytic: bool


def check_admissible(direction, atol: float = 1e-9) -> None:
    """Raise :class:`AdmissibilityError` unless ``direction`` integrates to zero."""
    total = float(direction.integral())
    scale = max(1.0, float(direction.sup_norm()) * getattr(direction, "support_volume", 1.0))
    if abs(total) > atol * scale:
        raise AdmissibilityError(
            f"perturbation direction has integral {total:.3e}; it must integrate to 0 "
            "so that the perturbed argument keeps unit integral")


def gateaux(R, omega, p, psi, *, step: float | None = None, check: bool = True,
            full_output: bool = False):
    """Derivative of ``t -> R(omega + t psi, p)`` at ``t = 0``.

    Uses the analytic channel ``R.d1`` when ``R.d1_channel`` is true.
    Otherwise a central difference with step ``t`` and one Richardson
    refinement with step ``t/2`` is returned; ``t`` defaults to ``1e-4``
    times the ratio of the sup norms of ``omega`` and ``psi``.
    """
    if check:
        check_admissible(psi)
    if getattr(R, "d1_channel", False):
        result = GateauxResult(float(R.d1(omega, p, psi)), None, True)
    else:
        result = central_gateaux(R, omega, p, psi, step=step)
    return result if full_output else result.value


def central_gateaux(R, omega, p, psi, *, step: float | None = None) -> GateauxResult:
    if step is None:
        scale = float(omega.sup_norm()) / max(float(psi.sup_norm()), 1e-300)
        step = 1e-4 * scale

    def central(t):
        return (R.eval(omega + psi * t, p) - R.eval(omega - psi * t, p)) / (2.0 * t)

    coarse = central(step)
    fine = central(0.5 * step)
    return GateauxResult(float((4.0 * fine - coarse) / 3.0), step, False)


# --------------------------------------------------------------------------
# Epsilon ladders and asymptotic orders
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonLadder:
    """Geometric sequence ``eps_i = eps0 * ratio**i``, ``i = 0..length-1``."""

    eps0: float = 0.25
    ratio: float = 0.5
    length: int = 12

    def __post_init__(self):
        if not (0.0 < self.eps0 <= 1.0):
            raise LadderError("eps0 must lie in (0, 1]")
        if not (0.0 < self.ratio < 1.0):
            raise LadderError("ratio must lie in (0, 1)")
        if self.length < 6:
            raise LadderError("a ladder needs at least 6 rungs")

    @property
    def eps(self) -> np.ndarray:
        return self.eps0 * self.ratio ** np.arange(self.length)

    @classmethod
    def parse(cls, text: str) -> "EpsilonLadder":
        """Parse ``"eps0,ratio,length"``."""
        parts = [s.strip() for s in text.split(",")]
        if len(parts) != 3:
            raise LadderError(f"ladder must be 'eps0,ratio,length', got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    def truncated(self, eps_max: float) -> "EpsilonLadder":
        """Drop leading rungs above ``eps_max``."""
        skip = int(np.sum(self.eps > eps_max * (1 + 1e-12)))
        if self.length - skip < 6:
            raise LadderError(
                f"only {self.length - skip} rungs below eps = {eps_max:.3g}; need at least 6")
        return EpsilonLadder(float(self.eps[skip]), self.ratio, self.length - skip)

    def to_dict(self) -> dict:
        return {"eps0": self.eps0, "ratio": self.ratio, "length": self.length}


@dataclass(frozen=True)
class AsymptoticEstimate:
    """Fitted exponent ``s`` in ``|v(eps)| ~ C eps**s`` with fit diagnostics.

    ``floor_hit`` means fewer than the required number of values were
    numerically distinguishable from zero; ``order`` is then ``+inf``.
    """

    order: float
    r2: float
    floor_hit: bool
    window: tuple
    intercept: float = 0.0
    rms: float = 0.0
    n_resolved: int = 0
    r2_defined: bool = True

    def fit_ok(self, min_r2: float = MIN_R2) -> bool:
        return self.floor_hit or self.r2 >= min_r2 or self.rms <= FLAT_RMS

    def at_least(self, s: float, slack: float = SLACK, min_r2: float = MIN_R2) -> bool:
        """Verdict for the claim ``v = O(eps**s)``."""
        if self.floor_hit:
            return True
        return self.order >= s - slack and self.fit_ok(min_r2)

    def moderate_exponent(self, slack: float = SLACK) -> int:
        """Smallest integer ``N >= 0`` with ``order >= -N - slack``."""
        if self.floor_hit:
            return 0
        return max(0, math.ceil(-self.order - slack))

    def to_dict(self) -> dict:
        return {
            "order": "inf" if math.isinf(self.order) else self.order,
            "r2": self.r2,
            "floor_hit": self.floor_hit,
            "window": list(self.window),
            "rms": self.rms,
            "n_resolved": self.n_resolved,
        }


def _check_geometric(eps: np.ndarray) -> None:
    if np.any(eps <= 0):
        raise LadderError("epsilon values must be positive")
    ratios = eps[1:] / eps[:-1]
    if np.any(ratios >= 1.0):
        raise LadderError("epsilon values must be strictly decreasing")
    if np.max(np.abs(ratios / ratios[0] - 1.0)) > 1e-9:
        raise LadderError("epsilon values are not a geometric ladder")


def estimate_order(samples: Iterable, *, window: int = 8, floor=1e-300,
                   min_points: int = 3) -> AsymptoticEstimate:
    """Least-squares slope of ``log|v|`` against ``log eps``.

    Parameters
    ----------
    samples : iterable of (eps, value)
        At least six samples on a descending geometric ladder.
    window : int
        Number of smallest-epsilon resolved samples used in the fit.
    floor : float or array
        Values with ``|v| <= floor`` are treated as exact zeros.  A per-sample
        array lets callers pass the numerical resolution of each value.
    min_points : int
        Fewer resolved samples than this give ``floor_hit`` and order ``+inf``.

    Returns
    -------
    AsymptoticEstimate
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise LadderError("samples must be (eps, value) pairs")
    if len(data) < 6:
        raise LadderError(f"need at least 6 samples, got {len(data)}")
    eps, values = data[:, 0], np.abs(data[:, 1])
    _check_geometric(eps)
    floors = np.broadcast_to(np.asarray(floor, dtype=float), eps.shape)
    if np.any(~np.isfinite(values)):
        raise FloatingPointError("non-finite value in epsilon path")
    resolved = np.flatnonzero(values > floors)
    if len(resolved) < min_points:
        return AsymptoticEstimate(math.inf, 1.0, True, (), n_resolved=len(resolved),
                                  r2_defined=False)
    idx = resolved[-window:]
    x, y = np.log(eps[idx]), np.log(values[idx])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return AsymptoticEstimate(float(slope), r2, False, (int(idx[0]), int(idx[-1])),
                              float(intercept), float(np.sqrt(ss_res / len(idx))),
                              len(resolved))


def resolution_floor(magnitudes, factor: float = 1e3) -> np.ndarray:
    """Numerical resolution of values computed from terms of the given magnitude."""
    return factor * MACHINE_EPS * np.asarray(magnitudes, dtype=float)


# --------------------------------------------------------------------------
# Sample sets standing in for compact sets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleGrid:
    """Deterministic sample set realizing a sup over a compact box.

    A tensor grid with ``n`` points per axis, plus, for each focus point (e.g.
    a singular point of a distribution), a local grid of ``focus_n`` points per
    axis spanning ``focus +- eps * focus_scale``.  The local grid scales with
    epsilon, so features of width proportional to epsilon are sampled at the
    same relative resolution on every rung.
    """

    box: Box
    n: int = 41
    focus: tuple = ()
    focus_scale: float = 0.0
    focus_n: int = 21

    def base_points(self) -> np.ndarray:
        axes = [np.linspace(a, b, self.n) for a, b in zip(self.box.lo, self.box.hi)]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def points(self, eps: float | None = None) -> np.ndarray:
        pts = [self.base_points()]
        if eps is not None and self.focus and self.focus_scale > 0:
            u = np.linspace(-1.0, 1.0, self.focus_n)
            local = np.array(list(itertools.product(*([u] * self.box.dim))), dtype=float)
            for f in self.focus:
                cand = np.asarray(f, dtype=float)[None, :] + eps * self.focus_scale * local
                pts.append(cand[self.box.contains(cand)])
        return np.concatenate(pts, axis=0)

    def with_focus(self, focus: Sequence, scale: float) -> "SampleGrid":
        inside = tuple(tuple(float(c) for c in np.atleast_1d(f)) for f in focus
                       if self.box.contains(np.atleast_1d(f))[0])
        merged = tuple(dict.fromkeys(self.focus + inside))
        return SampleGrid(self.box, self.n, merged, max(self.focus_scale, scale), self.focus_n)

    def to_dict(self) -> dict:
        return {"box": self.box.to_dict(), "n": self.n, "focus": [list(f) for f in self.focus],
                "focus_scale": self.focus_scale, "focus_n": self.focus_n}


# --------------------------------------------------------------------------
# Traces
# --------------------------------------------------------------------------

TRACE_HEADER = ("eps", "value", "tag")


@dataclass
class TraceLog:
    """Accumulates ``(eps, value, tag)`` rows for CSV export."""

    rows: list = field(default_factory=list)

    def add(self, tag: str, eps: Sequence[float], values: Sequence[float]) -> None:
        for e, v in zip(eps, values):
            self.rows.append((float(e), float(v), tag))

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for e, v, tag in self.rows:
                writer.writerow((repr(e), repr(v), tag))
