"""Smoothing kernels on manifolds: construction, validation and localization.

A smoothing kernel maps ``(eps, p)`` to a compactly supported n-form of unit
integral concentrated near ``p``.  The standard construction glues chartwise
scaled mollifiers with a partition of unity and falls back to a fixed
reference form for large ``eps``.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .calculus import (SLACK, Box, EpsilonLadder, LadderError, SampleGrid, TraceLog, estimate_order,
                       resolution_floor)
from .local_colombeau import TestObjectFamily
from .manifold import (Chart, Manifold, Metric, NForm, Piece, SmoothFunction, VectorField,
                       chart_form, cosine, cutoff_ramp, euclidean_metric, exp_cos, lie_form,
                       plateau_cutoff, plateau_cutoff_derivative, sine)
from .mollifier import Mollifier, TestFunction, multi_indices, scale_translate


class KernelError(ValueError):
    """Inconsistent kernel construction data."""


def _point(p, dim: int) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(dim)


class SmoothingKernel:
    """``(eps, p) -> Phi(eps, p)``, a unit-integral n-form near ``p``."""

    def __init__(self, manifold: Manifold, grading: int, name: str, support_scale: float):
        self.manifold = manifold
        self.grading = grading
        self.name = name
        #: bound on the parameter-coordinate support radius divided by eps in the small-eps regime
        self.support_scale = float(support_scale)

    def __call__(self, eps: float, p) -> NForm:
        raise NotImplementedError

    def clean_eps(self, points) -> float:
        """Largest eps at which ``Phi(eps, p)`` is built from scaled mollifiers only, for all ``points``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"name": self.name, "grading": self.grading, "manifold": self.manifold.name}

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name} on {self.manifold.name}, grading {self.grading}>"


class GluedKernel(SmoothingKernel):
    """``Phi(eps,p) = sum_a chi_a(p) [lambda_a(eps) psi_a^*(T S_eps phi * chi^1_a d^n y)
    + (1 - lambda_a(eps)) omega_ref]``."""

    def __init__(self, manifold: Manifold, moll: Mollifier, omega_ref: NForm | None = None,
                 name: str | None = None):
        self.moll = moll
        self.pou = manifold.pou
        self.omega_ref = omega_ref or manifold.omega_ref()
        ref_total = self.omega_ref.integral()
        if abs(ref_total - 1.0) > 1e-9:
            raise KernelError(f"reference form integrates to {ref_total}, not 1")
        if self.pou.n_charts != len(manifold.charts):
            raise KernelError("partition of unity does not match the atlas")
        radius = moll.radius
        for alpha in range(self.pou.n_charts):
            e0 = self.pou.eps0(alpha, manifold.sample_points(9), radius)
            if manifold.periodic[0] and np.all(e0 <= 0):
                raise KernelError(f"chart {alpha} leaves no room between support and plateau")
        # parameter radius per unit eps: mollifier radius times the largest inverse chart derivative
        inv_lip = 1.0
        for chart in manifold.charts:
            grid = np.linspace(0, 1, 257)
            for ax in chart.axes:
                t = ax.lo + (ax.hi - ax.lo) * grid
                inv_lip = max(inv_lip, float(np.max(1.0 / ax.map.d1(t))))
        super().__init__(manifold, moll.moment_order, name or f"glued(q={moll.moment_order},R={radius:g})",
                         radius * inv_lip)

    def cutoffs(self, eps: float, p) -> tuple:
        """``(chi_a(p), lambda_a(eps, p))`` for all charts."""
        pt = _point(p, self.manifold.dim)[None, :]
        chi = self.pou.chi(pt)[0]
        lam = np.array([self.pou.cutoff(a, eps, pt, self.moll.radius)[0] for a in range(self.pou.n_charts)])
        return chi, lam

    def chart_piece(self, alpha: int, eps: float, p) -> TestFunction:
        chart = self.manifold.charts[alpha]
        center = chart.forward(_point(p, self.manifold.dim)[None, :])[0]
        value, grad = self.pou.plateau_function(alpha)
        return scale_translate(self.moll, eps, center).multiply(value, grad, f"chi1[{chart.name}]")

    def __call__(self, eps: float, p) -> NForm:
        if not (0.0 < eps <= 1.0):
            raise ValueError("eps must lie in (0, 1]")
        chi, lam = self.cutoffs(eps, p)
        pieces, ref_weight = [], 0.0
        for alpha, (c, l) in enumerate(zip(chi, lam)):
            if c == 0.0:
                continue
            if l > 0.0:
                pieces.append(Piece(self.chart_piece(alpha, eps, p), self.manifold.charts[alpha], c * l))
            ref_weight += c * (1.0 - l)
        form = NForm(self.manifold, pieces)
        if ref_weight > 0.0:
            form = form + self.omega_ref * ref_weight
        return form

    def parameter_derivative(self, eps: float, p, v, step: float = 1e-6) -> NForm:
        """``d/dt Phi(eps, p + t v)`` at ``t = 0``.

        The chart centre enters only through the translated mollifier, whose
        centre derivative is ``-(1/eps) (d_i phi)_eps``; the scalar weights
        ``chi_a lambda_a`` are differenced with ``step``.
        """
        n = self.manifold.dim
        p = _point(p, n)
        v = _point(v, n)
        chi, lam = self.cutoffs(eps, p)
        chi_p, lam_p = self.cutoffs(eps, p + step * v)
        chi_m, lam_m = self.cutoffs(eps, p - step * v)
        d_weight = (chi_p * lam_p - chi_m * lam_m) / (2 * step)
        d_ref = (np.sum(chi_p * (1 - lam_p)) - np.sum(chi_m * (1 - lam_m))) / (2 * step)
        pieces = []
        for alpha, chart in enumerate(self.manifold.charts):
            w = chi[alpha] * lam[alpha]
            if chi[alpha] == 0.0 or (w == 0.0 and d_weight[alpha] == 0.0):
                continue
            if d_weight[alpha] != 0.0:
                pieces.append(Piece(self.chart_piece(alpha, eps, p), chart, d_weight[alpha]))
            if w == 0.0:
                continue
            center = chart.forward(p[None, :])[0]
            velocity = chart.jacobian_diag(p[None, :])[0] * v
            value, grad = self.pou.plateau_function(alpha)
            for i in range(n):
                if velocity[i] == 0.0:
                    continue
                moved = scale_translate(self.moll.partial(i), eps, center).multiply(value, grad, "chi1")
                pieces.append(Piece(moved, chart, -w * velocity[i] / eps))
        form = NForm(self.manifold, pieces)
        if d_ref != 0.0:
            form = form + self.omega_ref * d_ref
        return form

    def clean_eps(self, points) -> float:
        pts = self.manifold.canonical(points)
        chi = self.pou.chi(pts)
        best = 1.0
        for alpha in range(self.pou.n_charts):
            active = chi[:, alpha] > 0
            if np.any(active):
                best = min(best, float(np.min(self.pou.eps0(alpha, pts[active], self.moll.radius))) / 3.0)
        return best

    def to_dict(self) -> dict:
        return {**super().to_dict(), "mollifier": self.moll.to_dict(), "pou": self.pou.to_dict()}


def build_kernel(manifold: Manifold, moll: Mollifier, omega_ref: NForm | None = None,
                 name: str | None = None) -> GluedKernel:
    """The glued kernel of grading ``moll.moment_order``."""
    if moll.dim != manifold.dim:
        raise KernelError("mollifier and manifold dimensions differ")
    return GluedKernel(manifold, moll, omega_ref, name)


# ----------------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------------

def metric_distance(metric: Metric, manifold: Manifold, p, qs) -> np.ndarray:
    """Length of the straight segment from ``p`` to each ``q`` (shortest periodic representative).

    Exact for constant metrics and in one dimension; an upper bound of the
    Riemannian distance otherwise.
    """
    p = _point(p, manifold.dim)
    d = manifold.displacement(p[None, :], qs)
    nodes, weights = np.polynomial.legendre.leggauss(16)
    t = 0.5 * (nodes + 1.0)
    total = np.zeros(len(d))
    for tk, wk in zip(t, weights):
        h = metric(p[None, :] + tk * d)
        total += 0.5 * wk * np.sqrt(np.einsum("ni,nij,nj->n", d, h, d))
    return total


def support_radius(form: NForm, p, metric: Metric, samples: int | None = None) -> tuple:
    """``(radius, resolution)``: largest metric distance from ``p`` to a sampled point of
    nonzero density, and the sampling step of the scan."""
    manifold = form.manifold
    samples = samples or (801 if manifold.dim == 1 else 81)
    radius, resolution = 0.0, 0.0
    for box in form.support_boxes():
        axes = [np.linspace(a, b, samples) for a, b in zip(box.lo, box.hi)]
        pts = np.array(list(itertools.product(*axes)), dtype=float)
        nonzero = form.density(pts) != 0.0
        if np.any(nonzero):
            radius = max(radius, float(np.max(metric_distance(metric, manifold, p, pts[nonzero]))))
        step = max(w / (samples - 1) for w in box.widths)
        resolution = max(resolution, float(np.max(metric_distance(
            metric, manifold, box.center, box.center[None, :] + step))))
    return radius, resolution


def grading_functions(manifold: Manifold, m: int) -> list:
    """Finite proxy for all smooth functions when testing a grading of order ``m``.

    Chart-coordinate monomials up to degree ``m + 1`` (cut off smoothly inside
    the chart on periodic manifolds) and two global smooth functions.
    """
    dim = manifold.dim
    out = []
    chart = manifold.charts[0]
    cut = None
    if any(manifold.periodic):
        cut = [plateau_cutoff_factor(manifold, ax) for ax in range(dim)]
    for beta in multi_indices(dim, m + 1, 1):
        out.append(_coordinate_monomial(manifold, chart, beta, cut))
    if dim == 1:
        out += [sine(1), exp_cos(1)]
    else:
        out += [sine(2, 0) * cosine(2, 1), exp_cos(2, 1)]
    return out


def plateau_cutoff_factor(manifold: Manifold, ax: int) -> Callable:
    if not manifold.periodic[ax]:
        return lambda t: np.ones_like(t)
    return lambda t: plateau_cutoff(t, 0.6 * math.pi, 0.9 * math.pi)


def _coordinate_monomial(manifold, chart, beta, cut):
    def f(pts):
        pts = manifold.canonical(pts)
        y = chart.forward(pts)
        val = np.prod(y ** np.asarray(beta)[None, :], axis=1)
        if cut is not None:
            for ax, c in enumerate(cut):
                val = val * c(pts[:, ax])
        return val

    return SmoothFunction(manifold.dim, f, None, "y^" + "".join(map(str, beta)))


def two_point_density(kernel: SmoothingKernel, eps: float, p, qs, ops: Sequence,
                      step: float | None = None) -> np.ndarray:
    """Density at ``qs`` of ``O_1 ... O_j Phi(eps, p)`` where each op is
    ``("q", Y)`` for ``L_Y`` in the form slot or ``("pq", X)`` for ``L'_X + L_X``.

    A parameter-slot derivative ``L'_X`` with only form-slot operators inside
    it is exact when the kernel provides ``parameter_derivative``.  Nested ones
    (``k > 1``) are central differences along ``X(p)`` with step ``1e-3 eps``;
    their truncation error is not cancelled by the form slot and can dominate
    at small eps.
    """
    h = step or 1e-3 * eps
    p = _point(p, kernel.manifold.dim)

    def build(ops_left, point):
        if not ops_left:
            return lambda: kernel(eps, point)
        kind, field = ops_left[0]
        inner_at = lambda pt: build(ops_left[1:], pt)  # noqa: E731
        if kind == "q":
            return lambda: lie_form(field, inner_at(point)())
        if kind == "pq":
            v = field(point[None, :])[0]
            inner = ops_left[1:]
            if all(k == "q" for k, _ in inner) and hasattr(kernel, "parameter_derivative"):
                # q-slot operators commute with the parameter derivative
                def exact():
                    moved, form = kernel.parameter_derivative(eps, point, v), kernel(eps, point)
                    for _, y in reversed(inner):
                        moved, form = lie_form(y, moved), lie_form(y, form)
                    return moved + lie_form(field, form)

                return exact

            def combined():
                plus = inner_at(point + h * v)()
                minus = inner_at(point - h * v)()
                return (plus - minus) * (0.5 / h) + lie_form(field, inner_at(point)())

            return combined
        raise ValueError(f"unknown operator kind {kind!r}")

    return build(list(ops), p)().density(qs)


def _growth_sweep(kernel, K, ladder, ops, grid_n):
    sups, mags = [], []
    for eps in ladder.eps:
        best, mag = 0.0, 0.0
        for p in K.base_points():
            radius = kernel.support_scale * eps * 1.05
            axes = [np.linspace(c - radius, c + radius, grid_n) for c in p]
            qs = np.array(list(itertools.product(*axes)), dtype=float)
            vals = np.abs(two_point_density(kernel, eps, p, qs, ops))
            best = max(best, float(np.max(vals)))
            mag = max(mag, float(np.max(np.abs(kernel(eps, p).density(qs)))) / eps ** len(ops))
        sups.append(best)
        mags.append(mag)
    return np.array(sups), np.array(mags)


def validate_kernel(kernel: SmoothingKernel, K: SampleGrid, mode: str, *,
                    ladder: EpsilonLadder | None = None, k: int = 0, l: int = 0,
                    fields: Sequence[VectorField] = (), m: int | None = None,
                    functions: Sequence[SmoothFunction] | None = None,
                    metric: Metric | None = None, slack: float = SLACK,
                    trace: TraceLog | None = None) -> dict:
    """Verdict report for ``mode`` in ``{"support", "growth", "grading"}``.

    * support: ``C = max radius / eps`` over the ladder; passes when finite and
      the per-rung ratios stay within a factor 2 of each other.
    * growth: fitted order of ``sup |L_Y ... (L'_X + L_X) ... Phi(eps,p)(q)|`` over
      ``p`` in ``K`` and ``q`` in the support; passes when ``>= -(n + l) - slack``.
    * grading: fitted order of ``sup_K |f(p) - int f Phi(eps,p)|`` per function;
      passes when ``>= m + 1 - slack``.
    """
    ladder = ladder or EpsilonLadder()
    n = kernel.manifold.dim
    report = {"kernel": kernel.to_dict(), "mode": mode, "grid": K.to_dict(), "ladder": ladder.to_dict()}
    clean = kernel.clean_eps(K.base_points())
    if mode == "support":
        metric = metric or euclidean_metric(n)
        ratios = []
        for eps in ladder.eps:
            worst = 0.0
            for p in K.base_points():
                radius, resolution = support_radius(kernel(eps, p), p, metric)
                if resolution > 0.1 * radius:
                    raise LadderError(f"support radius {radius:.3g} under-resolved at eps = {eps:g}")
                worst = max(worst, radius)
            ratios.append(worst / eps)
        ratios = np.array(ratios)
        in_regime = ladder.eps <= clean
        stable = ratios[in_regime] if np.any(in_regime) else ratios
        c = float(np.max(stable))
        ok = bool(np.isfinite(c) and np.max(stable) <= 2.0 * np.min(stable))
        if trace is not None:
            trace.add(f"support[{kernel.name}][{metric.name}]", ladder.eps, ratios)
        report.update({"metric": metric.name, "C": c, "ratios": ratios.tolist(),
                       "eps0": float(min(clean, ladder.eps0)), "pass": ok})
        return report
    if mode == "growth":
        if k + l > 3:
            raise ValueError("k + l must not exceed 3")
        if k + l and not fields:
            raise ValueError("growth mode with derivatives needs vector fields")
        fields = list(fields) or [None]
        ops = [("q", fields[(k + j) % len(fields)]) for j in range(l)] + \
              [("pq", fields[j % len(fields)]) for j in range(k)]
        grid_n = 161 if n == 1 else 33
        sups, mags = _growth_sweep(kernel, K, ladder, ops, grid_n)
        est = estimate_order(zip(ladder.eps, sups), floor=resolution_floor(mags))
        if trace is not None:
            trace.add(f"growth[{kernel.name}][k={k},l={l}]", ladder.eps, sups)
        report.update({"k": k, "l": l, "estimate": est.to_dict(), "threshold": -(n + l),
                       "pass": bool(est.at_least(-(n + l), slack))})
        return report
    if mode == "grading":
        m = kernel.grading if m is None else m
        functions = list(functions) if functions is not None else grading_functions(kernel.manifold, m)
        sups = np.zeros((len(functions), ladder.length))
        mags = np.zeros_like(sups)
        canonical = kernel.manifold.canonical
        for j, eps in enumerate(ladder.eps):
            for p in K.base_points():
                qs, ws = kernel(eps, p).weighted_nodes()
                qs = canonical(qs)
                for i, f in enumerate(functions):
                    fp = float(f(p[None, :])[0])
                    fq = f(qs)
                    sups[i, j] = max(sups[i, j], abs(fp - float(np.dot(ws, fq))))
                    mags[i, j] = max(mags[i, j], abs(fp) + float(np.dot(np.abs(ws), np.abs(fq))))
        rows, ok = [], True
        for i, f in enumerate(functions):
            est = estimate_order(zip(ladder.eps, sups[i]), floor=resolution_floor(mags[i]))
            if trace is not None:
                trace.add(f"grading[{kernel.name}][{f.name}]", ladder.eps, sups[i])
            passed = est.at_least(m + 1, slack)
            ok &= passed
            rows.append({"function": f.name, **est.to_dict(), "pass": bool(passed)})
        report.update({"m": m, "functions": rows, "pass": bool(ok),
                       "note": "finite function set standing in for all smooth functions"})
        return report
    raise ValueError(f"unknown validation mode {mode!r}")


# ----------------------------------------------------------------------------
# Localization
# ----------------------------------------------------------------------------

def _chart_param_interval(chart: Chart):
    return np.array(chart.param_box.lo), np.array(chart.param_box.hi)


def _support_in_chart(form: NForm, chart: Chart) -> bool:
    lo, hi = _chart_param_interval(chart)
    manifold = form.manifold
    for box in form.support_boxes():
        center = manifold.nearest_representative(box.center[None, :], (lo + hi) / 2)[0]
        shift = center - box.center
        if np.any(np.asarray(box.lo) + shift <= lo) or np.any(np.asarray(box.hi) + shift >= hi):
            return False
    return True


def localize_kernel(kernel: SmoothingKernel, chart: Chart | str) -> TestObjectFamily:
    """Local test objects ``phi(eps,x)(y) = eps^n (psi^{-1})^* Phi(eps, psi^{-1} x) (eps y + x)``.

    The family is weak: it is defined where ``supp Phi(eps, psi^{-1} x)`` lies in
    the chart domain.
    """
    manifold = kernel.manifold
    if isinstance(chart, str):
        chart = manifold.charts[manifold.chart_index(chart)]
    if chart not in manifold.charts:
        raise KernelError(f"chart {chart.name} is not in the atlas of {kernel.name}")
    n = manifold.dim

    def func(eps, x):
        p = chart.inverse(x[None, :])[0]
        form = kernel(eps, p)
        boxes = []
        for box in form.support_boxes():
            rep = manifold.nearest_representative(box.shell(0.0, 3), p)
            img = chart.forward(rep)
            boxes.append(Box(tuple(img.min(axis=0)), tuple(img.max(axis=0))))
        hull = boxes[0]
        for b in boxes[1:]:
            hull = hull.hull(b)
        local = hull.affine(1.0 / eps, -x / eps)

        def f(y):
            pts = eps * y + x[None, :]
            out = np.zeros(len(pts))
            ok = chart.image_contains(pts)
            if np.any(ok):
                out[ok] = eps ** n * form.coefficient(chart, pts[ok])
            return out

        return TestFunction(n, f, local, None, f"loc[{chart.name}]({kernel.name})")

    def domain(eps, xs):
        out = np.zeros(len(xs), dtype=bool)
        inside = chart.image_contains(xs)
        for i in np.flatnonzero(inside):
            p = chart.inverse(xs[i][None, :])[0]
            out[i] = _support_in_chart(kernel(eps, p), chart)
        return out

    def eps0(box):
        lo, hi = _chart_param_interval(chart)
        pre = chart.as_diffeo().preimage_box(box)
        gap = min(min(a - b for a, b in zip(pre.lo, lo)), min(a - b for a, b in zip(hi, pre.hi)))
        if gap <= 0:
            return 0.0
        corners = np.array(list(itertools.product(*zip(pre.lo, pre.hi))))
        axes = [np.linspace(a, b, 41) for a, b in zip(pre.lo, pre.hi)]
        pts = np.concatenate([corners, np.array(list(itertools.product(*axes)))])
        return min(1.0, kernel.clean_eps(pts), 0.99 * gap / kernel.support_scale)

    lip = max(float(np.max(ax.map.d1(np.linspace(ax.lo, ax.hi, 257)))) for ax in chart.axes)
    return TestObjectFamily(n, func, name=f"localize[{chart.name}]({kernel.name})",
                            support_radius=kernel.support_scale * lip,
                            moment_class=("delta", kernel.grading), weak=True,
                            domain=domain, eps0=eps0, meta={"kernel": kernel.name, "chart": chart.name})


class GlobalizedKernel(SmoothingKernel):
    """``Phi(eps,p) = (1 - chi(p) lambda(eps)) Phi_1(eps,p)
    + chi(p) lambda(eps) psi^*(T_{psi p} S_eps phi(eps, psi p) * chi_1 d^n y)``."""

    def __init__(self, fam: TestObjectFamily, chart: Chart, base: SmoothingKernel,
                 chi: SmoothFunction, chi1: tuple, eta: float, name: str | None = None):
        self.fam = fam
        self.chart = chart
        self.base = base
        self.chi = chi
        self.chi1 = chi1
        self.eta = float(eta)
        grading = base.grading
        super().__init__(base.manifold, grading, name or f"globalize({fam.name})",
                         max(base.support_scale, fam.support_radius * _inverse_lipschitz(chart)))

    def weight(self, eps: float, p) -> float:
        c = float(self.chi(_point(p, self.manifold.dim)[None, :])[0])
        return c * float(cutoff_ramp(eps, self.eta))

    def __call__(self, eps: float, p) -> NForm:
        p = _point(p, self.manifold.dim)
        w = self.weight(eps, p)
        base = self.base(eps, p)
        if w == 0.0:
            return base
        x = self.chart.forward(p[None, :])[0]
        local = scale_translate(self.fam(eps, x), eps, x).multiply(self.chi1[0], self.chi1[1], "chi1")
        return base * (1.0 - w) + chart_form(self.manifold, self.chart, local) * w

    def clean_eps(self, points) -> float:
        return min(self.base.clean_eps(points), self.eta / 3.0)


def _inverse_lipschitz(chart: Chart) -> float:
    return max(float(np.max(1.0 / ax.map.d1(np.linspace(ax.lo, ax.hi, 257)))) for ax in chart.axes)


def chart_cutoffs(manifold: Manifold, chart: Chart, K: Box, margin: float = 0.2) -> tuple:
    """Cutoffs for globalization around ``K`` (chart coordinates).

    ``chi`` equals one on a neighbourhood of ``K`` and ``chi_1`` equals one on
    a neighbourhood of the support of ``chi``; both are products of smooth
    plateau steps.  Returns ``(chi, chi1, gap)`` where ``gap`` is the distance
    between ``supp chi`` and the boundary of ``{chi_1 = 1}``.
    """
    centers = np.asarray(K.center)
    half = np.asarray(K.widths) / 2.0
    r_chi_in = half + margin
    r_chi_out = half + 2 * margin
    r_one = half + 3 * margin
    r_out = half + 4 * margin
    img_lo, img_hi = np.asarray(chart.image_box.lo), np.asarray(chart.image_box.hi)
    if np.any(centers - r_out <= img_lo) or np.any(centers + r_out >= img_hi):
        raise KernelError("chart too small for the requested cutoffs around K")

    def chi_fn(pts):
        y = chart.forward(manifold.canonical(pts))
        return np.prod(plateau_cutoff(np.abs(y - centers), r_chi_in, r_chi_out), axis=1)

    def chi1_value(y):
        y = np.atleast_2d(y)
        return np.prod(plateau_cutoff(np.abs(y - centers), r_one, r_out), axis=1)

    def chi1_grad(y):
        y = np.atleast_2d(y)
        d = y - centers
        vals = plateau_cutoff(np.abs(d), r_one, r_out)
        ders = plateau_cutoff_derivative(np.abs(d), r_one, r_out) * np.sign(d)
        out = np.empty_like(y)
        for i in range(y.shape[1]):
            others = np.prod(np.delete(vals, i, axis=1), axis=1) if y.shape[1] > 1 else 1.0
            out[:, i] = ders[:, i] * others
        return out

    chi = SmoothFunction(manifold.dim, chi_fn, None, "chi")
    gap = float(np.min(r_one - r_chi_out))
    return chi, (chi1_value, chi1_grad), gap


def globalize_test_object(fam: TestObjectFamily, chart: Chart | str, base: SmoothingKernel,
                          K: Box, margin: float = 0.2) -> GlobalizedKernel:
    """Insert a local test-object family into a kernel around the chart box ``K``."""
    manifold = base.manifold
    if isinstance(chart, str):
        chart = manifold.charts[manifold.chart_index(chart)]
    if fam.weak:
        raise KernelError("globalization needs a family defined on all of (0,1] x Omega")
    chi, chi1, gap = chart_cutoffs(manifold, chart, K, margin)
    eta = min(1.0, 0.99 * gap / fam.support_radius)
    if eta <= 0:
        raise KernelError("family supports do not fit inside the plateau of chi_1")
    return GlobalizedKernel(fam, chart, base, chi, chi1, eta)
