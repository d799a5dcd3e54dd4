"""Global generalized functions on manifolds.

Representatives ``R(omega, p)`` take a unit-integral n-form and a point.  They
are tested along kernel paths ``eps -> R(Phi(eps, p), p)`` and their Lie
derivatives, compared with their chart representatives, and related to
distributions through association.
"""
from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .calculus import (SLACK, Box, EpsilonLadder, LadderError, SampleGrid, TraceLog, central_gateaux,
                       gateaux, gauss_rule)
from .distributions import ManifoldDistribution
from .local_colombeau import LocalGF, Moderate, Negligible, sup_sweep, test_local
from .manifold import (Chart, Manifold, NForm, SmoothFunction, VectorField, chart_form, constant_field,
                       density_form, lie_form)
from .mollifier import TestFunction, bump
from .smoothing_kernels import SmoothingKernel, localize_kernel

#: Default tolerance of association limits.
ASSOC_TOL = 1e-3


class GlobalGF:
    """Representative ``R(omega, p)`` on ``A_0(M) x M``."""

    linear_in_omega = False
    d1_channel = False

    def __init__(self, manifold: Manifold, name: str = "R"):
        self.manifold = manifold
        self.name = name

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def eval(self, omega: NForm, p) -> float:
        raise NotImplementedError

    def __call__(self, omega, p) -> float:
        return self.eval(omega, p)

    def magnitude(self, omega, p) -> float:
        return abs(self.eval(omega, p))

    def d1(self, omega, p, psi) -> float:
        return central_gateaux(self, omega, p, psi).value

    def lie_p(self, omega, p, field: VectorField, step: float = 1e-5) -> float:
        """``L_X(R(omega, .))`` at ``p`` with ``omega`` held fixed."""
        p = np.asarray(p, dtype=float).reshape(self.dim)
        v = field(p[None, :])[0]
        return (self.eval(omega, p + step * v) - self.eval(omega, p - step * v)) / (2 * step)

    def path_lie(self, kernel: SmoothingKernel, eps: float, p, fields: Sequence[VectorField]):
        """Analytic ``L_{X_1} ... L_{X_k} (p -> R(Phi(eps,p), p))`` as ``(value, magnitude)``, or ``None``."""
        return None

    @property
    def singular_points(self) -> tuple:
        return ()

    def __add__(self, other):
        return SumGlobal([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return SumGlobal([(1.0, self), (-1.0, other)])

    def __mul__(self, other):
        if isinstance(other, GlobalGF):
            return ProductGlobal(self, other)
        return SumGlobal([(float(other), self)])

    def __rmul__(self, other):
        return SumGlobal([(float(other), self)])

    def __neg__(self):
        return SumGlobal([(-1.0, self)])

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class IotaGlobal(GlobalGF):
    """``(omega, p) -> <u, omega>``."""

    linear_in_omega = True
    d1_channel = True

    def __init__(self, u: ManifoldDistribution, name: str | None = None):
        super().__init__(u.manifold, name or f"iota({u.kind})")
        self.u = u

    def eval(self, omega, p):
        return self.u.pair(omega)

    def magnitude(self, omega, p):
        return self.u.magnitude(omega)

    def d1(self, omega, p, psi):
        return self.u.pair(psi)

    def lie_p(self, omega, p, field, step=1e-5):
        return 0.0

    @property
    def singular_points(self):
        return self.u.singular_points


class SigmaGlobal(GlobalGF):
    """``(omega, p) -> f(p)``."""

    d1_channel = True

    def __init__(self, f: SmoothFunction, manifold: Manifold, name: str | None = None):
        super().__init__(manifold, name or f"sigma({f.name})")
        self.f = f

    def eval(self, omega, p):
        return float(self.f(np.asarray(p, dtype=float)[None, :])[0])

    def d1(self, omega, p, psi):
        return 0.0

    def lie_p(self, omega, p, field, step=1e-5):
        return float(self.f.lie(field)(np.asarray(p, dtype=float)[None, :])[0])

    def path_lie(self, kernel, eps, p, fields):
        g = self.f
        for field in reversed(list(fields)):
            g = g.lie(field)
        v = float(g(np.asarray(p, dtype=float)[None, :])[0])
        return v, abs(v)


class SumGlobal(GlobalGF):
    d1_channel = True

    def __init__(self, terms):
        flat = []
        for c, r in terms:
            if isinstance(r, SumGlobal):
                flat.extend((c * c2, r2) for c2, r2 in r.terms)
            else:
                flat.append((float(c), r))
        self.terms = tuple(flat)
        super().__init__(flat[0][1].manifold, " + ".join(f"{c:g}*{r.name}" for c, r in flat))
        self.linear_in_omega = all(r.linear_in_omega for _, r in flat)

    def eval(self, omega, p):
        return sum(c * r.eval(omega, p) for c, r in self.terms)

    def magnitude(self, omega, p):
        return sum(abs(c) * r.magnitude(omega, p) for c, r in self.terms)

    def d1(self, omega, p, psi):
        return sum(c * gateaux(r, omega, p, psi, check=False) for c, r in self.terms)

    def lie_p(self, omega, p, field, step=1e-5):
        return sum(c * r.lie_p(omega, p, field, step) for c, r in self.terms)

    @property
    def singular_points(self):
        return tuple(dict.fromkeys(sp for _, r in self.terms for sp in r.singular_points))


class ProductGlobal(GlobalGF):
    d1_channel = True

    def __init__(self, left: GlobalGF, right: GlobalGF):
        super().__init__(left.manifold, f"({left.name})*({right.name})")
        self.left, self.right = left, right

    def eval(self, omega, p):
        return self.left.eval(omega, p) * self.right.eval(omega, p)

    def magnitude(self, omega, p):
        return self.left.magnitude(omega, p) * self.right.magnitude(omega, p)

    def d1(self, omega, p, psi):
        return (gateaux(self.left, omega, p, psi, check=False) * self.right.eval(omega, p)
                + self.left.eval(omega, p) * gateaux(self.right, omega, p, psi, check=False))

    def lie_p(self, omega, p, field, step=1e-5):
        return (self.left.lie_p(omega, p, field, step) * self.right.eval(omega, p)
                + self.left.eval(omega, p) * self.right.lie_p(omega, p, field, step))

    @property
    def singular_points(self):
        return tuple(dict.fromkeys(self.left.singular_points + self.right.singular_points))


class LieDerivedGlobal(GlobalGF):
    """``(L^ R)(omega, p) = -d_1 R(omega, p)(L_X omega) + L_X(R(omega, .))|_p``."""

    def __init__(self, base: GlobalGF, field: VectorField):
        super().__init__(base.manifold, f"L[{field.name}]({base.name})")
        self.base = base
        self.field = field
        self.linear_in_omega = base.linear_in_omega
        self.d1_channel = base.linear_in_omega

    def eval(self, omega, p):
        if self.field.zero:
            return 0.0
        direction = lie_form(self.field, omega)
        return -gateaux(self.base, omega, p, direction, check=not self.base.d1_channel) + \
            self.base.lie_p(omega, p, self.field)

    def magnitude(self, omega, p):
        if self.field.zero:
            return 0.0
        return self.base.magnitude(lie_form(self.field, omega), p) + abs(self.base.lie_p(omega, p, self.field))

    def d1(self, omega, p, psi):
        if self.base.linear_in_omega:
            return self.eval(psi, p)
        return central_gateaux(self, omega, p, psi).value

    @property
    def singular_points(self):
        return self.base.singular_points


def embed(obj, manifold: Manifold | None = None) -> GlobalGF:
    """``iota(u)`` for a distribution on a manifold, ``sigma(f)`` for a smooth function."""
    if isinstance(obj, ManifoldDistribution):
        return IotaGlobal(obj)
    if isinstance(obj, SmoothFunction):
        if manifold is None:
            raise ValueError("embedding a smooth function needs the manifold")
        return SigmaGlobal(obj, manifold)
    raise TypeError(f"cannot embed {type(obj).__name__}")


def lie_derivative_global(R: GlobalGF, field: VectorField) -> GlobalGF:
    return LieDerivedGlobal(R, field)


# ----------------------------------------------------------------------------
# Chart representatives
# ----------------------------------------------------------------------------

class LocalRepGlobal(LocalGF):
    """``(phi, x) -> R(psi^*(phi d^n y), psi^{-1}(x))``."""

    def __init__(self, base: GlobalGF, chart: Chart):
        super().__init__(base.dim, f"{base.name}@{chart.name}")
        self.base = base
        self.chart = chart
        self.linear_in_omega = base.linear_in_omega
        self.d1_channel = True

    def _form(self, phi):
        return chart_form(self.base.manifold, self.chart, phi)

    def _point(self, x):
        return self.chart.inverse(np.asarray(x, dtype=float)[None, :])[0]

    def eval(self, phi, x):
        return self.base.eval(self._form(phi), self._point(x))

    def magnitude(self, phi, x):
        return self.base.magnitude(self._form(phi), self._point(x))

    def d1(self, phi, x, psi):
        return gateaux(self.base, self._form(phi), self._point(x), self._form(psi), check=False)

    @property
    def singular_points(self):
        pts = [sp for sp in self.base.singular_points if self.chart.contains(np.array([sp]))[0]]
        return tuple(tuple(self.chart.forward(np.array([sp]))[0]) for sp in pts)


def local_rep_global(R: GlobalGF, chart: Chart | str) -> LocalGF:
    """The chart representative of ``R``."""
    if isinstance(chart, str):
        chart = R.manifold.charts[R.manifold.chart_index(chart)]
    return LocalRepGlobal(R, chart)


# ----------------------------------------------------------------------------
# Kernel paths
# ----------------------------------------------------------------------------

def path_step(eps: float) -> float:
    return max(1e-3 * eps, 1e-7)


def kernel_path(R: GlobalGF, kernel: SmoothingKernel, eps: float, p,
                fields: Sequence[VectorField] = (), analytic: bool = True) -> tuple:
    """``(value, magnitude)`` of ``L_{X_1} ... L_{X_k} (p -> R(Phi(eps,p), p))`` at ``p``.

    Lie derivatives are nested central differences along the fields with step
    ``1e-3 eps`` unless ``R`` supplies an analytic channel.
    """
    p = np.asarray(p, dtype=float).reshape(R.dim)
    fields = list(fields)
    if not fields:
        form = kernel(eps, p)
        return R.eval(form, p), R.magnitude(form, p)
    if analytic:
        out = R.path_lie(kernel, eps, p, fields)
        if out is not None:
            return float(out[0]), float(out[1])
    h = path_step(eps)
    v = fields[0](p[None, :])[0]
    a, ma = kernel_path(R, kernel, eps, p + h * v, fields[1:], analytic)
    b, mb = kernel_path(R, kernel, eps, p - h * v, fields[1:], analytic)
    return (a - b) / (2 * h), (ma + mb) / (2 * h)


def _grid_for(R: GlobalGF, K: SampleGrid, kernels) -> SampleGrid:
    pts = R.singular_points
    if not pts:
        return K
    return K.with_focus(pts, 1.5 * max(k.support_scale for k in kernels))


def _field_words(fields: Sequence[VectorField], k: int) -> list:
    return [list(w) for w in itertools.product(fields, repeat=k)]


def kernel_sweep(R: GlobalGF, kernel: SmoothingKernel, K: SampleGrid, ladder: EpsilonLadder,
                 fields: Sequence[VectorField] = (), floor_factor: float = 1e3):
    grid = _grid_for(R, K, [kernel])
    return sup_sweep(lambda eps, p: kernel_path(R, kernel, eps, p, fields), grid, ladder, floor_factor)


def test_global(R: GlobalGF, K: SampleGrid, kernels: Sequence[SmoothingKernel], mode, *,
                fields: Sequence[VectorField] | None = None, ladder: EpsilonLadder | None = None,
                slack: float = SLACK, trace: TraceLog | None = None,
                floor_factor: float = 1e3) -> dict:
    """Moderateness or negligibility verdict for ``R`` on the sample set ``K``.

    ``mode.alpha_max`` is the largest number ``k`` of Lie derivatives, taken
    along all words of length ``k`` in ``fields`` (default: coordinate fields).
    Negligible mode also reports the verdict obtained with ``k = 0`` alone.
    """
    ladder = ladder or EpsilonLadder()
    fields = list(fields) if fields is not None else coordinate_fields(R.dim)
    report = {"claim": None, "R": R.name, "manifold": R.manifold.name, "grid": K.to_dict(),
              "ladder": ladder.to_dict(), "fields": [f.name for f in fields]}

    def sweep(kernel, word):
        sw = kernel_sweep(R, kernel, K, ladder, word, floor_factor)
        if trace is not None:
            trace.add(f"{R.name}|{kernel.name}|{'.'.join(f.name for f in word) or '-'}", sw.eps, sw.sup)
        return sw.estimate

    if isinstance(mode, Moderate):
        rows, worst = [], math.inf
        for kernel in kernels:
            for k in range(mode.alpha_max + 1):
                for word in _field_words(fields, k):
                    est = sweep(kernel, word)
                    rows.append({"kernel": kernel.name, "k": k, "fields": [f.name for f in word],
                                 **est.to_dict(), "fit_ok": est.fit_ok()})
                    if not est.floor_hit:
                        worst = min(worst, est.order)
        n = 0 if math.isinf(worst) else max(0, math.ceil(-worst - slack))
        report.update({"claim": "moderate", "kernels": [k.name for k in kernels], "orders": rows,
                       "N_or_r": n, "pass": all(r["fit_ok"] for r in rows)})
        return report
    if isinstance(mode, Negligible):
        by_m = mode.families_by_m or {max(k.grading for k in kernels): list(kernels)}
        profile = {}
        for m in sorted(by_m):
            profile[m] = {}
            for k in range(mode.alpha_max + 1):
                profile[m][k] = [(kern.name, [f.name for f in word], sweep(kern, word))
                                 for kern in by_m[m] for word in _field_words(fields, k)]
        full = _verdicts(profile, mode.r, mode.alpha_max, slack)
        k0 = _verdicts(profile, mode.r, 0, slack)
        report.update({"claim": "negligible",
                       "kernels": {str(m): [k.name for k in by_m[m]] for m in by_m},
                       "orders": {str(m): {str(k): [{"kernel": n, "fields": w, **e.to_dict()}
                                                    for n, w, e in profile[m][k]]
                                           for k in profile[m]} for m in profile},
                       "N_or_r": full["m_for_r"], "pass": full["pass"], "k0_only": k0,
                       "note": "certified over the supplied kernels only"})
        return report
    raise TypeError(f"unknown mode {mode!r}")


test_global.__test__ = False


def _verdicts(profile, rs, k_max, slack):
    m_for_r, ok = {}, True
    for r in rs:
        found = None
        for m in sorted(profile):
            ests = [e for k in range(k_max + 1) for _, _, e in profile[m].get(k, [])]
            if ests and all(e.at_least(r, slack) for e in ests):
                found = m
                break
        m_for_r[str(r)] = found
        ok &= found is not None
    return {"m_for_r": m_for_r, "pass": bool(ok)}


def coordinate_fields(dim: int) -> list:
    return [constant_field(dim, np.eye(dim)[i]) for i in range(dim)]


def localization_check(R: GlobalGF, K_chart: Box, kernels: Sequence[SmoothingKernel], mode,
                       chart: Chart | str, *, ladder: EpsilonLadder | None = None, n: int = 41,
                       slack: float = SLACK) -> dict:
    """Compare the global verdict on ``psi^{-1}(K)`` with the local verdict of the chart
    representative tested with the localized kernels on ``K``.

    Global Lie derivatives use the coordinate fields of ``chart`` pulled back
    to parameter coordinates, so both sides differentiate along the same
    directions.
    """
    manifold = R.manifold
    if isinstance(chart, str):
        chart = manifold.charts[manifold.chart_index(chart)]
    ladder = ladder or EpsilonLadder()
    if isinstance(mode, Negligible):
        by_m = mode.families_by_m or {max(k.grading for k in kernels): list(kernels)}
        fam_by_m = {m: [localize_kernel(k, chart) for k in ks] for m, ks in by_m.items()}
        all_fams = [f for fs in fam_by_m.values() for f in fs]
        local_mode = Negligible(mode.alpha_max, mode.r, fam_by_m)
    else:
        all_fams = [localize_kernel(k, chart) for k in kernels]
        local_mode = mode
    K_loc = SampleGrid(K_chart, n)
    e0 = min(f.eps0(K_chart) for f in all_fams)
    if e0 <= 0:
        raise LadderError("the chart box is not inside the localized domain")
    ladder = ladder.truncated(e0) if ladder.eps0 > e0 else ladder
    pre = chart.as_diffeo().preimage_box(K_chart)
    K_glob = SampleGrid(pre, n)
    fields = chart_coordinate_fields(chart)
    glob = test_global(R, K_glob, kernels, mode, fields=fields, ladder=ladder, slack=slack)
    loc = test_local(local_rep_global(R, chart), K_loc, all_fams if not isinstance(mode, Negligible) else [],
                     local_mode, ladder=ladder, slack=slack)
    agree = glob["pass"] == loc["pass"]
    if isinstance(mode, Negligible):
        agree = agree and glob["k0_only"]["pass"] == loc["k0_only"]["pass"]
    return {"chart": chart.name, "global": glob, "local": loc, "agree": bool(agree)}


def chart_coordinate_fields(chart: Chart) -> list:
    """Coordinate fields ``d/dy_i`` of ``chart`` in parameter coordinates."""
    out = []
    for i in range(chart.dim):
        def comp(p, i=i):
            jd = chart.jacobian_diag(p)
            v = np.zeros_like(p)
            v[:, i] = 1.0 / jd[:, i]
            return v

        out.append(VectorField(chart.dim, comp, None, f"d/dy{i}[{chart.name}]"))
    return out


# ----------------------------------------------------------------------------
# Association
# ----------------------------------------------------------------------------

def _pairing_target(target, omega: NForm) -> float:
    if target is None or (isinstance(target, (int, float)) and target == 0):
        return 0.0
    if isinstance(target, ManifoldDistribution):
        return target.pair(omega)
    if callable(target):
        return float(target(omega))
    raise TypeError(f"unsupported association target {target!r}")


def path_integral(R: GlobalGF, kernel: SmoothingKernel, eps: float, omega: NForm,
                  panels: int = 16) -> float:
    """``int_M R(Phi(eps, p), p) omega(p)`` by composite Gauss panels on the support of ``omega``.

    In one dimension the support is split at ``s +- c eps`` around each
    singular point ``s`` of ``R`` (``c`` the kernel support scale), where the
    integrand varies on the scale ``eps``.
    """
    total = 0.0
    for piece in omega.pieces:
        if piece.chart is not None:
            raise ValueError("association weights must be given as parameter densities")
        box = piece.coeff.support
        cuts = []
        if R.dim == 1:
            reach = kernel.support_scale * eps
            for s in R.singular_points:
                c = omega.manifold.nearest_representative(np.array([s]), box.center)[0, 0]
                cuts += [c - reach, c + reach]
        lo, hi = box.lo[0], box.hi[0]
        edges = sorted({lo, hi, *[c for c in cuts if lo < c < hi]}) if R.dim == 1 else None
        boxes = [Box((a,), (b,)) for a, b in zip(edges[:-1], edges[1:])] if edges else [box]
        for b in boxes:
            nodes, weights = gauss_rule(b, panels, 10)
            dens = piece.coeff(nodes)
            vals = np.array([R.eval(kernel(eps, q), q) if d != 0.0 else 0.0 for q, d in zip(nodes, dens)])
            total += piece.weight * float(np.dot(weights, vals * dens))
    return total


def associate(R: GlobalGF, target, omegas: Sequence[NForm], kernels: Sequence[SmoothingKernel], *,
              ladder: EpsilonLadder | None = None, tol: float = ASSOC_TOL,
              trace: TraceLog | None = None) -> dict:
    """Association verdict: extrapolated ``lim int R(Phi(eps,p),p) omega(p)`` against ``<target, omega>``.

    The limit is the one-level Richardson value ``(I(r eps) - r I(eps)) / (1 - r)``
    from the two smallest rungs; the sequence must also contract on its last
    three rungs.
    """
    ladder = ladder or EpsilonLadder(0.04, 0.5, 6)
    rows, ok = [], True
    for kernel in kernels:
        for j, omega in enumerate(omegas):
            seq = np.array([path_integral(R, kernel, eps, omega) for eps in ladder.eps])
            r = ladder.ratio
            limit = (seq[-1] - r * seq[-2]) / (1.0 - r)
            want = _pairing_target(target, omega)
            diffs = np.abs(np.diff(seq[-3:]))
            converging = bool(diffs[-1] <= diffs[0] * 1.0 + 1e-12)
            passed = bool(abs(limit - want) <= tol and converging)
            ok &= passed
            if trace is not None:
                trace.add(f"assoc[{R.name}][{kernel.name}][omega{j}]", ladder.eps, seq)
            rows.append({"kernel": kernel.name, "omega": j, "limit": float(limit), "target": float(want),
                         "last": float(seq[-1]), "error": float(abs(limit - want)),
                         "converging": converging, "pass": passed})
    return {"claim": "associated", "R": R.name, "manifold": R.manifold.name,
            "kernels": [k.name for k in kernels], "ladder": ladder.to_dict(), "tol": tol,
            "results": rows, "pass": bool(ok)}


def weight_form(manifold: Manifold, center, radius: float, tilt: float = 0.0) -> NForm:
    """Smooth compactly supported weight ``(1 + tilt * (p - center)) * bump`` in parameter coordinates."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    b = bump(manifold.dim, radius)

    def f(p):
        d = p - c
        return b(d) * (1.0 + tilt * d[:, 0])

    def g(p):
        d = p - c
        grad = b.gradient(d) * (1.0 + tilt * d[:, 0])[:, None]
        grad[:, 0] += tilt * b(d)
        return grad

    return density_form(manifold, TestFunction(manifold.dim, f, b.support.affine(1.0, c), g,
                                               f"w[{c.tolist()},{radius:g},{tilt:g}]"))
