"""Scenario files: JSON documents that name objects and list claims to check about them.

A scenario is validated against ``data/scenario.schema.json``, its objects are
built lazily by reference, and each claim is evaluated into a report row
``{"id", "statement", "criterion", "expect", "pass", "details"}``.  Sampling
randomness is drawn from ``numpy.random.default_rng([seed, claim_index])`` so
reports are reproducible claim by claim.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from . import global_colombeau as gc
from . import local_colombeau as lc
from . import smoothing_kernels as sk
from .calculus import (AdmissibilityError, Box, EpsilonLadder, LadderError, QuadratureError,
                       SampleGrid, TraceLog, SLACK, MIN_R2)
from .diffeo import Diffeo
from .distributions import (Combination, CombinationOnManifold, Delta, Derivative, DomainError,
                            Heaviside, LieDerivedLocal, Multiplied, PointMass, PrincipalValueInvX,
                            Regular, RegularOnManifold, heaviside_on, lie_derivative_dist,
                            multiply_dist, pullback_dist)
from .manifold import (Manifold, SmoothFunction, conformal_metric, constant, constant_field, cosine,
                       euclidean_metric, exp_cos, make_manifold, monomial, sine, trig_field)
from .mollifier import MomentSystemError, build_mollifier, moments, scale_translate

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CLAIM_FAILED = 1
EXIT_SCHEMA = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (QuadratureError, LadderError, AdmissibilityError, MomentSystemError,
                    DomainError, lc.DomainViolation, sk.KernelError, FloatingPointError,
                    ZeroDivisionError, OverflowError, np.linalg.LinAlgError, ValueError)


class ScenarioError(ValueError):
    """A configuration problem, located by a JSON pointer into the document."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.message = message
        self.pointer = pointer or "/"

    def __str__(self) -> str:
        return f"{self.pointer}: {self.message}"


# ----------------------------------------------------------------------------
# Loading and validation
# ----------------------------------------------------------------------------

def _data():
    return resources.files("gfk") / "data"


def load_schema() -> dict:
    return json.loads((_data() / "scenario.schema.json").read_text())


def builtin_names() -> list:
    folder = _data() / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> dict:
    path = _data() / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ScenarioError(f"no built-in scenario named {name!r}; see 'gfk list'")
    return json.loads(path.read_text())


def load_config(source: str | Path) -> dict:
    """Read a scenario from a file path, or by built-in name when no such file exists."""
    path = Path(source)
    if path.is_file():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc
    return load_builtin(str(source))


def _pointer(parts) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def validate_config(config: dict) -> None:
    """Raise :class:`ScenarioError` at the first (deepest) schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = list(validator.iter_errors(config))
    if not errors:
        return
    err = jsonschema.exceptions.best_match(errors)
    while err.context:
        err = jsonschema.exceptions.best_match(err.context)
    parts = list(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if isinstance(err.instance, dict) and k not in err.instance]
        if missing:
            parts.append(missing[0])
    raise ScenarioError(err.message, _pointer(parts))


def parse_ladder(entry) -> EpsilonLadder:
    if isinstance(entry, EpsilonLadder):
        return entry
    if isinstance(entry, str):
        return EpsilonLadder.parse(entry)
    return EpsilonLadder(float(entry["eps0"]), float(entry["ratio"]), int(entry["length"]))


# ----------------------------------------------------------------------------
# Object construction
# ----------------------------------------------------------------------------

class Scene:
    """Lazily built objects of one scenario."""

    def __init__(self, config: dict):
        self.config = config
        self.manifold: Manifold = make_manifold(config["manifold"])
        dom = config.get("domain")
        self.domain = Box(tuple(dom["lo"]), tuple(dom["hi"])) if dom else None
        self.entries = config.get("objects", {})
        self._built: dict = {}
        self._building: set = set()

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def get(self, ref: str, expected: str | tuple | None = None, where: str = ""):
        if ref not in self.entries:
            raise ScenarioError(f"undefined object {ref!r}", where)
        entry = self.entries[ref]
        if expected is not None:
            allowed = (expected,) if isinstance(expected, str) else expected
            if entry["type"] not in allowed:
                raise ScenarioError(f"object {ref!r} is a {entry['type']}, expected {' or '.join(allowed)}",
                                    where)
        if ref not in self._built:
            if ref in self._building:
                raise ScenarioError(f"object {ref!r} refers to itself", _pointer(["objects", ref]))
            self._building.add(ref)
            try:
                self._built[ref] = BUILDERS[entry["type"]](self, ref, entry)
            finally:
                self._building.discard(ref)
        return self._built[ref]

    def level(self, ref: str) -> str:
        return self.entries[ref].get("level", "global")

    def ptr(self, ref: str, *rest) -> str:
        return _pointer(["objects", ref, *rest])


def _build_mollifier(scene, ref, entry):
    return build_mollifier(entry["dim"], entry["q"], entry.get("radius", 1.0), entry.get("sharpness", 1.0))


def _build_kernel(scene, ref, entry):
    moll = scene.get(entry["mollifier"], "mollifier", scene.ptr(ref, "mollifier"))
    if moll.dim != scene.dim:
        raise ScenarioError(f"mollifier dimension {moll.dim} does not match the manifold", scene.ptr(ref))
    if moll.moment_order != entry["grading"]:
        raise ScenarioError(f"grading {entry['grading']} needs a mollifier with q = {entry['grading']}",
                            scene.ptr(ref, "grading"))
    kernel = sk.build_kernel(scene.manifold, moll, name=ref)
    return kernel


def _build_function(scene, ref, entry) -> SmoothFunction:
    kind, n = entry["kind"], scene.dim
    axis, k = entry.get("axis", 0), entry.get("k", 1.0)
    if kind == "sin":
        return sine(n, axis, k)
    if kind == "cos":
        return cosine(n, axis, k)
    if kind == "exp_cos":
        return exp_cos(n, axis)
    if kind == "constant":
        return constant(n, entry.get("value", 1.0))
    if kind == "monomial":
        exps = entry.get("exponents", [1] * n)
        if len(exps) != n:
            raise ScenarioError("exponents must have one entry per dimension", scene.ptr(ref, "exponents"))
        return monomial(n, exps)
    parts = [scene.get(r, "function", scene.ptr(ref, "factors")) for r in entry.get("factors", [])]
    if len(parts) < 2:
        raise ScenarioError(f"{kind} needs at least two factors", scene.ptr(ref, "factors"))
    out = parts[0]
    for g in parts[1:]:
        out = out * g if kind == "product" else out + g
    return out


def _build_field(scene, ref, entry):
    if entry["kind"] == "constant":
        vec = entry.get("vector", [1.0] * scene.dim)
        if len(vec) != scene.dim:
            raise ScenarioError("vector must have one entry per dimension", scene.ptr(ref, "vector"))
        return constant_field(scene.dim, vec)
    return trig_field(scene.dim, entry.get("axis", 0), entry.get("base", 1.0), entry.get("amplitude", 0.5),
                      entry.get("along", 0), entry.get("k", 1.0), entry.get("phase", 0.0))


def _build_diffeo(scene, ref, entry):
    src = Box(tuple(entry["source"]["lo"]), tuple(entry["source"]["hi"]))
    kind = entry["kind"]
    if kind == "sine_warp":
        return Diffeo.sine_warp(entry.get("w", 0.3), src.dim, src)
    if kind == "translation":
        return Diffeo.translation(entry.get("c", [0.0] * src.dim), src)
    return Diffeo.scaling(entry.get("a", 1.0), src.dim, src)


def _build_distribution(scene, ref, entry):
    kind = entry["kind"]
    local = entry.get("level", "global") == "local"
    where = scene.ptr(ref)

    def sub(key):
        return scene.get(entry[key], "distribution", scene.ptr(ref, key)) if key in entry else _missing(key)

    def _missing(key):
        raise ScenarioError(f"a {kind} distribution needs {key!r}", where)

    def fn(key="function"):
        return scene.get(entry[key], "function", scene.ptr(ref, key)) if key in entry else _missing(key)

    at = entry.get("at", 0.0)
    if local:
        dom = scene.domain
        if kind == "delta":
            return Delta(at, entry.get("weight", 1.0), dim=scene.dim if np.ndim(at) == 0 else None, domain=dom)
        if kind == "heaviside":
            return Heaviside(float(np.atleast_1d(at)[0]), domain=dom)
        if kind == "pv_inv_x":
            return PrincipalValueInvX(domain=dom)
        if kind == "regular":
            return Regular(fn(), scene.dim, entry.get("breakpoints", ()), domain=dom, name=entry["function"])
        if kind == "derivative":
            return Derivative(sub("of"), entry.get("alpha", [1] + [0] * (scene.dim - 1)))
        if kind == "product":
            return Multiplied(sub("of"), fn())
        if kind == "combination":
            return Combination([(c, scene.get(r, "distribution", scene.ptr(ref, "terms")))
                                for c, r in entry["terms"]])
        if kind == "pullback":
            return pullback_dist(sub("of"), scene.get(entry["diffeo"], "diffeo", scene.ptr(ref, "diffeo")))
        if kind == "lie":
            return LieDerivedLocal(sub("of"), scene.get(entry["field"], "field", scene.ptr(ref, "field")))
        raise ScenarioError(f"{kind} is not available for local distributions", scene.ptr(ref, "kind"))
    M = scene.manifold
    if kind == "delta":
        return PointMass(M, np.atleast_1d(at), entry.get("weight", 1.0))
    if kind == "heaviside":
        if M.dim != 1:
            raise ScenarioError("heaviside is one-dimensional", scene.ptr(ref, "kind"))
        return heaviside_on(M, float(np.atleast_1d(at)[0]))
    if kind == "regular":
        return RegularOnManifold(M, fn(), entry.get("breakpoints", ()), name=entry["function"])
    if kind == "product":
        return multiply_dist(fn(), sub("of"))
    if kind == "combination":
        return CombinationOnManifold([(c, scene.get(r, "distribution", scene.ptr(ref, "terms")))
                                      for c, r in entry["terms"]])
    if kind == "lie":
        return lie_derivative_dist(sub("of"), scene.get(entry["field"], "field", scene.ptr(ref, "field")))
    raise ScenarioError(f"{kind} is not available for distributions on a manifold", scene.ptr(ref, "kind"))


def _build_family(scene, ref, entry):
    kind = entry["kind"]
    if kind in ("constant", "injected"):
        if "mollifier" not in entry:
            raise ScenarioError(f"a {kind} family needs 'mollifier'", scene.ptr(ref))
        phi = scene.get(entry["mollifier"], "mollifier", scene.ptr(ref, "mollifier"))
        if kind == "constant":
            return lc.constant_family(phi, name=ref)
        if "m" not in entry:
            raise ScenarioError("an injected family needs 'm'", scene.ptr(ref))
        amp = (lambda x: 1.0) if entry.get("amplitude", "one") == "one" else (lambda x: 1.0 + 0.5 * math.sin(x[0]))
        return lc.injected_family(phi, entry["m"], amp, name=ref)
    if kind == "transport":
        for key in ("family", "diffeo"):
            if key not in entry:
                raise ScenarioError(f"a transport family needs {key!r}", scene.ptr(ref))
        base = scene.get(entry["family"], "family", scene.ptr(ref, "family"))
        fam = lc.transform_family(base, scene.get(entry["diffeo"], "diffeo", scene.ptr(ref, "diffeo")))
        fam.name = ref
        return fam
    if "kernel" not in entry or "chart" not in entry:
        raise ScenarioError("a localized family needs 'kernel' and 'chart'", scene.ptr(ref))
    kernel = scene.get(entry["kernel"], "kernel", scene.ptr(ref, "kernel"))
    names = [c.name for c in scene.manifold.charts]
    if entry["chart"] not in names:
        raise ScenarioError(f"unknown chart {entry['chart']!r}; charts are {names}", scene.ptr(ref, "chart"))
    fam = sk.localize_kernel(kernel, entry["chart"])
    fam.name = ref
    return fam


def _build_gf(scene, ref, entry):
    return _expr(scene, entry["expr"], entry["level"], ["objects", ref, "expr"])


def _expr(scene, node: dict, level: str, path: list):
    (op, arg), = node.items()
    here = path + [op]
    local = level == "local"
    if op == "iota":
        u = scene.get(arg, "distribution", _pointer(here))
        if (scene.level(arg) == "local") != local:
            raise ScenarioError(f"distribution {arg!r} is not a {level} distribution", _pointer(here))
        return lc.iota(u) if local else gc.embed(u)
    if op == "sigma":
        f = scene.get(arg, "function", _pointer(here))
        return lc.sigma(f) if local else gc.embed(f, scene.manifold)
    if op == "ref":
        entry = scene.entries.get(arg, {})
        if entry.get("type") == "gf" and entry.get("level") != level:
            raise ScenarioError(f"{arg!r} is a {entry.get('level')} generalized function", _pointer(here))
        return scene.get(arg, "gf", _pointer(here))
    if op in ("add", "sub", "mul"):
        terms = [_expr(scene, a, level, here + [i]) for i, a in enumerate(arg)]
        out = terms[0]
        for t in terms[1:]:
            out = out + t if op == "add" else out - t if op == "sub" else out * t
        return out
    if op == "scale":
        return float(arg[0]) * _expr(scene, arg[1], level, here + [1])
    if op == "D":
        if not local:
            raise ScenarioError("partial derivatives apply to local generalized functions; use 'lie'",
                                _pointer(here))
        return lc.derivative_Di(_expr(scene, arg[0], level, here + [0]), int(arg[1]))
    if op == "lie":
        if local:
            raise ScenarioError("Lie derivatives apply to global generalized functions; use 'D'", _pointer(here))
        X = scene.get(arg[1], "field", _pointer(here + [1]))
        return gc.lie_derivative_global(_expr(scene, arg[0], level, here + [0]), X)
    if op == "pull":
        if not local:
            raise ScenarioError("pullback by a diffeomorphism applies to local generalized functions",
                                _pointer(here))
        mu = scene.get(arg[1], "diffeo", _pointer(here + [1]))
        return lc.pullback_local(_expr(scene, arg[0], level, here + [0]), mu)
    raise ScenarioError(f"unknown operation {op!r}", _pointer(here))


def _build_weight(scene, ref, entry):
    return gc.weight_form(scene.manifold, entry["center"], entry["radius"], entry.get("tilt", 0.0))


BUILDERS: dict = {
    "mollifier": _build_mollifier, "kernel": _build_kernel, "function": _build_function,
    "field": _build_field, "diffeo": _build_diffeo, "distribution": _build_distribution,
    "family": _build_family, "gf": _build_gf, "weight": _build_weight,
}


# ----------------------------------------------------------------------------
# Claims
# ----------------------------------------------------------------------------

@dataclass
class ClaimContext:
    scene: Scene
    claim: dict
    index: int
    ladder: EpsilonLadder
    rng: np.random.Generator
    trace: TraceLog = field(default_factory=TraceLog)

    def ptr(self, *rest) -> str:
        return _pointer(["claims", self.index, *rest])

    def get(self, key: str, expected):
        return self.scene.get(self.claim[key], expected, self.ptr(key))

    def get_all(self, key: str, expected) -> list:
        return [self.scene.get(r, expected, self.ptr(key, i)) for i, r in enumerate(self.claim[key])]

    def grid(self, key: str = "grid") -> SampleGrid:
        g = self.claim[key]
        if len(g["lo"]) != len(g["hi"]):
            raise ScenarioError("lo and hi differ in length", self.ptr(key))
        return SampleGrid(Box(tuple(g["lo"]), tuple(g["hi"])), n=g.get("n", 21), focus_n=g.get("focus_n", 21))

    def gf(self, level: str):
        ref = self.claim["gf"]
        entry = self.scene.entries.get(ref)
        if entry is None:
            raise ScenarioError(f"undefined object {ref!r}", self.ptr("gf"))
        if entry["type"] != "gf" or entry["level"] != level:
            raise ScenarioError(f"{ref!r} is not a {level} generalized function", self.ptr("gf"))
        return self.scene.get(ref, "gf", self.ptr("gf"))

    def tests(self, key: str, level: str) -> list:
        return self.get_all(key, "family" if level == "local" else "kernel")

    def groups(self, level: str) -> dict:
        return {int(m): [self.scene.get(r, "family" if level == "local" else "kernel", self.ptr("groups", m))
                         for r in refs] for m, refs in self.claim["groups"].items()}

    def fields(self) -> list | None:
        return self.get_all("fields", "field") if "fields" in self.claim else None


def _moments_claim(ctx: ClaimContext) -> tuple:
    tol_int = ctx.claim.get("tol_integral", 1e-10)
    tol_mom = ctx.claim.get("tol_moment", 1e-8)
    rows, ok = [], True
    for ref, phi in zip(ctx.claim["mollifiers"], ctx.get_all("mollifiers", "mollifier")):
        q = phi.moment_order
        table = moments(phi, max(q, 0))
        zero = (0,) * phi.dim
        integral = table[zero]
        worst = max((abs(v) for a, v in table.items() if 1 <= sum(a) <= q), default=0.0)
        scaled = []
        for eps, shift in ((0.5, 0.3), (0.1, -0.7), (0.01, 1.1)):
            psi = scale_translate(phi, eps, [shift] * phi.dim)
            scaled.append(abs(moments(psi, 0)[zero] - 1.0))
        passed = abs(integral - 1.0) <= tol_int and worst <= tol_mom and max(scaled) <= tol_int
        ok &= passed
        rows.append({"mollifier": ref, "dim": phi.dim, "q": q, "integral_error": abs(integral - 1.0),
                     "max_moment": worst, "scaled_integral_error": max(scaled), "pass": bool(passed)})
    return ok, {"tol_integral": tol_int, "tol_moment": tol_mom, "mollifiers": rows}


def _classify_claim(ctx: ClaimContext) -> tuple:
    fam = ctx.get("family", "family")
    rep = lc.classify_test_object(fam, ctx.claim["m"], ctx.grid(), ctx.ladder, trace=ctx.trace)
    ok = True
    for key in ("box", "delta"):
        want = ctx.claim.get(f"expect_{key}")
        if want is not None:
            ok &= rep[key] == want
    rep["expect_box"] = ctx.claim.get("expect_box")
    rep["expect_delta"] = ctx.claim.get("expect_delta")
    return ok, rep


def _sweep(level: str, R, test, grid: SampleGrid, ladder: EpsilonLadder, k: int, fields):
    if level == "local":
        alpha = (k,) + (0,) * (R.dim - 1)
        return lc.path_sweep(R, test, grid, ladder, alpha)
    word = [fields[0]] * k if k else []
    return gc.kernel_sweep(R, test, grid, ladder, word)


def _level(ctx: ClaimContext) -> str:
    return ctx.claim.get("level", "global")


def _rate_claim(ctx: ClaimContext) -> tuple:
    level = _level(ctx)
    R = ctx.gf(level)
    grid = ctx.grid()
    offset = ctx.claim.get("offset", 1.0)
    min_r2 = ctx.claim.get("min_r2", MIN_R2)
    rows, ok = [], True
    for m, tests in sorted(ctx.groups(level).items()):
        for t in tests:
            sw = _sweep(level, R, t, grid, ctx.ladder, 0, None)
            est = sw.estimate
            ctx.trace.add(f"{R.name}|{t.name}", sw.eps, sw.sup)
            resolved = not est.floor_hit
            passed = resolved and est.order >= m + offset - SLACK and est.r2 >= min_r2
            ok &= passed
            rows.append({"m": m, "test": t.name, "required": m + offset, **est.to_dict(), "pass": bool(passed)})
    return ok, {"R": R.name, "level": level, "slack": SLACK, "min_r2": min_r2, "rows": rows,
                "grid": grid.to_dict()}


def _moderate_claim(ctx: ClaimContext) -> tuple:
    level = _level(ctx)
    R = ctx.gf(level)
    mode = lc.Moderate(ctx.claim.get("alpha_max", 1))
    if level == "local":
        rep = lc.test_local(R, ctx.grid(), ctx.tests("tests", level), mode, ctx.ladder, trace=ctx.trace)
    else:
        rep = gc.test_global(R, ctx.grid(), ctx.tests("tests", level), mode, fields=ctx.fields(),
                             ladder=ctx.ladder, trace=ctx.trace)
    ok = rep["pass"]
    if "expect_N" in ctx.claim:
        ok &= rep["N_or_r"] == ctx.claim["expect_N"]
    return ok, rep


def _moderate_order_claim(ctx: ClaimContext) -> tuple:
    level = _level(ctx)
    R = ctx.gf(level)
    grid = ctx.grid()
    n = ctx.claim.get("dimension", R.dim)
    k_max = ctx.claim.get("k_max", 2)
    tol0, tol_step = ctx.claim.get("tol_order", 0.15), ctx.claim.get("tol_step", 0.2)
    fields = ctx.fields() or gc.coordinate_fields(R.dim)
    rows, ok = [], True
    for t in ctx.tests("tests", level):
        orders = []
        for k in range(k_max + 1):
            sw = _sweep(level, R, t, grid, ctx.ladder, k, fields)
            est = sw.estimate
            ctx.trace.add(f"{R.name}|{t.name}|k={k}", sw.eps, sw.sup)
            want = -n if k == 0 else orders[-1] - 1
            tol = tol0 if k == 0 else tol_step
            passed = (not est.floor_hit) and est.fit_ok() and abs(est.order - want) <= tol
            ok &= passed
            orders.append(est.order)
            rows.append({"test": t.name, "k": k, "expected": want, "tol": tol, **est.to_dict(),
                         "pass": bool(passed)})
    return ok, {"R": R.name, "level": level, "dimension": n, "rows": rows, "grid": grid.to_dict()}


def _negligible_claim(ctx: ClaimContext) -> tuple:
    level = _level(ctx)
    R = ctx.gf(level)
    mode = lc.Negligible(ctx.claim.get("alpha_max", 0), tuple(ctx.claim["r"]), ctx.groups(level))
    if level == "local":
        rep = lc.test_local(R, ctx.grid(), [], mode, ctx.ladder, trace=ctx.trace)
    else:
        rep = gc.test_global(R, ctx.grid(), [], mode, fields=ctx.fields(), ladder=ctx.ladder, trace=ctx.trace)
    verdict = rep["pass"]
    orders = [e["order"] for by_k in rep["orders"].values() for e in by_k.get("0", [])]
    finite = [o for o in orders if o != "inf"]
    rep["max_order_k0"] = max(finite) if finite else "inf"
    if "order_below" in ctx.claim:
        rep["order_below"] = ctx.claim["order_below"]
        below = bool(finite) and max(finite) < ctx.claim["order_below"]
        rep["order_below_holds"] = below
        if ctx.claim.get("expect", "pass") == "fail":
            # the claim is expected to fail; it only counts as confirmed when the fit shows why
            return verdict or not below, rep
    return verdict, rep


def _sample_test_function(ctx: ClaimContext, mollifiers, box: Box, eps_range):
    phi = mollifiers[int(ctx.rng.integers(len(mollifiers)))]
    lo_e, hi_e = eps_range
    eps = float(math.exp(ctx.rng.uniform(math.log(lo_e), math.log(hi_e))))
    reach = eps * float(np.max(np.abs(np.concatenate([phi.support.lo, phi.support.hi]))))
    lo = np.asarray(box.lo) + reach
    hi = np.asarray(box.hi) - reach
    if np.any(lo >= hi):
        raise ScenarioError("sample box too small for the largest epsilon", ctx.ptr("eps_range"))
    c = ctx.rng.uniform(lo, hi)
    x = ctx.rng.uniform(np.asarray(box.lo), np.asarray(box.hi))
    return phi, eps, c, x


def _commutation_rows(ctx: ClaimContext, pairs, draw) -> tuple:
    tol = ctx.claim.get("tol", 1e-12)
    samples = ctx.claim.get("samples", 20)
    rows, ok = [], True
    for name, lhs, rhs in pairs:
        worst, worst_rel = 0.0, 0.0
        for _ in range(samples):
            a, b = draw(lhs, rhs)
            err = abs(a - b)
            worst = max(worst, err)
            worst_rel = max(worst_rel, err / (1.0 + abs(b)))
        passed = worst_rel <= tol
        ok &= passed
        rows.append({"distribution": name, "samples": samples, "max_abs_error": worst,
                     "max_scaled_error": worst_rel, "pass": bool(passed)})
    return ok, {"tol": tol, "error_scale": "|lhs - rhs| / (1 + |rhs|)", "rows": rows}


def _default_box(ctx: ClaimContext) -> Box:
    if "sample_box" in ctx.claim:
        b = ctx.claim["sample_box"]
        return Box(tuple(b["lo"]), tuple(b["hi"]))
    if ctx.scene.domain is not None:
        return ctx.scene.domain
    return ctx.scene.manifold.charts[0].param_box


def _local_distributions(ctx: ClaimContext) -> list:
    out = []
    for i, ref in enumerate(ctx.claim["distributions"]):
        u = ctx.scene.get(ref, "distribution", ctx.ptr("distributions", i))
        if ctx.scene.level(ref) != "local":
            raise ScenarioError(f"{ref!r} must be a local distribution", ctx.ptr("distributions", i))
        out.append((ref, u))
    return out


def _d_commutation_claim(ctx: ClaimContext) -> tuple:
    i = ctx.claim.get("direction", 0)
    box = _default_box(ctx)
    molls = ctx.get_all("mollifiers", "mollifier")
    eps_range = ctx.claim.get("eps_range", [0.05, 0.5])
    pairs = []
    for ref, u in _local_distributions(ctx):
        e = tuple(int(j == i) for j in range(u.dim))
        pairs.append((ref, lc.derivative_Di(lc.iota(u), i), lc.iota(Derivative(u, e))))

    def draw(lhs, rhs):
        phi, eps, c, x = _sample_test_function(ctx, molls, box, eps_range)
        psi = scale_translate(phi, eps, c)
        return lhs(psi, x), rhs(psi, x)

    ok, rep = _commutation_rows(ctx, pairs, draw)
    rep.update({"direction": i, "sample_box": box.to_dict(), "eps_range": eps_range})
    return ok, rep


def _pullback_commutation_claim(ctx: ClaimContext) -> tuple:
    mu = ctx.get("diffeo", "diffeo")
    box = _default_box(ctx) if "sample_box" in ctx.claim else mu.source
    molls = ctx.get_all("mollifiers", "mollifier")
    eps_range = ctx.claim.get("eps_range", [0.02, 0.2])
    pairs = [(ref, lc.pullback_local(lc.iota(u), mu), lc.iota(pullback_dist(u, mu)))
             for ref, u in _local_distributions(ctx)]

    def draw(lhs, rhs):
        phi, eps, c, x = _sample_test_function(ctx, molls, box, eps_range)
        psi = scale_translate(phi, eps, c)
        return lhs(psi, x), rhs(psi, x)

    ok, rep = _commutation_rows(ctx, pairs, draw)
    rep.update({"diffeo": mu.to_dict(), "eps_range": eps_range})
    return ok, rep


def _lie_commutation_claim(ctx: ClaimContext) -> tuple:
    X = ctx.get("field", "field")
    kernels = ctx.get_all("kernels", "kernel")
    eps_range = ctx.claim.get("eps_range", [0.01, 0.3])
    M = ctx.scene.manifold
    pairs = []
    for i, ref in enumerate(ctx.claim["distributions"]):
        u = ctx.scene.get(ref, "distribution", ctx.ptr("distributions", i))
        if ctx.scene.level(ref) != "global":
            raise ScenarioError(f"{ref!r} must be a distribution on the manifold", ctx.ptr("distributions", i))
        pairs.append((ref, gc.lie_derivative_global(gc.embed(u), X), gc.embed(lie_derivative_dist(u, X))))
    box = M.charts[0].param_box if "sample_box" not in ctx.claim else _default_box(ctx)

    def draw(lhs, rhs):
        kernel = kernels[int(ctx.rng.integers(len(kernels)))]
        lo_e, hi_e = eps_range
        eps = float(math.exp(ctx.rng.uniform(math.log(lo_e), math.log(hi_e))))
        p = ctx.rng.uniform(np.asarray(box.lo), np.asarray(box.hi))
        q = ctx.rng.uniform(np.asarray(box.lo), np.asarray(box.hi))
        omega = kernel(eps, M.canonical(q[None, :])[0])
        return lhs(omega, p), rhs(omega, p)

    ok, rep = _commutation_rows(ctx, pairs, draw)
    rep.update({"field": X.name, "eps_range": eps_range})
    return ok, rep


def _kernel_validity_claim(ctx: ClaimContext) -> tuple:
    kernel = ctx.get("kernel", "kernel")
    grid = ctx.grid()
    n = kernel.manifold.dim
    sections, ok = {}, True
    metrics = []
    for j, m in enumerate(ctx.claim.get("metrics", ["euclidean"])):
        if m == "euclidean":
            metrics.append(euclidean_metric(n))
        else:
            metrics.append(conformal_metric(n, ctx.scene.get(m, "function", ctx.ptr("metrics", j))))
    sections["support"] = [sk.validate_kernel(kernel, grid, "support", ladder=ctx.ladder, metric=h,
                                              trace=ctx.trace) for h in metrics]
    fields = ctx.fields() or []
    growth = []
    for k, l in ctx.claim.get("growth", [[0, 0]]):
        growth.append(sk.validate_kernel(kernel, grid, "growth", ladder=ctx.ladder, k=k, l=l,
                                         fields=fields, trace=ctx.trace))
    sections["growth"] = growth
    if ctx.claim.get("grading", True):
        sections["grading"] = [sk.validate_kernel(kernel, grid, "grading", ladder=ctx.ladder, trace=ctx.trace)]
    for reps in sections.values():
        for r in reps:
            ok &= r["pass"]
    return ok, {"kernel": kernel.to_dict(), **sections}


def _localization_claim(ctx: ClaimContext) -> tuple:
    R = ctx.gf("global")
    kernels = ctx.get_all("kernels", "kernel")
    b = ctx.claim["box"]
    box = Box(tuple(b["lo"]), tuple(b["hi"]))
    if ctx.claim["mode"] == "moderate":
        mode = lc.Moderate(ctx.claim.get("alpha_max", 1))
    else:
        mode = lc.Negligible(ctx.claim.get("alpha_max", 1), tuple(ctx.claim.get("r", [1.0])),
                             ctx.groups("global") if "groups" in ctx.claim else {})
    names = [c.name for c in ctx.scene.manifold.charts]
    if ctx.claim["chart"] not in names:
        raise ScenarioError(f"unknown chart {ctx.claim['chart']!r}; charts are {names}", ctx.ptr("chart"))
    rep = gc.localization_check(R, box, kernels, mode, ctx.claim["chart"], ladder=ctx.ladder,
                                n=ctx.claim.get("n", 21))
    ok = rep["agree"]
    if "expect_verdict" in ctx.claim:
        ok &= rep["global"]["pass"] == ctx.claim["expect_verdict"]
    return ok, rep


def _associate_claim(ctx: ClaimContext) -> tuple:
    R = ctx.gf("global")
    target = ctx.get("target", "distribution")
    if ctx.scene.level(ctx.claim["target"]) != "global":
        raise ScenarioError("the association target must be a distribution on the manifold", ctx.ptr("target"))
    rep = gc.associate(R, target, ctx.get_all("weights", "weight"), ctx.get_all("kernels", "kernel"),
                       ladder=ctx.ladder, tol=ctx.claim.get("tol", gc.ASSOC_TOL), trace=ctx.trace)
    return rep["pass"], rep


CLAIMS: dict = {
    "moments": _moments_claim, "classify": _classify_claim, "rate": _rate_claim,
    "moderate": _moderate_claim, "moderate_order": _moderate_order_claim,
    "negligible": _negligible_claim, "d_commutation": _d_commutation_claim,
    "lie_commutation": _lie_commutation_claim, "pullback_commutation": _pullback_commutation_claim,
    "kernel_validity": _kernel_validity_claim, "localization": _localization_claim,
    "associate": _associate_claim,
}

DEFAULT_LADDERS = {"associate": EpsilonLadder(0.04, 0.5, 6)}


# ----------------------------------------------------------------------------
# Running
# ----------------------------------------------------------------------------

@dataclass
class ScenarioResult:
    name: str
    report: dict
    trace: TraceLog
    timing: dict
    exit_code: int
    error: str | None = None

    def write(self, out_dir: str | Path) -> dict:
        """Write ``<name>.report.json``, ``<name>.traces.csv`` and ``<name>.timing.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / f"{self.name}.report.json", "traces": out / f"{self.name}.traces.csv",
                 "timing": out / f"{self.name}.timing.json"}
        paths["report"].write_text(dumps_report(self.report))
        self.trace.write(paths["traces"])
        paths["timing"].write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n")
        return paths


def _finite(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _finite(obj.item())
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_finite(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _claim_ladder(claim: dict, default: EpsilonLadder | None, override: EpsilonLadder | None) -> EpsilonLadder:
    if override is not None:
        return override
    if "ladder" in claim:
        return parse_ladder(claim["ladder"])
    if default is not None:
        return default
    return DEFAULT_LADDERS.get(claim["type"], EpsilonLadder())


def run_scenario(config: dict, *, seed: int = 0, ladder: EpsilonLadder | str | None = None,
                 only: Callable[[dict], bool] | None = None) -> ScenarioResult:
    """Validate and evaluate a scenario.

    ``ladder`` replaces every ladder of the scenario.  Configuration problems
    raise :class:`ScenarioError`; numerical failures inside a claim are
    recorded in its row and give exit code 3.
    """
    validate_config(config)
    override = parse_ladder(ladder) if ladder is not None else None
    scene = Scene(config)
    default = parse_ladder(config["ladder"]) if "ladder" in config else None
    ids = [c["id"] for c in config["claims"]]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ScenarioError(f"duplicate claim id {dup[0]!r}", "/claims")
    rows, trace, timing = [], TraceLog(), {}
    code = EXIT_OK
    error = None
    for index, claim in enumerate(config["claims"]):
        if only is not None and not only(claim):
            continue
        ctx = ClaimContext(scene, claim, index, _claim_ladder(claim, default, override),
                           np.random.default_rng([seed, index]))
        expect = claim.get("expect", "pass")
        start = time.perf_counter()
        row = {"id": claim["id"], "type": claim["type"], "statement": claim.get("statement", ""),
               "criterion": claim.get("criterion"), "expect": expect, "ladder": ctx.ladder.to_dict()}
        try:
            verdict, details = CLAIMS[claim["type"]](ctx)
        except ScenarioError:
            raise
        except NUMERICAL_ERRORS as exc:
            row.update({"pass": False, "verdict": None, "error": f"{type(exc).__name__}: {exc}", "details": {}})
            code = EXIT_NUMERICAL
            error = error or f"claim {claim['id']}: {type(exc).__name__}: {exc}"
        else:
            verdict = bool(verdict)
            row.update({"verdict": verdict, "pass": verdict == (expect == "pass"), "details": details})
            if not row["pass"] and code == EXIT_OK:
                code = EXIT_CLAIM_FAILED
        timing[claim["id"]] = time.perf_counter() - start
        for e, v, tag in ctx.trace.rows:
            trace.rows.append((e, v, f"{claim['id']}:{tag}"))
        rows.append(row)
    report = {"scenario": config["name"], "description": config.get("description", ""),
              "claims": rows, "pass": all(r["pass"] for r in rows),
              "meta": {"gfk_version": __version__, "schema_version": SCHEMA_VERSION, "seed": seed,
                       "ladder_override": override.to_dict() if override else None,
                       "manifold": config["manifold"], "slack": SLACK, "min_r2": MIN_R2}}
    return ScenarioResult(config["name"], report, trace, {"seconds": timing}, code, error)

