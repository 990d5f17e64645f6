"""Scenarios, the diagnostic pipeline and report emission.

A scenario is a small JSON document.  Three kinds exist:

``operator``
    a model ``(B, f, g)`` with the integration operator; the full battery runs.
``exponential_family``
    explicit exponential families ``exp(i lambda_k t)``; only frame checks run.
``weight_gallery``
    synthetic weights on the line; only the A2 and integrability checks run.

Every check of the battery appears in every report.  Checks that do not apply
to the scenario, or whose inputs failed, carry the verdict ``not-applicable``
and a reason.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import datetime
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .basis import (
    EigenFamily,
    ExponentialFamily,
    biorthogonality_residuals,
    carleson_constant,
    estimate_suite,
    expansion_residual,
    frame_report,
    lrg_sample,
    right_regularity_bounds,
    uniform_minimality,
)
from .detfun import DetFunction, eval_phi, find_spectrum, indicator_data, width_positivity_check
from .errors import (
    DiagnosticError,
    EmitError,
    ModelBuildError,
    ParseError,
    ValidationError,
)
from .model import (
    PerturbedModel,
    build_integration_operator,
    quasinilpotency_report,
    resolvent_B_square_integral,
    resolvent_energy_bound,
    semigroup_laplace,
    vector_from_tag,
)
from .weights import (
    a2_check,
    integrability_check,
    synthetic_trace,
    trace_phi_over_w,
    trace_w,
    trace_w_star,
    trace_W,
)

SCHEMA_VERSION = 1
KINDS = ("operator", "exponential_family", "weight_gallery")
VERDICTS = ("pass", "stable", "growing", "degenerating", "fail", "not-applicable", "inconclusive")
FORMATS = ("json", "csv_bundle")

# acceptance bands of the banded checks
BAND_LIMIT = 20.0
UM_LIMIT = 4.0
LRG_LIMIT = 20.0
DRIFT = 0.25
SPLIT_TOL = 1e-9
BIORTH_TOL = 1e-7
PHI_AGREEMENT = 1e-8

STAGES = (
    "model_checks",
    "phi_formulas",
    "spectrum",
    "indicator",
    "width_positivity",
    "g0_distance",
    "weights",
    "carleson",
    "frames",
    "uniform_minimality",
    "biorthogonality",
    "right_regularity",
    "lrg",
    "estimates",
    "expansion",
    "basis_weight_consistency",
)

_TOP_KEYS = {
    "schema_version": True,
    "name": True,
    "kind": True,
    "description": False,
    "model": False,
    "window": False,
    "rectangle": False,
    "strip_c": False,
    "probes": False,
    "trace_samples": False,
    "seed": False,
    "families": False,
    "weights": False,
}
_MODEL_KEYS = {"kind", "a", "n", "scheme", "f", "g"}
_VECTOR_KEYS = {"tag", "scale", "rate", "center", "width", "values"}
_PROBE_KEYS = {"split", "biorthogonality", "lrg", "random_vectors"}
_FAMILY_KEYS = {"name", "delta", "signed", "N", "a"}
_WEIGHT_KEYS = {"name", "form", "alpha"}
_WEIGHT_FORMS = ("constant", "power", "one_plus_x2")
_DEFAULT_PROBES = {"split": 20, "biorthogonality": 6, "lrg": 40, "random_vectors": 32}


@dataclass(frozen=True)
class Scenario:
    """Validated scenario.  ``to_dict`` gives back the JSON document."""

    name: str
    kind: str
    model: Optional[dict] = None
    window: float = 100.0
    rectangle: tuple = (-100.0, 100.0, -2.0, 2.0)
    strip_c: float = 1.0
    probes: dict = field(default_factory=lambda: dict(_DEFAULT_PROBES))
    trace_samples: int = 1024
    seed: int = 0
    families: tuple = ()
    weights: tuple = ()
    description: str = ""

    def to_dict(self):
        out = {"schema_version": SCHEMA_VERSION, "name": self.name, "kind": self.kind}
        if self.description:
            out["description"] = self.description
        if self.model is not None:
            out["model"] = copy.deepcopy(self.model)
        out.update(
            {
                "window": self.window,
                "rectangle": list(self.rectangle),
                "strip_c": self.strip_c,
                "probes": dict(self.probes),
                "trace_samples": self.trace_samples,
                "seed": self.seed,
            }
        )
        if self.families:
            out["families"] = [dict(f) for f in self.families]
        if self.weights:
            out["weights"] = [dict(w) for w in self.weights]
        return out

    def with_overrides(self, grid_n=None, window=None, seed=None, strip_c=None):
        doc = self.to_dict()
        if grid_n is not None:
            if doc.get("model") is None:
                raise ValidationError(["--grid-n needs an operator scenario"])
            doc["model"]["n"] = grid_n
        if window is not None:
            doc["window"] = window
        if seed is not None:
            doc["seed"] = seed
        if strip_c is not None:
            doc["strip_c"] = strip_c
        return scenario_from_dict(doc)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _unknown(doc, allowed, where, errors):
    for key in doc:
        if key not in allowed:
            errors.append(f"{where}{key}: unknown key")


def _check_vector(spec, n, where, errors):
    if not isinstance(spec, dict):
        errors.append(f"{where}: must be an object with a 'tag'")
        return
    _unknown(spec, _VECTOR_KEYS, f"{where}.", errors)
    tag = spec.get("tag")
    if tag not in ("one", "zero", "exp_t", "gaussian", "table"):
        errors.append(f"{where}.tag: unknown tag {tag!r}")
        return
    for key in ("scale", "rate", "center", "width"):
        if key in spec and not _is_number(spec[key]):
            errors.append(f"{where}.{key}: must be a finite number")
    if "width" in spec and _is_number(spec["width"]) and spec["width"] <= 0:
        errors.append(f"{where}.width: must be positive")
    if tag == "table":
        values = spec.get("values")
        if not isinstance(values, list):
            errors.append(f"{where}.values: a table needs a list of values")
            return
        if _is_int(n) and len(values) != n:
            errors.append(f"{where}.values: length {len(values)} does not match n={n}")
        for v in values:
            ok = _is_number(v) or (
                isinstance(v, list) and len(v) == 2 and all(_is_number(c) for c in v)
            )
            if not ok:
                errors.append(f"{where}.values: entries must be numbers or [re, im] pairs")
                break


def _check_model(doc, errors):
    if not isinstance(doc, dict):
        errors.append("model: must be an object")
        return
    _unknown(doc, _MODEL_KEYS, "model.", errors)
    if doc.get("kind", "canonical_Ja") != "canonical_Ja":
        errors.append("model.kind: only canonical_Ja is supported by scenario files")
    a, n = doc.get("a"), doc.get("n")
    if not _is_number(a) or a <= 0:
        errors.append("model.a: must be a positive number")
    if not _is_int(n) or n < 2:
        errors.append("model.n: must be an integer >= 2")
    if doc.get("scheme", "chebyshev") not in ("chebyshev", "trapezoid"):
        errors.append("model.scheme: must be chebyshev or trapezoid")
    for side in ("f", "g"):
        if side not in doc:
            errors.append(f"model.{side}: missing")
        else:
            _check_vector(doc[side], n, f"model.{side}", errors)


def scenario_from_dict(doc):
    """Validate a scenario document and build a :class:`Scenario`."""
    errors = []
    if not isinstance(doc, dict):
        raise ValidationError(["scenario must be a JSON object"])
    _unknown(doc, _TOP_KEYS, "", errors)
    for key, required in _TOP_KEYS.items():
        if required and key not in doc:
            errors.append(f"{key}: missing")
    if "schema_version" in doc and doc["schema_version"] != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}")
    if "name" in doc and (not isinstance(doc["name"], str) or not doc["name"]):
        errors.append("name: must be a nonempty string")
    kind = doc.get("kind")
    if "kind" in doc and kind not in KINDS:
        errors.append(f"kind: must be one of {', '.join(KINDS)}")
    for key in ("window", "strip_c"):
        if key in doc and (not _is_number(doc[key]) or doc[key] <= 0):
            errors.append(f"{key}: must be a positive number")
    if "trace_samples" in doc:
        m = doc["trace_samples"]
        if not _is_int(m) or m < 64:
            errors.append("trace_samples: must be an integer >= 64")
    if "seed" in doc and (not _is_int(doc["seed"]) or doc["seed"] < 0):
        errors.append("seed: must be a nonnegative integer")
    if "rectangle" in doc:
        r = doc["rectangle"]
        if not (isinstance(r, list) and len(r) == 4 and all(_is_number(v) for v in r)):
            errors.append("rectangle: must be [x0, x1, y0, y1]")
        elif not (r[0] < r[1] and r[2] < r[3]):
            errors.append("rectangle: needs x0 < x1 and y0 < y1")
    probes = dict(_DEFAULT_PROBES)
    if "probes" in doc:
        if not isinstance(doc["probes"], dict):
            errors.append("probes: must be an object")
        else:
            _unknown(doc["probes"], _PROBE_KEYS, "probes.", errors)
            for key, v in doc["probes"].items():
                if key in _PROBE_KEYS:
                    if not _is_int(v) or v <= 0:
                        errors.append(f"probes.{key}: must be a positive integer")
                    else:
                        probes[key] = v
    if kind == "operator":
        if "model" not in doc:
            errors.append("model: required for operator scenarios")
        else:
            _check_model(doc["model"], errors)
    elif "model" in doc:
        errors.append("model: only allowed for operator scenarios")
    families = doc.get("families", [])
    if kind == "exponential_family" and not families:
        errors.append("families: required for exponential_family scenarios")
    if families and kind != "exponential_family":
        errors.append("families: only allowed for exponential_family scenarios")
    if not isinstance(families, list):
        errors.append("families: must be a list")
        families = []
    for i, fam in enumerate(families):
        where = f"families[{i}]"
        if not isinstance(fam, dict):
            errors.append(f"{where}: must be an object")
            continue
        _unknown(fam, _FAMILY_KEYS, where + ".", errors)
        if not _is_number(fam.get("delta")):
            errors.append(f"{where}.delta: must be a number")
        if not _is_int(fam.get("N")) or fam.get("N", 0) < 4:
            errors.append(f"{where}.N: must be an integer >= 4")
        if "a" in fam and (not _is_number(fam["a"]) or fam["a"] <= 0):
            errors.append(f"{where}.a: must be positive")
        if "signed" in fam and not isinstance(fam["signed"], bool):
            errors.append(f"{where}.signed: must be a boolean")
    weights = doc.get("weights", [])
    if kind == "weight_gallery" and not weights:
        errors.append("weights: required for weight_gallery scenarios")
    if weights and kind != "weight_gallery":
        errors.append("weights: only allowed for weight_gallery scenarios")
    if not isinstance(weights, list):
        errors.append("weights: must be a list")
        weights = []
    for i, wt in enumerate(weights):
        where = f"weights[{i}]"
        if not isinstance(wt, dict):
            errors.append(f"{where}: must be an object")
            continue
        _unknown(wt, _WEIGHT_KEYS, where + ".", errors)
        if wt.get("form") not in _WEIGHT_FORMS:
            errors.append(f"{where}.form: must be one of {', '.join(_WEIGHT_FORMS)}")
        if wt.get("form") == "power" and not _is_number(wt.get("alpha")):
            errors.append(f"{where}.alpha: a power weight needs a numeric alpha")
    if errors:
        raise ValidationError(errors)
    rect = doc.get("rectangle")
    window = float(doc.get("window", 100.0))
    if rect is None:
        rect = [-2.0 * window, 2.0 * window, -2.0, 2.0]
    return Scenario(
        name=doc["name"],
        kind=kind,
        model=copy.deepcopy(doc.get("model")),
        window=window,
        rectangle=tuple(float(v) for v in rect),
        strip_c=float(doc.get("strip_c", 1.0)),
        probes=probes,
        trace_samples=int(doc.get("trace_samples", 1024)),
        seed=int(doc.get("seed", 0)),
        families=tuple(dict(f) for f in families),
        weights=tuple(dict(w) for w in weights),
        description=doc.get("description", ""),
    )


_BUILTIN = {
    "S1": {
        "schema_version": 1,
        "name": "S1",
        "kind": "operator",
        "description": "integration operator on [0, 1] with f = g = 1; closed-form spectrum",
        "model": {"a": 1.0, "n": 201, "f": {"tag": "one"}, "g": {"tag": "one"}},
        "window": 100.0,
        "rectangle": [-200.0, 200.0, -2.0, 2.0],
    },
    "S2": {
        "schema_version": 1,
        "name": "S2",
        "kind": "exponential_family",
        "description": "Kadec families k + delta sign(k) on [0, 2 pi]",
        "families": [
            {"name": "kadec_0.1", "delta": 0.1, "signed": True, "N": 256},
            {"name": "kadec_0.25_signed", "delta": 0.25, "signed": True, "N": 256},
        ],
    },
    "S3": {
        "schema_version": 1,
        "name": "S3",
        "kind": "operator",
        "description": "integration operator on [0, 1] with g = exp(t), f = 1; numeric spectrum",
        "model": {"a": 1.0, "n": 201, "f": {"tag": "one"}, "g": {"tag": "exp_t"}},
        "window": 100.0,
        "rectangle": [-200.0, 200.0, -4.0, 4.0],
    },
    "S4": {
        "schema_version": 1,
        "name": "S4",
        "kind": "weight_gallery",
        "description": "power weights |x|^0.5, |x|^1.5 and 1 + x^2",
        "window": 50.0,
        "weights": [
            {"name": "abs_x_0.5", "form": "power", "alpha": 0.5},
            {"name": "abs_x_1.5", "form": "power", "alpha": 1.5},
            {"name": "one_plus_x2", "form": "one_plus_x2"},
        ],
    },
}


def builtin_names():
    return tuple(_BUILTIN)


def builtin_scenario(name):
    if name not in _BUILTIN:
        raise ValidationError([f"unknown built-in scenario {name!r}"])
    return scenario_from_dict(copy.deepcopy(_BUILTIN[name]))


def load_scenario(path):
    """Load ``builtin:NAME`` or a JSON scenario file."""
    path = str(path)
    if path.startswith("builtin:"):
        return builtin_scenario(path.split(":", 1)[1])
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise EmitError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from exc
    return scenario_from_dict(doc)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Check:
    id: str
    stage: str
    verdict: str
    data: dict = field(default_factory=dict)
    reason: str = ""
    error: Optional[dict] = None

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def as_dict(self):
        out = {"id": self.id, "stage": self.stage, "verdict": self.verdict}
        if self.reason:
            out["reason"] = self.reason
        if self.error is not None:
            out["error"] = self.error
        out["data"] = self.data
        return out


@dataclass
class DiagnosticsReport:
    scenario: dict
    checks: list
    traces: dict
    spectrum: Optional[np.ndarray]
    spectrum_abs_phi_prime: Optional[np.ndarray]
    estimates: list
    wall_clock: dict
    created: str
    tool_version: str = __version__

    def check(self, cid):
        for c in self.checks:
            if c.id == cid:
                return c
        raise KeyError(cid)

    @property
    def verdicts(self):
        return {c.id: c.verdict for c in self.checks}

    def as_dict(self, timestamp=True):
        out = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "scenario": self.scenario,
            "stages": list(STAGES),
            "verdicts": self.verdicts,
            "checks": [c.as_dict() for c in self.checks],
        }
        if timestamp:
            out["timestamp"] = {"created": self.created, "wall_clock_seconds": self.wall_clock}
        return out


def _plain(obj):
    """JSON-ready copy: numpy scalars unwrapped, complex as ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(float(obj.real)), _plain(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


# ---------------------------------------------------------------------------
# pipeline


class _Context:
    """Results shared between stages plus the check list under construction."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.rng = np.random.default_rng(scenario.seed)
        self.checks = []
        self.failed = set()
        self.timings = {}
        self.traces = {}
        self.estimates = []
        self.model = None
        self.det = None
        self.spec = None
        self.indicator = None
        self.family = None
        self.frames = {}
        self.a2 = {}

    def add(self, cid, stage, verdict, data=None, reason="", error=None):
        self.checks.append(Check(cid, stage, verdict, _plain(data or {}), reason, error))


def _skip(ctx, stage, reason, ids=None):
    for cid in ids or [stage]:
        ctx.add(cid, stage, "not-applicable", reason=reason)


def _run_stage(ctx, stage, fn, needs=()):
    """Run ``fn(ctx)``; failures are recorded, dependants see them as missing."""
    for dep in needs:
        if dep in ctx.failed:
            ctx.failed.add(stage)
            _skip(ctx, stage, f"depends on failed stage {dep}")
            return
    t0 = time.perf_counter()
    mark = len(ctx.checks)
    try:
        fn(ctx)
    except (DiagnosticError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        del ctx.checks[mark:]
        ctx.failed.add(stage)
        code = getattr(exc, "code", type(exc).__name__)
        ctx.add(stage, stage, "fail", error={"code": code, "message": str(exc)})
    ctx.timings[stage] = time.perf_counter() - t0


def _build_model(doc):
    try:
        B = build_integration_operator(float(doc["a"]), int(doc["n"]), doc.get("scheme", "chebyshev"))
        vecs = {}
        for side in ("f", "g"):
            spec = dict(doc[side])
            tag = spec.pop("tag")
            if tag == "table":
                spec["values"] = [complex(*v) if isinstance(v, list) else v for v in spec["values"]]
            vecs[side] = vector_from_tag(B.grid, tag, **spec)
        return PerturbedModel(B, vecs["f"], vecs["g"])
    except (DiagnosticError, ValueError, KeyError, TypeError) as exc:
        raise ModelBuildError(f"model build failed: {exc}") from exc


def _stage_model_checks(ctx):
    model, sc = ctx.model, ctx.scenario
    ck, cks = model.compat_residuals
    ctx.add(
        "compatibility",
        "model_checks",
        "pass" if min(ck, cks) > 1e-6 else "fail",
        {
            "sigma_min_K": ck,
            "sigma_min_K_adjoint": cks,
            "floor": 1e-6,
            "unrestricted": model.compat_residuals_full,
        },
    )
    qn = quasinilpotency_report(model.B)
    ctx.add(
        "quasinilpotency",
        "model_checks",
        "pass" if qn["within_tol"] else "inconclusive",
        qn,
        reason="" if qn["within_tol"] else "discretization carries spurious spectrum; see scaled radius",
    )
    grid = model.grid
    n = model.n
    worst = 0.0
    count = sc.probes["split"]
    x0, x1, y0, y1 = sc.rectangle
    tried = 0
    while tried < count:
        z = complex(ctx.rng.uniform(-20, 20), ctx.rng.uniform(-3, 5))
        h = ctx.rng.standard_normal(n) + 1j * ctx.rng.standard_normal(n)
        if abs(model.phi(z)) <= 1e-6:
            continue
        tried += 1
        split = model.resolvent_A(z, h).values
        direct = model.resolvent_A_direct(z, h).values
        worst = max(worst, grid.norm(split - direct) / grid.norm(h))
    ctx.add(
        "resolvent_split",
        "model_checks",
        "pass" if worst <= SPLIT_TOL else "fail",
        {"max_relative_residual": worst, "pairs": count, "tol": SPLIT_TOL},
    )
    h1 = ctx.rng.standard_normal(n) + 1j * ctx.rng.standard_normal(n)
    h2 = ctx.rng.standard_normal(n) + 1j * ctx.rng.standard_normal(n)
    lhs = grid.inner(model.B.matrix @ h1, h2)
    rhs = grid.inner(h1, model.B.adjoint_matrix @ h2)
    adj = abs(lhs - rhs) / (grid.norm(h1) * grid.norm(h2))
    ctx.add("adjoint_consistency", "model_checks", "pass" if adj <= 1e-12 else "fail", {"residual": adj})
    if model.B.kind != "canonical_Ja":
        _skip(ctx, "model_checks", "semigroup is realized only for the integration operator",
              ["semigroup_laplace", "resolvent_energy"])
        return
    z = 1.0 + 1.0j
    hv = np.ones(n, dtype=complex)
    lap = semigroup_laplace(model.B, z, hv).values
    ref = -1j * (model.B.matrix @ model.B.solver.solve(z, hv))
    lap_err = grid.norm(lap - ref) / grid.norm(ref)
    ctx.add(
        "semigroup_laplace",
        "model_checks",
        "pass" if lap_err <= 1e-6 else "fail",
        {"z": z, "relative_error": lap_err, "scheme": grid.scheme},
    )
    e100 = resolvent_B_square_integral(model.B, hv, R=100.0)
    e200 = resolvent_B_square_integral(model.B, hv, R=200.0)
    bound = resolvent_energy_bound(model.B, hv)
    ok = e200 <= bound * 1.02 and abs(e200 - e100) <= 0.02 * e200
    ctx.add(
        "resolvent_energy",
        "model_checks",
        "pass" if ok else "fail",
        {"integral_R100": e100, "integral_R200": e200, "plancherel_value": bound},
    )


def _stage_phi(ctx):
    model = ctx.model
    if model.B.kind != "canonical_Ja":
        _skip(ctx, "phi_formulas", "semigroup formula needs the integration operator")
        return
    x0, x1, y0, y1 = ctx.scenario.rectangle
    xs = np.linspace(max(x0, -20.0), min(x1, 20.0), 5)
    ys = np.linspace(max(y0, -2.0), min(y1, 2.0), 3)
    worst = 0.0
    for x in xs:
        for y in ys:
            z = complex(x, y)
            a = eval_phi(ctx.det, z)
            b = eval_phi(ctx.det, z, "semigroup")
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    ctx.add(
        "phi_two_formula",
        "phi_formulas",
        "pass" if worst <= PHI_AGREEMENT else "fail",
        {"max_relative_gap": worst, "points": xs.size * ys.size, "phi_at_0": eval_phi(ctx.det, 0)},
    )


def _stage_spectrum(ctx):
    spec = find_spectrum(ctx.det, ctx.scenario.rectangle)
    ctx.spec = spec
    ctx.family = EigenFamily(ctx.model, spec, ctx.det)
    ctx.add(
        "spectrum",
        "spectrum",
        "pass",
        {
            "count": len(spec),
            "window": spec.window,
            "winding_total": spec.winding_total,
            "simplicity_margin": spec.simplicity_margin if len(spec) > 1 else None,
            "max_newton_residual": float(spec.residuals.max()) if len(spec) else 0.0,
            "derivative_crosscheck": spec.derivative_crosscheck,
            "zeros": spec.zeros,
        },
    )


def _stage_indicator(ctx):
    ind = indicator_data(ctx.det, ctx.model.a)
    ctx.indicator = ind
    checks = ind.checks
    ctx.add(
        "indicator",
        "indicator",
        "pass" if all(checks.values()) else "fail",
        {
            "h_up": ind.h_up,
            "h_down": ind.h_down,
            "width": ind.width,
            "exponent": ind.exponent,
            "a": ind.a,
            "checks": checks,
            "fit_residuals": [f.residual for f in ind.fits],
        },
    )


def _stage_width(ctx):
    rep = width_positivity_check(ctx.spec, ctx.indicator)
    verdict = rep.pop("verdict")
    ctx.add("width_positivity", "width_positivity", verdict, rep, reason=rep.pop("reason", ""))


def _has_spectrum(ctx, stage, ids=None, minimum=1):
    if ctx.spec is None or len(ctx.spec) < minimum:
        what = "empty spectrum" if ctx.spec is not None and len(ctx.spec) == 0 else "too few zeros"
        _skip(ctx, stage, what, ids)
        return False
    return True


def _stage_g0(ctx):
    if not _has_spectrum(ctx, "g0_distance"):
        return
    z = ctx.spec.zeros
    up, down = z[z.imag > 0], z[z.imag < 0]
    ctx.add(
        "g0_distance",
        "g0_distance",
        "pass" if np.min(np.abs(z.imag)) > 0 else "fail",
        {
            "distance": float(np.min(np.abs(z.imag))),
            "upper_count": int(up.size),
            "lower_count": int(down.size),
            "upper_distance": float(up.imag.min()) if up.size else None,
            "lower_distance": float(-down.imag.max()) if down.size else None,
        },
    )


def _trace_radius(ctx):
    """Radius for spectrum-dependent checks.

    Their doubled window stays within half of the rectangle, so the nearest
    zero of every sample point is one of the computed zeros.
    """
    x0, x1 = ctx.scenario.rectangle[:2]
    half = min(abs(x0), abs(x1)) if x0 < 0 < x1 else 0.0
    return min(ctx.scenario.window, 0.25 * half) if half else ctx.scenario.window


def _a2_entry(ctx, cid, trace, extra=None):
    rep = a2_check(trace)
    integ = integrability_check(trace)
    ctx.traces[cid] = trace
    ctx.a2[cid] = rep.verdict
    data = {
        "provenance": trace.provenance,
        "R": trace.R,
        "m": trace.m,
        "min": float(trace.values.min()),
        "max": float(trace.values.max()),
        "constant_interval": rep.constant_interval,
        "constant_poisson": rep.constant_poisson,
        "tail_correction": rep.tail_correction,
        "growth_trend": rep.growth_trend,
        "offset": rep.offset,
        "integrability": integ,
    }
    data.update(extra or {})
    ctx.add(f"a2_{cid}", "weights", rep.verdict, data)


def _guarded(ctx, cid, stage, fn):
    """Per-check isolation inside a stage."""
    try:
        fn()
    except (DiagnosticError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        ctx.add(cid, stage, "fail", error={"code": code, "message": str(exc)})


def _stage_weights(ctx):
    sc, model = ctx.scenario, ctx.model
    m = sc.trace_samples
    R = sc.window
    _guarded(ctx, "a2_w_sq", "weights", lambda: _a2_entry(ctx, "w_sq", trace_w(model, R, m)))

    def w_star():
        tr = trace_w_star(model, R, m)
        _a2_entry(ctx, "w_star_sq", tr, {"sign_gap": tr.extras["sign_gap"]})

    _guarded(ctx, "a2_w_star_sq", "weights", w_star)
    _guarded(ctx, "a2_phi_over_w_sq", "weights",
             lambda: _a2_entry(ctx, "phi_over_w_sq", trace_phi_over_w(model, R, m)))
    if "spectrum" in ctx.failed:
        _skip(ctx, "weights", "depends on failed stage spectrum", ["a2_W_sq"])
    elif _has_spectrum(ctx, "weights", ["a2_W_sq"]):
        Rt = _trace_radius(ctx)
        _guarded(ctx, "a2_W_sq", "weights", lambda: _a2_entry(ctx, "W_sq", trace_W(model, ctx.spec, Rt, m)))


def _stage_carleson(ctx):
    if not _has_spectrum(ctx, "carleson", ["carleson_upper", "carleson_lower"]):
        return
    z = ctx.spec.zeros
    for cid, part in (("carleson_upper", z[z.imag > 0]), ("carleson_lower", z[z.imag < 0])):
        if part.size == 0:
            _skip(ctx, "carleson", "no zeros in this half-plane", [cid])
            continue
        full = carleson_constant(part)
        half = carleson_constant(part[: max(1, part.size // 2)])
        stable = full > 0 and full / half > 1.0 - DRIFT
        ctx.add(
            cid,
            "carleson",
            "stable" if stable else "degenerating",
            {"constant": full, "constant_half": half, "points": int(part.size)},
        )


_FRAME_VERDICT = {"riesz_stable": "stable", "degenerating": "degenerating", "inconclusive": "inconclusive"}


def _frame_entry(ctx, cid, family, side, extra=None):
    rep = frame_report(family, side)
    ctx.frames[cid] = rep.verdict
    data = rep.as_dict()
    data.update(extra or {})
    ctx.add(cid, "frames", _FRAME_VERDICT[rep.verdict], data)


def _stage_frames(ctx):
    if ctx.scenario.kind == "exponential_family":
        for fam in ctx.scenario.families:
            name = fam.get("name") or f"delta_{fam['delta']}"
            a = float(fam.get("a", 2 * np.pi))
            family = ExponentialFamily.symmetric(int(fam["N"]), float(fam["delta"]), fam.get("signed", True), a)
            extra = {"delta": fam["delta"], "signed": fam.get("signed", True), "index_N": fam["N"]}
            _guarded(ctx, f"frame_{name}", "frames",
                     lambda: _frame_entry(ctx, f"frame_{name}", family, "g_side", extra))
        return
    ids = ["frame_g_side", "frame_f_star_side"]
    if not _has_spectrum(ctx, "frames", ids, minimum=4):
        return
    for side, cid in zip(("g_side", "f_star_side"), ids):
        _guarded(ctx, cid, "frames", lambda: _frame_entry(ctx, cid, ctx.family, side))


def _stage_um(ctx):
    if not _has_spectrum(ctx, "uniform_minimality"):
        return
    rep = uniform_minimality(ctx.family)
    data = rep.as_dict()
    data["meta"] = {}
    ctx.add("uniform_minimality", "uniform_minimality", "pass" if rep.ratio <= UM_LIMIT else "fail",
            {**data, "limit": UM_LIMIT})


def _probe_points(ctx, count):
    """Seeded probes inside the central part of the rectangle, away from zeros."""
    x0, x1, y0, y1 = ctx.scenario.rectangle
    xr = 0.25 * (x1 - x0)
    xc = 0.5 * (x0 + x1)
    out = []
    while len(out) < count:
        z = complex(ctx.rng.uniform(xc - xr, xc + xr), ctx.rng.uniform(y0, y1))
        if ctx.spec is None or len(ctx.spec) == 0 or ctx.spec.distance(z) > 0.05:
            out.append(z)
    return np.array(out)


def _stage_biorth(ctx):
    probes = _probe_points(ctx, ctx.scenario.probes["biorthogonality"])
    family = ctx.family
    if len(family) > 10:
        # the relations are checked on the ten smallest eigenvalues
        family = _truncated(family, 10)
    rep = biorthogonality_residuals(family, probes)
    d = rep.as_dict()
    ctx.add("biorthogonality", "biorthogonality", "pass" if rep.right <= BIORTH_TOL else "fail",
            {**d, "eigenvalues_used": len(family), "tol": BIORTH_TOL})


def _truncated(family, k):
    out = copy.copy(family)
    out.lambdas = family.lambdas[:k]
    out.g_vectors = family.g_vectors[:k]
    out.f_vectors = family.f_vectors[:k]
    out.g_norms = family.g_norms[:k]
    out.f_norms = family.f_norms[:k]
    out.phi_prime = family.phi_prime[:k]
    return out


def _stage_right_regularity(ctx):
    R = 2.0 * ctx.scenario.window
    for side in ("g_side", "f_star_side"):
        cid = f"right_regularity_{side}"

        def run(side=side, cid=cid):
            rep = right_regularity_bounds(ctx.model, R=R, which=side)
            ok = np.isfinite(rep.right) and rep.left > 1e-8
            ctx.estimates.append(dataclasses.replace(rep, id=cid))
            ctx.add(cid, "right_regularity", "pass" if ok else "fail", rep.as_dict())

        _guarded(ctx, cid, "right_regularity", run)


def _stage_lrg(ctx):
    if not _has_spectrum(ctx, "lrg"):
        return
    sc = ctx.scenario
    c = sc.strip_c
    R = _trace_radius(ctx)
    count = sc.probes["lrg"]
    nx = max(2, count // 5)
    Z = (np.linspace(-R, R, nx)[:, None] + 1j * np.linspace(-c, c, 5)[None, :]).ravel()
    Z = Z[ctx.spec.distance(Z) >= 1e-4]
    Z = np.concatenate([Z, [ctx.spec.zeros[0] + 1e-3]])
    rep = lrg_sample(ctx.model, ctx.spec, Z)
    ctx.estimates.append(rep)
    ctx.add("lrg", "lrg", "pass" if rep.ratio <= LRG_LIMIT else "fail", {**rep.as_dict(), "limit": LRG_LIMIT})


def _stage_estimates(ctx):
    if not _has_spectrum(ctx, "estimates"):
        return
    sc = ctx.scenario
    R = _trace_radius(ctx)
    kw = dict(c=sc.strip_c, seed=sc.seed, n_random=sc.probes["random_vectors"])
    half = {r.id: r for r in estimate_suite(ctx.model, ctx.spec, ctx.family, 0.5 * R, **kw)}
    for rep in estimate_suite(ctx.model, ctx.spec, ctx.family, R, **kw):
        ctx.estimates.append(rep)
        d = rep.as_dict()
        if rep.id == "est_A":
            verdict = "stable" if rep.meta["drift"] < DRIFT else "growing"
        elif rep.id in _BANDED:
            # bands are compared with the same band on half the window
            prev = half[rep.id]
            widening = rep.ratio / prev.ratio if prev.left > 0 else float("inf")
            d["band_half_window"] = [prev.left, prev.right]
            d["widening"] = widening
            d["band_limit"] = BAND_LIMIT
            if rep.left <= 0:
                verdict = "fail"
            else:
                verdict = "stable" if widening < 1.0 + DRIFT else "growing"
        elif rep.id == "M_below":
            verdict = "pass" if rep.left > 0 else "fail"
        else:
            verdict = "pass" if np.isfinite(rep.right) and rep.right >= rep.left >= 0 else "fail"
        ctx.add(rep.id, "estimates", verdict, d)


_BANDED = ("est_M", "W_over_w_star", "est_ginv", "g_norm_expansion", "f_norm_expansion")


def _stage_expansion(ctx):
    ids = ["expansion_g_at_lambda", "expansion_f_star_at_mu"]
    if not _has_spectrum(ctx, "expansion", ids, minimum=4):
        return
    family = ctx.family
    lam0 = family.lambdas[0]
    point = complex(lam0.real + 0.5, 0.2 if lam0.imag < 0 else -0.2)
    N = len(family)
    sizes = sorted({max(1, N // 4), max(1, N // 2), N})
    for cid, target in zip(ids, ("g_at_lambda", "f_star_at_mu")):
        res = [expansion_residual(family, target, point, s) for s in sizes]
        trend = all(b <= a * 1.1 for a, b in zip(res, res[1:]))
        ctx.add(cid, "expansion", "pass" if trend else "inconclusive",
                {"point": point, "sizes": sizes, "residuals": res})


def _stage_basis_weight(ctx):
    frames = [ctx.frames.get("frame_g_side"), ctx.frames.get("frame_f_star_side")]
    if not all(v == "riesz_stable" for v in frames):
        _skip(ctx, "basis_weight_consistency",
              "frame check is not riesz_stable on both sides; the property claims only the implication")
        return
    needed = ("w_sq", "w_star_sq", "W_sq")
    verdicts = {k: ctx.a2.get(k) for k in needed}
    ok = all(v == "stable" for v in verdicts.values())
    ctx.add("basis_weight_consistency", "basis_weight_consistency", "pass" if ok else "fail",
            {"frames": frames, "a2_verdicts": verdicts})


def _not_for_kind(ctx, stage, kind):
    _skip(ctx, stage, f"not part of a {kind} scenario")


def run_pipeline(scenario):
    """Run the battery in its fixed stage order and collect a report.

    Raises :class:`~basisdiag.errors.ModelBuildError` when the model of an
    operator scenario cannot be built; every other failure is recorded in the
    report and only suppresses the stages that depend on it.
    """
    ctx = _Context(scenario)
    t0 = time.perf_counter()
    if scenario.kind == "operator":
        tb = time.perf_counter()
        ctx.model = _build_model(scenario.model)
        ctx.det = DetFunction(ctx.model)
        ctx.timings["model_build"] = time.perf_counter() - tb
        plan = [
            ("model_checks", _stage_model_checks, ()),
            ("phi_formulas", _stage_phi, ()),
            ("spectrum", _stage_spectrum, ()),
            ("indicator", _stage_indicator, ()),
            ("width_positivity", _stage_width, ("spectrum", "indicator")),
            ("g0_distance", _stage_g0, ("spectrum",)),
            ("weights", _stage_weights, ()),
            ("carleson", _stage_carleson, ("spectrum",)),
            ("frames", _stage_frames, ("spectrum",)),
            ("uniform_minimality", _stage_um, ("spectrum",)),
            ("biorthogonality", _stage_biorth, ("spectrum",)),
            ("right_regularity", _stage_right_regularity, ()),
            ("lrg", _stage_lrg, ("spectrum",)),
            ("estimates", _stage_estimates, ("spectrum",)),
            ("expansion", _stage_expansion, ("spectrum",)),
            ("basis_weight_consistency", _stage_basis_weight, ("frames", "weights")),
        ]
        for stage, fn, needs in plan:
            _run_stage(ctx, stage, fn, needs)
    else:
        for stage in STAGES:
            if scenario.kind == "exponential_family" and stage == "frames":
                _run_stage(ctx, stage, _stage_frames)
            elif scenario.kind == "weight_gallery" and stage == "weights":
                _run_stage(ctx, stage, _stage_gallery)
            else:
                _not_for_kind(ctx, stage, scenario.kind)
    ctx.timings["total"] = time.perf_counter() - t0
    spec = ctx.spec
    return DiagnosticsReport(
        scenario=scenario.to_dict(),
        checks=ctx.checks,
        traces=ctx.traces,
        spectrum=None if spec is None else spec.zeros,
        spectrum_abs_phi_prime=None if spec is None else spec.abs_phi_prime,
        estimates=ctx.estimates,
        wall_clock={k: round(v, 6) for k, v in ctx.timings.items()},
        created=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    )


def _weight_function(spec):
    form = spec["form"]
    if form == "constant":
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if form == "power":
        alpha = float(spec["alpha"])
        return lambda x: np.abs(np.asarray(x, dtype=float)) ** alpha
    return lambda x: 1.0 + np.asarray(x, dtype=float) ** 2


def _stage_gallery(ctx):
    sc = ctx.scenario
    for i, wt in enumerate(sc.weights):
        name = wt.get("name") or f"weight_{i}"
        trace = synthetic_trace(_weight_function(wt), sc.window, sc.trace_samples)
        _guarded(ctx, f"a2_{name}", "weights", lambda: _a2_entry(ctx, name, trace, {"form": dict(wt)}))


# ---------------------------------------------------------------------------
# emission


def report_json(report, timestamp=True):
    """Deterministic JSON text of a report."""
    return json.dumps(_plain(report.as_dict(timestamp)), indent=2, allow_nan=False) + "\n"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit(report, fmt, out_dir):
    """Write ``report.json`` or the CSV bundle into ``out_dir``; returns the paths."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = out / "report.json"
            path.write_text(report_json(report))
            return [path]
        for name, trace in sorted(report.traces.items()):
            path = out / f"trace_{name}.csv"
            trace.to_csv(path)
            written.append(path)
        rows = []
        if report.spectrum is not None:
            for z, d in zip(report.spectrum, report.spectrum_abs_phi_prime):
                rows.append([repr(float(z.real)), repr(float(z.imag)), repr(float(d))])
        path = out / "spectrum.csv"
        _write_csv(path, ["re", "im", "abs_phi_prime"], rows)
        written.append(path)
        rows = [[e.id, repr(float(e.left)), repr(float(e.right)), repr(float(e.ratio)) if e.left else "inf"]
                for e in report.estimates]
        path = out / "estimates.csv"
        _write_csv(path, ["id", "left", "right", "ratio"], rows)
        written.append(path)
    except OSError as exc:
        raise EmitError(f"cannot write to {out}: {exc}") from exc
    return written


def thread_cap():
    """Thread cap from ``BASISDIAG_THREADS`` (``None`` when unset)."""
    raw = os.environ.get("BASISDIAG_THREADS")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        return None
    return value if value > 0 else None
