"""Weights on the real line and the Muckenhoupt A2 condition.

Weights are sampled at the centres of ``m`` equal cells of ``[-R, R]``; the
cell-centred grid never hits ``x = 0`` for even ``m``, which keeps power
weights such as ``|x|^alpha`` finite.  A trace may carry its ``source``
callable so that checks can re-sample it on the doubled window ``[-2R, 2R]``
with the same cell width.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EmptySpectrum, NonpositiveWeight, SpectrumTouchesLine

MIN_SAMPLES = 64
DRIFT = 0.25
POISSON_HEIGHTS = (0.01, 0.1, 0.5)


def cell_centres(R, m):
    dx = 2.0 * R / m
    return -R + (np.arange(m) + 0.5) * dx


@dataclass(frozen=True, eq=False)
class WeightTrace:
    R: float
    x: np.ndarray
    values: np.ndarray
    provenance: str
    source: Optional[Callable] = field(default=None, repr=False)
    offset: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x.size < MIN_SAMPLES:
            raise ValueError(f"a trace needs at least {MIN_SAMPLES} samples")

    @property
    def m(self):
        return self.x.size

    @property
    def dx(self):
        return 2.0 * self.R / self.m

    def doubled(self):
        """The same weight on ``[-2R, 2R]`` with unchanged cell width."""
        if self.source is None:
            return None
        return sample_trace(self.source, 2 * self.R, 2 * self.m, self.provenance, self.offset_rule)

    @property
    def offset_rule(self):
        return self.extras.get("offset_rule", False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "value", "provenance"])
            for xi, vi in zip(self.x, self.values):
                writer.writerow([repr(float(xi)), repr(float(vi)), self.provenance])


def sample_trace(source, R, m, provenance="synthetic", offset_rule=False):
    x = cell_centres(R, m)
    values = np.asarray(source(x), dtype=float)
    offset = 0.0
    if offset_rule and np.any(values <= 0):
        offset = 1e-9 * float(np.median(np.abs(values)))
        values = np.maximum(values, 0.0) + offset
    return WeightTrace(
        float(R), x, values, provenance, source, offset, {"offset_rule": offset_rule}
    )


def synthetic_trace(func, R, m=1024):
    """Trace of a user weight; zeros are lifted by ``1e-9 * median``."""
    return sample_trace(func, R, m, "synthetic", offset_rule=True)


def _model_sq_norms(model, xs, which):
    rows = model.quasi_exponentials(xs, which)
    return np.sum(model.grid.weights[None, :] * np.abs(rows) ** 2, axis=1)


def trace_w(model, R, m=1024):
    """``w^2(x) = ||(I - x B)^{-1} g||^2``."""
    return sample_trace(lambda x: _model_sq_norms(model, x, "g_side"), R, m, "w_sq")


def trace_w_star(model, R, m=1024):
    """``w_*^2(x) = ||f_*(x_*)||^2`` with ``x_* = -x``.

    ``extras["sign_gap"]`` is the largest relative gap between this and the
    trace of ``||(I + x B^*)^{-1} f||^2``.
    """

    def source(x):
        return _model_sq_norms(model, -np.asarray(x), "f_star_side")

    trace = sample_trace(source, R, m, "w_star_sq")
    alt = _model_sq_norms(model, trace.x, "f_star_side")
    trace.extras["sign_gap"] = float(np.max(np.abs(alt - trace.values) / trace.values))
    trace.extras["alternative_values"] = alt
    return trace


def trace_phi_over_w(model, R, m=1024):
    """``|phi(x)|^2 / w^2(x)``, the second weight of the classical criterion."""

    def source(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(model.phi_many(x)) ** 2 / _model_sq_norms(model, x, "g_side")

    return sample_trace(source, R, m, "phi_over_w_sq")


def delta_eval(spec, z):
    """Regularized distance ``d / (1 + d)`` to the computed zeros."""
    if len(spec) == 0:
        raise EmptySpectrum("delta needs a nonempty spectrum")
    d = spec.distance(z)
    return d / (1.0 + d)


def trace_W(model, spec, R, m=1024):
    """``W^2 = |phi|^2 / (w^2 delta^2)`` on the real line."""
    if len(spec) and np.min(np.abs(spec.zeros.imag)) < 1e-8:
        raise SpectrumTouchesLine("a zero lies within 1e-8 of the real line")

    def source(x):
        x = np.asarray(x, dtype=float)
        phi = model.phi_many(x)
        w2 = _model_sq_norms(model, x, "g_side")
        delta = delta_eval(spec, x.astype(complex))
        return np.abs(phi) ** 2 / (w2 * delta**2)

    return sample_trace(source, R, m, "W_sq")


@dataclass(frozen=True)
class A2Report:
    constant_interval: float
    constant_poisson: float
    tail_correction: float
    growth_trend: dict
    verdict: str
    offset: float = 0.0


def _check_positive(values):
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise NonpositiveWeight("weight must be finite and strictly positive")


def interval_constant(values, min_cells=4):
    """Supremum of ``avg(v) avg(1/v)`` over dyadic blocks of the cells."""
    values = np.asarray(values, dtype=float)
    m = values.size
    cv = np.concatenate([[0.0], np.cumsum(values)])
    ci = np.concatenate([[0.0], np.cumsum(1.0 / values)])
    best = 1.0
    level = 0
    while m / 2**level >= min_cells:
        edges = np.round(np.linspace(0, m, 2**level + 1)).astype(int)
        lo, hi = edges[:-1], edges[1:]
        ln = hi - lo
        prod = ((cv[hi] - cv[lo]) / ln) * ((ci[hi] - ci[lo]) / ln)
        best = max(best, float(prod.max()))
        level += 1
    return best


def poisson_constant(trace, heights=POISSON_HEIGHTS, n_probe=129):
    """Supremum of ``P[v](z) P[1/v](z)`` over probes ``z = x + i y``.

    ``heights`` are fractions of ``R``.  Cell masses of the Poisson kernel
    are integrated exactly; the mass outside ``[-R, R]`` carries the edge
    values.  Returns the constant and the largest tail mass used.
    """
    v = trace.values
    R = trace.R
    edges = np.linspace(-R, R, trace.m + 1)
    probes_x = np.linspace(-R, R, n_probe)
    best, tail_max = 1.0, 0.0
    for frac in heights:
        y = frac * R
        for x0 in probes_x:
            at = np.arctan((edges - x0) / y) / np.pi
            mass = np.diff(at)
            left = at[0] + 0.5
            right = 0.5 - at[-1]
            pv = mass @ v + left * v[0] + right * v[-1]
            pinv = mass @ (1.0 / v) + left / v[0] + right / v[-1]
            best = max(best, float(pv * pinv))
            tail_max = max(tail_max, float(left + right))
    return best, tail_max


def a2_check(trace, trace_2R=None):
    """Interval and Poisson forms of the A2 constant with an R-doubling trend."""
    _check_positive(trace.values)
    ci = interval_constant(trace.values)
    cp, tail = poisson_constant(trace)
    if trace_2R is None:
        trace_2R = trace.doubled()
    trend = {"R": trace.R, "interval_R": ci, "poisson_R": cp}
    if trace_2R is None:
        verdict = "inconclusive"
    else:
        _check_positive(trace_2R.values)
        ci2 = interval_constant(trace_2R.values)
        # the doubled window keeps the probe spacing and the heights used at R
        scale = trace.R / trace_2R.R
        heights = sorted(set(POISSON_HEIGHTS) | {h * scale for h in POISSON_HEIGHTS})
        cp2, _ = poisson_constant(trace_2R, heights, n_probe=int(round((128 / scale))) + 1)
        trend.update({"interval_2R": ci2, "poisson_2R": cp2})
        ratios = (ci2 / ci, cp2 / cp)
        trend["ratios"] = ratios
        if all(abs(r - 1.0) < DRIFT for r in ratios):
            verdict = "stable"
        elif any(r >= 1.0 + DRIFT for r in ratios):
            verdict = "growing"
        else:
            verdict = "inconclusive"
    return A2Report(ci, cp, tail, trend, verdict, trace.offset)


def _weighted_integral(trace, power):
    return float(np.sum(trace.values**power / (1.0 + trace.x**2)) * trace.dx)


def integrability_check(trace, trace_2R=None):
    """``int v^{+-1}(x) / (1 + x^2) dx`` on ``[-R, R]`` and ``[-2R, 2R]``."""
    if trace_2R is None:
        trace_2R = trace.doubled()
    report = {}
    for name, p in (("direct", 1), ("reciprocal", -1)):
        at_R = _weighted_integral(trace, p)
        entry = {"R": at_R}
        if trace_2R is not None:
            at_2R = _weighted_integral(trace_2R, p)
            entry["2R"] = at_2R
            entry["verdict"] = "convergent" if abs(at_2R - at_R) < 0.1 * abs(at_R) else "divergent"
        else:
            entry["verdict"] = "inconclusive"
        report[name] = entry
    return report
