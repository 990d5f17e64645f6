"""Fredholm determinant ``phi(z) = 1 - z (g(z), f)`` and its zeros.

The determinant is evaluated either through the quasi-exponential
(``inner_product``) or through the shift semigroup (``semigroup``).  Zeros are
located with the argument principle on recursively quadrisected rectangles
and polished by Newton's method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSpectrum,
    MultipleZero,
    OverflowGuard,
    RealZeroFound,
    UnsupportedKind,
    ZeroOnContour,
)
from .model import shifted_inner

EDGE_POINTS = 256
NEWTON_TOL = 1e-10
REAL_ZERO_TOL = 1e-8
SIMPLICITY_TOL = 1e-6


class DetFunction:
    """Evaluator of the Fredholm determinant.

    Either wraps a :class:`~basisdiag.model.PerturbedModel` or an injected
    callback ``callback(z) -> complex`` (vectorized callbacks are used as such
    when they accept arrays).
    """

    def __init__(self, model=None, callback=None):
        if (model is None) == (callback is None):
            raise ValueError("give exactly one of model or callback")
        self.model = model
        self.callback = callback

    def __call__(self, z):
        return self.phi(z)

    def phi(self, z):
        if self.model is not None:
            return self.model.phi(z)
        return complex(self.callback(complex(z)))

    def phi_many(self, zs):
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        if self.model is not None:
            return self.model.phi_many(zs)
        try:
            out = np.asarray(self.callback(zs), dtype=complex)
            if out.shape == zs.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.array([complex(self.callback(complex(z))) for z in zs])

    def phi_prime(self, z, method="auto"):
        """Derivative of ``phi``.

        ``central`` and ``imaginary`` are centred differences along the real
        and the imaginary direction with step ``1e-6 (1 + |z|)``; ``analytic``
        uses ``phi'(z) = -(g(z), f) - z (B g(z), f_*(z_*))`` and needs a model.
        ``auto`` picks ``analytic`` when a model is attached.
        """
        z = complex(z)
        if method == "auto":
            method = "analytic" if self.model is not None else "central"
        if method == "analytic":
            if self.model is None:
                raise UnsupportedKind("analytic derivative needs a model")
            m = self.model
            gz = m.B.solver.solve(z, m.g.values)
            fz = m.B.star_solver.solve(-np.conj(z), m.f.values)
            return -m.grid.inner(gz, m.f.values) - z * m.grid.inner(m.B.matrix @ gz, fz)
        h = 1e-6 * (1.0 + abs(z))
        if method == "central":
            p = self.phi_many([z + h, z - h])
            return (p[0] - p[1]) / (2 * h)
        if method == "imaginary":
            p = self.phi_many([z + 1j * h, z - 1j * h])
            return (p[0] - p[1]) / (2j * h)
        raise ValueError(f"unknown derivative method {method!r}")


def eval_phi(det, z, formula="inner_product"):
    """Evaluate ``phi(z)`` by ``inner_product`` or ``semigroup`` formula."""
    z = complex(z)
    if formula == "inner_product":
        return det.phi(z)
    if formula != "semigroup":
        raise ValueError(f"unknown formula {formula!r}")
    model = det.model
    if model is None or model.B.kind != "canonical_Ja":
        raise UnsupportedKind("semigroup formula needs the integration operator")
    if z == 0:
        return 1.0 + 0j
    grid = model.grid
    g, f = model.g.values, model.f.values
    vals = np.array([shifted_inner(model.B, t, g, f) for t in grid.nodes])
    tail = np.sum(grid.weights * np.exp(1j * z * grid.nodes) * vals)
    # sign fixed by -iB(I - zB)^{-1} = int e^{izt} V(t) dt
    return 1.0 - z * grid.inner(g, f) - 1j * z * z * tail


@dataclass(frozen=True)
class Spectrum:
    """Simple zeros of ``phi`` in a window, ordered by nondecreasing modulus."""

    zeros: np.ndarray
    window: tuple
    phi_prime: np.ndarray
    residuals: np.ndarray
    winding_total: int
    derivative_crosscheck: float = 0.0
    cells: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.zeros)

    @property
    def simplicity_margin(self):
        z = self.zeros
        if z.size < 2:
            return float("inf")
        d = np.abs(z[:, None] - z[None, :])
        d[np.diag_indices(z.size)] = np.inf
        return float(d.min())

    @property
    def abs_phi_prime(self):
        return np.abs(self.phi_prime)

    def distance(self, z):
        """``d(z) = dist(z, Lambda)`` over the computed zeros (vectorized)."""
        z = np.asarray(z, dtype=complex)
        if self.zeros.size == 0:
            return np.full(z.shape, np.inf)
        return np.min(np.abs(z[..., None] - self.zeros), axis=-1)

    def upper(self):
        return self.zeros[self.zeros.imag > 0]

    def lower(self):
        return self.zeros[self.zeros.imag < 0]


def _edge_points(z0, z1, m):
    return z0 + (z1 - z0) * np.linspace(0.0, 1.0, m + 1)[:-1]


class _Contour:
    def __init__(self, det, max_points=8192):
        self.det = det
        self.max_points = max_points
        self.evaluations = 0

    def edge(self, z0, z1):
        """Samples and phi values along one edge, refined until arg steps < 1 rad."""
        m = EDGE_POINTS
        while True:
            zs = np.append(_edge_points(z0, z1, m), z1)
            ph = self.det.phi_many(zs)
            self.evaluations += zs.size
            if not np.all(np.isfinite(ph)):
                raise OverflowGuard("phi overflowed on the contour")
            with np.errstate(divide="ignore", invalid="ignore"):
                steps = np.angle(ph[1:] / ph[:-1])
            small = np.min(np.abs(ph)) <= 1e-12 * max(1.0, float(np.median(np.abs(ph))))
            if not small and np.max(np.abs(steps)) < 1.0:
                return zs, ph
            if m >= self.max_points or small:
                raise ZeroOnContour(f"contour segment {z0}..{z1} passes too close to a zero")
            m *= 4

    def winding(self, rect):
        x0, x1, y0, y1 = rect
        corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        total = 0.0
        moment = 0j
        for k in range(4):
            zs, ph = self.edge(corners[k], corners[(k + 1) % 4])
            dlog = np.log(np.abs(ph[1:] / ph[:-1])) + 1j * np.angle(ph[1:] / ph[:-1])
            total += float(np.sum(dlog.imag))
            moment += np.sum(0.5 * (zs[1:] + zs[:-1]) * dlog)
        count = int(round(total / (2 * np.pi)))
        if abs(total / (2 * np.pi) - count) > 0.1:
            raise ZeroOnContour(f"non-integer winding {total / (2 * np.pi):.3f} on {rect}")
        return count, moment / (2j * np.pi)


def _nudged(rect, contour, max_shift=1e-3):
    """Shrink/grow the rectangle edges until the contour avoids zeros."""
    x0, x1, y0, y1 = rect
    width = max(x1 - x0, y1 - y0)
    for shift in (0.0, 1e-6, 1e-5, 1e-4, 1e-3):
        s = shift * max(1.0, width)
        s = min(s, max_shift * max(1.0, width))
        trial = (x0 - s, x1 + s, y0 - s, y1 + s)
        try:
            return trial, contour.winding(trial)
        except ZeroOnContour:
            continue
    raise ZeroOnContour(f"edge nudging failed for window {rect}")


def _newton(det, z, tol=NEWTON_TOL, maxiter=60):
    for _ in range(maxiter):
        p = det.phi(z)
        dp = det.phi_prime(z)
        if dp == 0:
            break
        step = p / dp
        z = z - step
        if abs(step) <= 1e-14 * (1.0 + abs(z)):
            break
    return z, abs(det.phi(z))


def find_spectrum(det, window, min_cell=1e-7, max_depth=40):
    """Zeros of ``phi`` inside ``window = (x0, x1, y0, y1)``.

    Counts zeros with the argument principle, quadrisects cells holding more
    than one zero, and polishes each isolated zero with Newton's method
    starting from the contour moment of its cell.
    """
    contour = _Contour(det)
    window, (total, _) = _nudged(tuple(float(v) for v in window), contour)
    found = []
    cells = []

    def split(rect, count, depth):
        if count == 0:
            return
        x0, x1, y0, y1 = rect
        if count == 1:
            _, centre = contour.winding(rect)
            if not (x0 <= centre.real <= x1 and y0 <= centre.imag <= y1):
                centre = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
            z, res = _newton(det, centre)
            pad = 1e-9 * max(1.0, abs(z))
            inside = x0 - pad <= z.real <= x1 + pad and y0 - pad <= z.imag <= y1 + pad
            if inside and res <= NEWTON_TOL * max(1.0, abs(det.phi_prime(z))):
                found.append((z, res))
                cells.append(rect)
                return
        if depth >= max_depth or max(x1 - x0, y1 - y0) < min_cell:
            raise MultipleZero(f"{count} zeros not separated inside {rect}")
        for frac in (0.5 + 1 / 97, 0.5 - 1 / 89, 0.5 + 1 / 31, 0.5 - 1 / 23):
            xm = x0 + frac * (x1 - x0)
            ym = y0 + frac * (y1 - y0)
            kids = [(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)]
            try:
                counts = [contour.winding(k)[0] for k in kids]
            except ZeroOnContour:
                continue
            if sum(counts) == count:
                break
        else:
            raise ZeroOnContour(f"no consistent subdivision of {rect}")
        for k, c in zip(kids, counts):
            split(k, c, depth + 1)

    split(window, total, 0)
    zeros = np.array([z for z, _ in found], dtype=complex)
    residuals = np.array([r for _, r in found])
    order = np.lexsort((np.angle(zeros), np.abs(zeros))) if zeros.size else np.array([], int)
    zeros, residuals = zeros[order], residuals[order]
    if zeros.size != total:
        raise MultipleZero(f"winding total {total} but {zeros.size} zeros refined")
    near_line = zeros[np.abs(zeros.imag) < REAL_ZERO_TOL]
    if near_line.size:
        raise RealZeroFound(f"zero {near_line[0]} lies on the real axis")
    derivs = np.array([det.phi_prime(z) for z in zeros], dtype=complex)
    cross = 0.0
    if zeros.size:
        fd = np.array([det.phi_prime(z, "central") for z in zeros])
        ci = np.array([det.phi_prime(z, "imaginary") for z in zeros])
        cross = float(np.max(np.abs(fd - ci) / np.abs(derivs)))
    spec = Spectrum(zeros, window, derivs, residuals, total, cross, cells)
    if spec.simplicity_margin < SIMPLICITY_TOL:
        raise MultipleZero(f"zeros closer than {SIMPLICITY_TOL}")
    return spec


@dataclass(frozen=True)
class IndicatorFit:
    direction: str
    slope: float
    intercept: float
    residual: float
    radii: tuple


@dataclass(frozen=True)
class IndicatorData:
    """Indicator values ``h(+pi/2)``, ``h(-pi/2)``, width ``l`` and exponent ``d``."""

    h_up: float
    h_down: float
    a: float
    fits: tuple = ()
    tol: float = 0.05

    @property
    def width(self):
        return self.h_up + self.h_down

    @property
    def exponent(self):
        return 0.5 * (self.h_down - self.h_up)

    @property
    def checks(self):
        return {
            "h_up_nonpositive": self.h_up <= self.tol,
            "h_down_at_most_a": self.h_down <= self.a + self.tol,
            "exponent_at_least_half_width": self.exponent >= 0.5 * self.width - self.tol,
        }


def estimate_indicator(det, direction, radii=(4, 6, 8, 10, 12, 14)):
    """Least-squares slope of ``log|phi(r e^{+-i pi/2})|`` against ``r``.

    The fit uses the upper half of ``radii`` (at least three values).
    """
    radii = np.asarray(sorted(radii), dtype=float)
    if radii.size < 3:
        raise ValueError("need at least three radii")
    sign = {"up": 1j, "down": -1j}[direction]
    with np.errstate(over="raise", invalid="raise"):
        try:
            vals = det.phi_many(sign * radii)
        except FloatingPointError as exc:
            raise OverflowGuard(f"phi overflowed along {direction}") from exc
    if not np.all(np.isfinite(vals)):
        raise OverflowGuard(f"phi overflowed along {direction}")
    logs = np.log(np.maximum(np.abs(vals), np.finfo(float).tiny))
    keep = max(3, radii.size // 2)
    r, y = radii[-keep:], logs[-keep:]
    coef, res, *_ = np.polyfit(r, y, 1, full=True)
    residual = float(np.sqrt(res[0] / keep)) if res.size else 0.0
    return IndicatorFit(direction, float(coef[0]), float(coef[1]), residual, tuple(r))


def indicator_data(det, a, radii=(4, 6, 8, 10, 12, 14), tol=0.05):
    up = estimate_indicator(det, "up", radii)
    down = estimate_indicator(det, "down", radii)
    return IndicatorData(up.slope, down.slope, a, (up, down), tol)


def product_reconstruction(spec, d, z, R_cut, min_zeros=3):
    """Truncated product ``exp(i d z) prod_{|lambda_k| <= R_cut} (1 - z / lambda_k)``."""
    z = complex(z)
    zeros = spec.zeros if isinstance(spec, Spectrum) else np.asarray(spec, dtype=complex)
    used = zeros[np.abs(zeros) <= R_cut]
    if used.size < min_zeros:
        raise InsufficientSpectrum(f"only {used.size} zeros inside R_cut={R_cut}")
    return complex(np.exp(1j * d * z) * np.prod(1.0 - z / used))


def width_positivity_check(spec, ind, finite=False, min_zeros=10, floor=0.01):
    """Positive indicator width for infinite spectra."""
    n_zeros = len(spec)
    if finite or n_zeros == 0:
        reason = "finite spectrum" if finite else "empty spectrum"
        return {"verdict": "not-applicable", "reason": reason, "width": ind.width if ind else None}
    violated = n_zeros >= min_zeros and ind.width <= floor
    return {
        "verdict": "fail" if violated else "pass",
        "width": ind.width,
        "exponent": ind.exponent,
        "zeros_in_window": n_zeros,
    }
