"""Discretized Hilbert-space model of a rank-one perturbed Volterra operator.

Vectors of ``L^2(0, a)`` are sampled on a grid of ``[0, a]`` carrying a
positive quadrature rule; the inner product is

    (u, v) = sum_i w_i u_i conj(v_i).

Two schemes are provided:

``chebyshev``
    Chebyshev points of the second kind, Clenshaw-Curtis weights and the
    spectral integration matrix.  Quasi-exponentials are resolved to rounding
    error as long as the grid resolves ``exp(i z t)``.
``trapezoid``
    Uniform grid, composite trapezoid weights and the trapezoid cumulative
    integration matrix (lower triangular, second order).  Grid shifts are
    exact, which makes the semigroup realization exact on the grid.

All operators are stored as dense complex matrices acting on nodal values.
Adjoints are taken with respect to the weighted inner product,
``M^dagger = W^{-1} M^H W``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import legendre
from scipy.interpolate import BarycentricInterpolator

from .errors import AtSpectrum, InvalidDimension, SingularSolve, UnsupportedKind

SCHEMES = ("chebyshev", "trapezoid")
PIVOT_FLOOR = 1e-14
PHI_FLOOR = 1e-12
TOL_QUASINILPOTENT = 1e-6


def _frozen(array):
    array = np.array(array)
    array.setflags(write=False)
    return array


def _clenshaw_curtis_weights(n):
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    v = np.ones(N - 1)
    inner = theta[1:-1]
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(N * inner) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / N
    return w


def _chebyshev_integration(x):
    """Spectral matrix of h -> int_{-1}^{x} h on the points ``x``."""
    n = x.size
    vander = cheb.chebvander(x, n - 1)
    to_coef = np.linalg.inv(vander)
    integrated = cheb.chebint(to_coef, lbnd=-1, axis=0)
    return cheb.chebvander(x, n) @ integrated


@dataclass(frozen=True, eq=False)
class Grid:
    """Nodes, quadrature weights and cumulative-integration matrix on ``[0, a]``."""

    a: float
    n: int
    scheme: str
    nodes: np.ndarray
    weights: np.ndarray
    integration: np.ndarray

    @property
    def step(self):
        return self.a / (self.n - 1)

    def inner(self, u, v):
        return complex(np.sum(self.weights * np.asarray(u) * np.conj(v)))

    def norm(self, u):
        return float(np.sqrt(np.sum(self.weights * np.abs(u) ** 2)))

    def interpolate(self, values, points):
        """Evaluate the grid interpolant of ``values`` at ``points`` inside [0, a]."""
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=complex)
        if self.scheme == "trapezoid":
            return np.interp(points, self.nodes, values.real) + 1j * np.interp(
                points, self.nodes, values.imag
            )
        return BarycentricInterpolator(self.nodes, values, wi=_cheb_bary_weights(self.n))(points)

    def subinterval_rule(self, lo, hi):
        """Nodes and weights of an accurate rule on ``[lo, hi]`` (Gauss-Legendre)."""
        x, w = _gauss_legendre(self.n)
        half = 0.5 * (hi - lo)
        return lo + half * (x + 1.0), half * w


@functools.lru_cache(maxsize=16)
def _gauss_legendre(n):
    return legendre.leggauss(n)


@functools.lru_cache(maxsize=16)
def _cheb_bary_weights(n):
    w = (-1.0) ** np.arange(n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@functools.lru_cache(maxsize=32)
def make_grid(a, n, scheme="chebyshev"):
    """Return the (cached) grid of ``n`` points on ``[0, a]``."""
    if not n >= 2 or not a > 0:
        raise InvalidDimension(f"grid needs n >= 2 and a > 0, got n={n}, a={a}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    a = float(a)
    if scheme == "trapezoid":
        nodes = np.linspace(0.0, a, n)
        h = a / (n - 1)
        weights = np.full(n, h)
        weights[[0, -1]] = h / 2
        J = np.tril(np.full((n, n), h))
        J[:, 0] = h / 2
        J[np.diag_indices(n)] = h / 2
        J[0, 0] = 0.0
    else:
        x = -np.cos(np.pi * np.arange(n) / (n - 1))
        nodes = 0.5 * a * (x + 1.0)
        nodes[0], nodes[-1] = 0.0, a
        weights = 0.5 * a * _clenshaw_curtis_weights(n)
        J = 0.5 * a * _chebyshev_integration(x)
    return Grid(a, n, scheme, _frozen(nodes), _frozen(weights), _frozen(J))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex function sampled on a :class:`Grid`; an element of the model space."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex).reshape(-1)
        if values.size != self.grid.n:
            raise InvalidDimension(f"expected {self.grid.n} values, got {values.size}")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_callable(cls, grid, func):
        return cls(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape))

    @classmethod
    def constant(cls, grid, c=1.0):
        return cls(grid, np.full(grid.n, c, dtype=complex))

    @property
    def a(self):
        return self.grid.a

    @property
    def n(self):
        return self.grid.n

    @property
    def quad_weights(self):
        return self.grid.weights

    def inner(self, other):
        return self.grid.inner(self.values, _values(other))

    def norm(self):
        return self.grid.norm(self.values)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _values(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _values(other))

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__


def _values(h):
    return h.values if isinstance(h, GridFunction) else np.asarray(h, dtype=complex)


class ShiftedSolver:
    """Solves ``(I - z M) u = v`` for one matrix and many ``z``.

    The complex Schur form ``M = Q T Q^H`` is computed once; each solve is
    then a triangular back substitution, vectorized over ``z``.
    """

    def __init__(self, matrix):
        T, Q = sla.schur(np.asarray(matrix, dtype=complex), output="complex")
        self.T = T
        self.Q = Q
        self.diag = np.diag(T).copy()

    def _check(self, pivots):
        if np.any(np.abs(pivots) < PIVOT_FLOOR):
            raise SingularSolve("pivot below 1e-14 in the resolvent solve")

    def solve(self, z, v):
        z = complex(z)
        self._check(1.0 - z * self.diag)
        A = np.eye(self.T.shape[0]) - z * self.T
        y = sla.solve_triangular(A, self.Q.conj().T @ v)
        return self.Q @ y

    def solve_many(self, zs, v):
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        w = self.Q.conj().T @ np.asarray(v, dtype=complex)
        n = w.size
        pivots = 1.0 - zs[:, None] * self.diag[None, :]
        self._check(pivots)
        Y = np.zeros((zs.size, n), dtype=complex)
        T = self.T
        for i in range(n - 1, -1, -1):
            acc = Y[:, i + 1 :] @ T[i, i + 1 :]
            Y[:, i] = (w[i] + zs * acc) / pivots[:, i]
        return Y @ self.Q.T


@dataclass(frozen=True, eq=False)
class VolterraOperator:
    """Discretization of ``(Bh)(x) = i int_0^x k(x, s) h(s) ds``.

    ``kind`` is ``"canonical_Ja"`` for the kernel ``k = 1`` and
    ``"general_kernel"`` otherwise.
    """

    grid: Grid
    matrix: np.ndarray
    kind: str = "canonical_Ja"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(np.asarray(self.matrix, dtype=complex)))
        if self.matrix.shape != (self.grid.n, self.grid.n):
            raise InvalidDimension("operator matrix does not match the grid")

    @property
    def a(self):
        return self.grid.a

    @property
    def n(self):
        return self.grid.n

    @classmethod
    def from_kernel(cls, grid, kernel):
        """Nystrom discretization of a Volterra kernel ``k(x, s)``."""
        x = grid.nodes
        K = np.asarray(kernel(x[:, None], x[None, :]), dtype=complex)
        return cls(grid, 1j * grid.integration * np.broadcast_to(K, (grid.n, grid.n)), "general_kernel")

    @classmethod
    def from_matrix(cls, grid, matrix):
        return cls(grid, matrix, "general_kernel")

    def apply(self, h):
        return GridFunction(self.grid, self.matrix @ _values(h))

    @property
    def adjoint_matrix(self):
        """Matrix of ``B^*`` under the weighted inner product."""
        if "adjoint" not in self._cache:
            w = self.grid.weights
            self._cache["adjoint"] = _frozen((self.matrix.conj().T * w[None, :]) / w[:, None])
        return self._cache["adjoint"]

    @property
    def solver(self):
        if "solver" not in self._cache:
            self._cache["solver"] = ShiftedSolver(self.matrix)
        return self._cache["solver"]

    @property
    def star_solver(self):
        """Solver for ``B_* = -B^*``."""
        if "star_solver" not in self._cache:
            self._cache["star_solver"] = ShiftedSolver(-self.adjoint_matrix)
        return self._cache["star_solver"]

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.matrix))))

    def weighted_matrix_norm(self, matrix=None):
        M = self.matrix if matrix is None else matrix
        return weighted_norm(self.grid, M)


def weighted_norm(grid, matrix):
    """Operator 2-norm of ``matrix`` on the weighted space."""
    s = np.sqrt(grid.weights)
    return float(np.linalg.norm(s[:, None] * matrix / s[None, :], 2))


def build_integration_operator(a, n, scheme="chebyshev"):
    """Discretize ``(J_a h)(x) = i int_0^x h(s) ds`` on ``n`` points of ``[0, a]``."""
    if not isinstance(n, (int, np.integer)) or n < 2 or not a > 0:
        raise InvalidDimension(f"need n >= 2 and a > 0, got n={n}, a={a}")
    grid = make_grid(float(a), int(n), scheme)
    return VolterraOperator(grid, 1j * grid.integration, "canonical_Ja")


def quasinilpotency_report(B, tol=TOL_QUASINILPOTENT):
    """Spectral-radius surrogate for ``sigma(B) = {0}``.

    The trapezoid matrix is triangular with diagonal ``i h / 2``, so its
    spectral radius is ``a / (2 (n - 1))``; it vanishes only under refinement.
    ``scaled`` is ``rho * (n - 1) / a`` which stays bounded when the spurious
    spectrum is first order in the step.
    """
    rho = B.spectral_radius()
    return {
        "spectral_radius": rho,
        "scaled": rho * (B.n - 1) / B.a,
        "within_tol": rho <= tol,
        "tol": tol,
    }


def resolvent_B(B, z, h):
    """Return ``(I - z B)^{-1} h``."""
    if z == 0:
        return h if isinstance(h, GridFunction) else GridFunction(B.grid, h)
    return GridFunction(B.grid, B.solver.solve(z, _values(h)))


def semigroup_apply(B, t, h):
    """Right shift with zero fill, ``(V(t) h)(x) = h(x - t)`` for ``x >= t``."""
    if B.kind != "canonical_Ja":
        raise UnsupportedKind("the semigroup is realized only for the integration operator")
    if not 0.0 <= t <= B.a:
        raise ValueError(f"t must lie in [0, {B.a}], got {t}")
    grid = B.grid
    x = grid.nodes
    out = np.zeros(grid.n, dtype=complex)
    mask = x >= t - 1e-14 * grid.a
    if t >= grid.a:
        return GridFunction(grid, out)
    if grid.scheme == "trapezoid":
        k = t / grid.step
        if abs(k - round(k)) < 1e-9:
            k = int(round(k))
            out[k:] = _values(h)[: grid.n - k]
            return GridFunction(grid, out)
    out[mask] = grid.interpolate(_values(h), np.clip(x[mask] - t, 0.0, grid.a))
    return GridFunction(grid, out)


def semigroup_laplace(B, z, h):
    """Quadrature of ``int_0^a exp(i z t) V(t) h dt`` evaluated on the grid.

    At node ``x_i`` the integrand vanishes for ``t > x_i``; the integral over
    ``[0, x_i]`` uses the trapezoid rows of the grid (trapezoid scheme) or
    Gauss-Legendre with interpolated ``h`` (Chebyshev scheme).
    """
    if B.kind != "canonical_Ja":
        raise UnsupportedKind("the semigroup is realized only for the integration operator")
    grid = B.grid
    hv = _values(h)
    x = grid.nodes
    out = np.zeros(grid.n, dtype=complex)
    if grid.scheme == "trapezoid":
        ez = np.exp(1j * z * x)
        for i in range(1, grid.n):
            out[i] = np.sum(grid.integration[i, : i + 1] * ez[: i + 1] * hv[i::-1])
        return GridFunction(grid, out)
    for i in range(1, grid.n):
        t, w = grid.subinterval_rule(0.0, x[i])
        out[i] = np.sum(w * np.exp(1j * z * t) * grid.interpolate(hv, x[i] - t))
    return GridFunction(grid, out)


def shifted_inner(B, t, g, f):
    """``(V(t) g, f) = int_t^a g(x - t) conj(f(x)) dx``."""
    grid = B.grid
    if grid.scheme == "trapezoid":
        k = int(round(t / grid.step))
        if k >= grid.n - 1:
            return 0j
        w = np.full(grid.n - k, grid.step)
        w[[0, -1]] = grid.step / 2
        return complex(np.sum(w * _values(g)[: grid.n - k] * np.conj(_values(f)[k:])))
    if t >= grid.a:
        return 0j
    x, w = grid.subinterval_rule(t, grid.a)
    gv = grid.interpolate(_values(g), x - t)
    fv = grid.interpolate(_values(f), x)
    return complex(np.sum(w * gv * np.conj(fv)))


def fredholm_resolvent_sq_norms(B, h, lams):
    """``||B (I - lam B)^{-1} h||^2`` for an array of real or complex ``lams``."""
    U = B.solver.solve_many(lams, _values(h))
    BU = U @ B.matrix.T
    return np.sum(B.grid.weights[None, :] * np.abs(BU) ** 2, axis=1)


def resolvent_B_square_integral(B, h, R=200.0, m=4001):
    """Trapezoid quadrature of ``int_{-R}^{R} ||B (I - lam B)^{-1} h||^2 d lam``."""
    if B.kind != "canonical_Ja":
        raise UnsupportedKind("energy bound is only checked for the integration operator")
    hv = _values(h)
    if not np.any(hv):
        return 0.0
    lams = np.linspace(-R, R, m)
    vals = fredholm_resolvent_sq_norms(B, hv, lams)
    return float(np.trapezoid(vals, lams))


def semigroup_energy(B, h, m=None):
    """``int_0^a ||V(t) h||^2 dt`` by direct quadrature over shifts."""
    grid = B.grid
    hv = _values(h)
    if grid.scheme == "trapezoid":
        ts = grid.nodes
        vals = np.array([semigroup_apply(B, t, hv).norm() ** 2 for t in ts])
        return float(np.sum(grid.weights * vals))
    t, w = grid.subinterval_rule(0.0, grid.a)
    # ||V(t)h||^2 = int_0^{a-t} |h(s)|^2 ds
    vals = []
    for ti in t:
        s, ws = grid.subinterval_rule(0.0, grid.a - ti)
        vals.append(np.sum(ws * np.abs(grid.interpolate(hv, s)) ** 2))
    return float(np.sum(w * np.array(vals)))


def resolvent_energy_bound(B, h):
    """Plancherel value ``2 pi int_0^a ||V(t) h||^2 dt`` of the full-line integral."""
    return 2.0 * np.pi * semigroup_energy(B, h)


class PerturbedModel:
    """The triple ``(B, f, g)`` with ``K h = B h + (h, f) g`` and ``A = K^{-1}``."""

    def __init__(self, B, f, g):
        if not isinstance(f, GridFunction):
            f = GridFunction(B.grid, f)
        if not isinstance(g, GridFunction):
            g = GridFunction(B.grid, g)
        if f.grid.n != B.n or g.grid.n != B.n:
            raise InvalidDimension("B, f and g must share the grid")
        if not (np.isclose(f.grid.a, B.a) and np.isclose(g.grid.a, B.a)):
            raise InvalidDimension("B, f and g must share the interval length")
        self.B = B
        self.f = f
        self.g = g
        self._K = None
        self._compat = None

    @property
    def grid(self):
        return self.B.grid

    @property
    def a(self):
        return self.B.a

    @property
    def n(self):
        return self.B.n

    @property
    def K(self):
        if self._K is None:
            w = self.grid.weights
            self._K = _frozen(
                self.B.matrix + np.outer(self.g.values, np.conj(self.f.values) * w)
            )
        return self._K

    @property
    def K_adjoint(self):
        w = self.grid.weights
        return (self.K.conj().T * w[None, :]) / w[:, None]

    @property
    def compat_residuals(self):
        """Smallest weighted singular values of ``K`` and ``K^*`` on resolved modes.

        The discrete integration matrix has a one-dimensional kernel (its row
        at ``x = 0`` vanishes), a grid artefact that ``K`` inherits whenever
        ``f`` is orthogonal to it.  The surrogate of ``ker K = ker K^* = {0}``
        is therefore taken on the span of ``exp(2 pi i k t / a)``,
        ``|k| <= n // 8``, which the grid resolves.  The unrestricted values
        are in :attr:`compat_residuals_full`.
        """
        if self._compat is None:
            s = np.sqrt(self.grid.weights)
            k = np.arange(-(self.n // 8), self.n // 8 + 1)
            E = np.exp(2j * np.pi * np.outer(self.grid.nodes, k) / self.a)
            Q, _ = np.linalg.qr(s[:, None] * E)
            vals = []
            for M in (self.K, self.K_adjoint):
                sv = np.linalg.svd((s[:, None] * M / s[None, :]) @ Q, compute_uv=False)
                vals.append(float(sv[-1]))
            self._compat = tuple(vals)
        return self._compat

    @property
    def compat_residuals_full(self):
        s = np.sqrt(self.grid.weights)
        out = []
        for M in (self.K, self.K_adjoint):
            out.append(float(np.linalg.svd(s[:, None] * M / s[None, :], compute_uv=False)[-1]))
        return tuple(out)

    def inner(self, u, v):
        return self.grid.inner(_values(u), _values(v))

    def quasi_exponential(self, z, which="g_side"):
        return quasi_exponential(self, z, which)

    def quasi_exponentials(self, zs, which="g_side"):
        """Rows are ``g(z)`` (or ``f_*(z)``) for each entry of ``zs``."""
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        if which == "g_side":
            return self.B.solver.solve_many(zs, self.g.values)
        if which == "f_star_side":
            return self.B.star_solver.solve_many(zs, self.f.values)
        raise ValueError(f"unknown side {which!r}")

    def phi(self, z):
        z = complex(z)
        if z == 0:
            return 1.0 + 0j
        gz = self.B.solver.solve(z, self.g.values)
        return 1.0 - z * self.grid.inner(gz, self.f.values)

    def phi_many(self, zs):
        zs = np.asarray(zs, dtype=complex).reshape(-1)
        G = self.quasi_exponentials(zs, "g_side")
        ip = G @ (self.grid.weights * np.conj(self.f.values))
        return 1.0 - zs * ip

    def resolvent_A(self, z, h):
        return resolvent_A(self, z, h)

    def resolvent_A_direct(self, z, h):
        """``K (I - z K)^{-1} h`` by a dense solve."""
        hv = _values(h)
        u = np.linalg.solve(np.eye(self.n) - complex(z) * self.K, hv)
        return GridFunction(self.grid, self.K @ u)

    def resolvent_A_matrix(self, z):
        M = np.linalg.solve(np.eye(self.n) - complex(z) * self.K, self.K)
        return M

    def resolvent_A_norm(self, z):
        """Weighted operator norm of ``(A - z)^{-1}``."""
        return weighted_norm(self.grid, self.resolvent_A_matrix(z))

    def L_norm(self, z):
        """Norm of the rank-one part ``||g(z)|| ||f_*(z_*)|| / |phi(z)|``."""
        z = complex(z)
        gz = self.B.solver.solve(z, self.g.values)
        phi = 1.0 - z * self.grid.inner(gz, self.f.values)
        fz = self.B.star_solver.solve(-np.conj(z), self.f.values)
        return self.grid.norm(gz) * self.grid.norm(fz) / abs(phi)

    def L_matrix(self, z):
        """Matrix of ``L(z) h = phi(z)^{-1} (h, f_*(z_*)) g(z)``."""
        z = complex(z)
        gz = self.B.solver.solve(z, self.g.values)
        phi = 1.0 - z * self.grid.inner(gz, self.f.values)
        fz = self.B.star_solver.solve(-np.conj(z), self.f.values)
        return np.outer(gz, np.conj(fz) * self.grid.weights) / phi


def quasi_exponential(model, z, which="g_side"):
    """``g(z) = (I - z B)^{-1} g`` or ``f_*(z) = (I - z B_*)^{-1} f``, ``B_* = -B^*``."""
    z = complex(z)
    if which == "g_side":
        base, solver = model.g, model.B.solver
    elif which == "f_star_side":
        base, solver = model.f, model.B.star_solver
    else:
        raise ValueError(f"unknown side {which!r}")
    if z == 0:
        return base
    return GridFunction(model.grid, solver.solve(z, base.values))


def w_star_alternative(model, x):
    """``(I + x B^*)^{-1} f``: the printed right-hand side of the w_* weight."""
    return GridFunction(model.grid, model.B.star_solver.solve(complex(x), model.f.values))


def resolvent_A(model, z, h):
    """``B (I - z B)^{-1} h + phi(z)^{-1} (h, f_*(z_*)) g(z)``."""
    z = complex(z)
    hv = _values(h)
    if z == 0:
        return GridFunction(model.grid, model.K @ hv)
    gz = model.B.solver.solve(z, model.g.values)
    phi = 1.0 - z * model.grid.inner(gz, model.f.values)
    if abs(phi) <= PHI_FLOOR:
        raise AtSpectrum(f"|phi(z)| = {abs(phi):.3e} at z = {z}")
    fz = model.B.star_solver.solve(-np.conj(z), model.f.values)
    Rh = model.B.solver.solve(z, hv)
    out = model.B.matrix @ Rh + (model.grid.inner(hv, fz) / phi) * gz
    return GridFunction(model.grid, out)


def vector_from_tag(grid, tag, **params):
    """Closed-form generating vectors used by scenarios."""
    t = grid.nodes
    if tag == "one":
        return GridFunction.constant(grid, params.get("scale", 1.0))
    if tag == "zero":
        return GridFunction.constant(grid, 0.0)
    if tag == "exp_t":
        return GridFunction(grid, params.get("scale", 1.0) * np.exp(params.get("rate", 1.0) * t))
    if tag == "gaussian":
        c = params.get("center", grid.a / 2)
        s = params.get("width", grid.a / 4)
        return GridFunction(grid, np.exp(-((t - c) ** 2) / (2 * s * s)))
    if tag == "table":
        return GridFunction(grid, np.asarray(params["values"], dtype=complex))
    raise ValueError(f"unknown vector tag {tag!r}")
