"""Basis and estimate battery for the eigenfunctions of ``A``.

Eigenfunctions of ``A`` are the quasi-exponentials ``g(lambda_k)`` and those
of ``A^*`` are ``f_*(lambda_k*)`` with ``z_* = -conj(z)``.  The checks here
are finite-section surrogates: Gram-matrix trends stand in for Riesz
bounds, windowed integrals for integrals over the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AtSpectrum,
    DegenerateGram,
    DerivativeTooSmall,
    MixedHalfPlanes,
    PointOnAxis,
    ProbeAtSpectrum,
)
from .weights import cell_centres

DRIFT = 0.25
LOG_DECAY_LIMIT = 0.5
LOG_DECAY_MIN_SIZE = 64
N_RANDOM = 32


@dataclass(frozen=True)
class EstimateReport:
    id: str
    claim: str
    left: float
    right: float
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self):
        return self.right / self.left if self.left else float("inf")

    def as_dict(self):
        return {
            "id": self.id,
            "claim": self.claim,
            "left": self.left,
            "right": self.right,
            "ratio": self.ratio,
            "meta": self.meta,
        }


@dataclass(frozen=True)
class FrameReport:
    N: int
    m_N: float
    M_N: float
    trend: tuple
    verdict: str
    log_decay: float
    side: str = "g_side"

    def as_dict(self):
        return {
            "N": self.N,
            "m_N": self.m_N,
            "M_N": self.M_N,
            "trend": [list(t) for t in self.trend],
            "verdict": self.verdict,
            "log_decay": self.log_decay,
            "side": self.side,
        }


def carleson_constant(points, K_trunc=None):
    """``inf_k prod_{j != k} |(mu_k - mu_j) / (mu_k - conj(mu_j))|``.

    Each product runs over the ``K_trunc`` nearest neighbours of ``mu_k``
    (all other points by default).  Points in the lower half-plane are
    reflected; mixed half-planes are rejected.
    """
    mu = np.asarray(points, dtype=complex).reshape(-1)
    if mu.size == 0:
        raise ValueError("no points")
    if np.any(mu.imag == 0):
        raise PointOnAxis("points must lie off the real axis")
    if np.all(mu.imag < 0):
        mu = np.conj(mu)
    elif not np.all(mu.imag > 0):
        raise MixedHalfPlanes("split the sequence into its upper and lower parts")
    if mu.size == 1:
        return 1.0
    K = mu.size - 1 if K_trunc is None else min(int(K_trunc), mu.size - 1)
    diff = np.abs(mu[:, None] - mu[None, :])
    factors = diff / np.abs(mu[:, None] - np.conj(mu[None, :]))
    np.fill_diagonal(diff, np.inf)
    order = np.argsort(diff, axis=1, kind="stable")[:, :K]
    logs = np.sum(np.log(np.take_along_axis(factors, order, axis=1)), axis=1)
    return float(np.exp(logs.min()))


class EigenFamily:
    """Eigenvectors ``g(lambda_k)`` and ``f_*(lambda_k*)`` of a model."""

    def __init__(self, model, spec, det):
        self.model = model
        self.spec = spec
        self.det = det
        lam = spec.zeros
        self.lambdas = lam
        self.g_vectors = model.quasi_exponentials(lam, "g_side") if lam.size else np.zeros((0, model.n))
        self.f_vectors = (
            model.quasi_exponentials(-np.conj(lam), "f_star_side") if lam.size else np.zeros((0, model.n))
        )
        w = model.grid.weights
        self.g_norms = np.sqrt(np.sum(w * np.abs(self.g_vectors) ** 2, axis=1))
        self.f_norms = np.sqrt(np.sum(w * np.abs(self.f_vectors) ** 2, axis=1))
        self.phi_prime = np.asarray(spec.phi_prime, dtype=complex)

    def __len__(self):
        return self.lambdas.size

    def default_sizes(self):
        n = len(self)
        return sorted({max(1, n // 4), max(1, n // 2), n})

    def gram(self, side="g_side", size=None):
        V = self.g_vectors if side == "g_side" else self.f_vectors
        norms = self.g_norms if side == "g_side" else self.f_norms
        size = len(self) if size is None else size
        E = V[:size] / norms[:size, None]
        w = self.model.grid.weights
        G = (E * w) @ E.conj().T
        return 0.5 * (G + G.conj().T)


class ExponentialFamily:
    """Normalized exponentials ``exp(i lambda_k t) / sqrt(a)`` in ``L^2(0, a)``.

    The Gram matrix is evaluated in closed form.  Members are ordered by
    nondecreasing ``|lambda_k|``.
    """

    def __init__(self, lambdas, a=2 * np.pi):
        lam = np.asarray(lambdas, dtype=complex)
        order = np.lexsort((np.angle(lam), np.abs(lam)))
        self.lambdas = lam[order]
        self.a = float(a)

    def __len__(self):
        return self.lambdas.size

    def default_sizes(self):
        n = len(self)
        return sorted({max(1, n // 4), max(1, n // 2), n})

    @classmethod
    def symmetric(cls, N, shift, signed=True, a=2 * np.pi):
        """``lambda_k = k + shift * sign(k)`` (or ``k + shift``), ``|k| <= N``."""
        k = np.arange(-N, N + 1)
        lam = k + shift * (np.sign(k) if signed else 1.0)
        fam = cls(lam, a)
        fam.index_N = N
        return fam

    def symmetric_sizes(self, N):
        return [2 * (N // 4) + 1, 2 * (N // 2) + 1, 2 * N + 1]

    def gram(self, side="g_side", size=None):
        lam = self.lambdas[: len(self) if size is None else size]
        a = self.a
        # (e_j, e_k) = (1/a) int_0^a exp(i (l_j - conj l_k) t) dt
        s = 1j * (lam[:, None] - np.conj(lam[None, :]))
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.where(np.abs(s) < 1e-14, a + 0j, np.expm1(s * a) / s) / a
        nj = np.sqrt(np.real(np.diag(G)))
        G = G / np.outer(nj, nj)
        if side == "f_star_side":
            G = G.conj()
        return 0.5 * (G + G.conj().T)


def frame_report(family, side="g_side", sizes=None):
    """Extreme Gram eigenvalues on nested truncations and a trend verdict.

    ``riesz_stable``: both extremes drift by less than 25% between the last
    two truncations and ``m_N`` decays slower than ``(log N)^{-1/2}``.
    ``degenerating``: ``m_N`` decreases along all truncations and either
    halves or decays at least like ``(log N)^{-1/2}``.  The log-decay
    exponent is too noisy on short families and is only used from
    ``LOG_DECAY_MIN_SIZE`` vectors on.
    """
    if len(family) < 4:
        raise ValueError("frame report needs at least four vectors")
    if sizes is None:
        if hasattr(family, "index_N"):
            sizes = family.symmetric_sizes(family.index_N)
        else:
            sizes = family.default_sizes()
    trend = []
    for s in sizes:
        ev = np.linalg.eigvalsh(family.gram(side, s))
        trend.append((int(s), float(ev[0]), float(ev[-1])))
    size, m_N, M_N = trend[-1]
    if m_N < 1e-12:
        raise DegenerateGram(f"smallest Gram eigenvalue {m_N:.3e}")
    log_decay = 0.0
    verdict = "inconclusive"
    if len(trend) >= 2:
        s_prev, m_prev, M_prev = trend[-2]
        if s_prev > 1 and size > s_prev:
            log_decay = -np.log(m_N / m_prev) / np.log(np.log(size) / np.log(s_prev))
        drift_m = abs(m_N - m_prev) / m_prev
        drift_M = abs(M_N - M_prev) / M_prev
        ms = [t[1] for t in trend]
        decreasing = all(b < a for a, b in zip(ms, ms[1:]))
        slow = log_decay >= LOG_DECAY_LIMIT and size >= LOG_DECAY_MIN_SIZE
        if drift_m < DRIFT and drift_M < DRIFT and not slow:
            verdict = "riesz_stable"
        elif decreasing and (ms[0] / m_N >= 2.0 or slow):
            verdict = "degenerating"
    return FrameReport(size, m_N, M_N, tuple(trend), verdict, float(log_decay), side)


def uniform_minimality(family):
    """``||f_*(lambda_k*)|| ||g(lambda_k)|| / |phi'(lambda_k)|`` over the family."""
    dp = np.abs(family.phi_prime)
    if np.any(dp < 1e-12):
        raise DerivativeTooSmall("|phi'| below 1e-12 at a zero")
    q = family.f_norms * family.g_norms / dp
    return EstimateReport(
        "UM", "uniform minimality", float(q.min()), float(q.max()), {"values": q.tolist()}
    )


def biorthogonality_residuals(family, probes):
    """Residuals of the three biorthogonality relations.

    ``pair`` compares ``(g(lam), f_*(mu_*))`` with
    ``(phi(lam) - phi(mu)) / (mu - lam)`` (limit ``-phi'(lam)`` when equal),
    ``eigen_probe`` the same with ``lam = lambda_k``, and ``eigen_eigen``
    the matrix ``(g(lambda_k), f_*(lambda_j*)) + delta_jk phi'(lambda_k)``.
    """
    model, det = family.model, family.det
    w = model.grid.weights
    probes = np.asarray(probes, dtype=complex)
    if len(family.spec) and np.min(family.spec.distance(probes)) < 1e-8:
        raise AtSpectrum("probes must avoid the spectrum")
    G = model.quasi_exponentials(probes, "g_side")
    F = model.quasi_exponentials(-np.conj(probes), "f_star_side")
    phi = model.phi_many(probes)
    cross = (G * w) @ F.conj().T  # cross[i, j] = (g(p_i), f_*(p_j*))
    pair = 0.0
    for i, lam in enumerate(probes):
        for j, mu in enumerate(probes):
            if i == j:
                target = -det.phi_prime(lam)
            else:
                target = (phi[i] - phi[j]) / (mu - lam)
            scale = max(abs(target), np.sqrt(np.sum(w * abs(G[i]) ** 2) * np.sum(w * abs(F[j]) ** 2)), 1e-300)
            pair = max(pair, abs(cross[i, j] - target) / scale)
    eig_probe = 0.0
    eig_eig = eig_eig_norm = 0.0
    if len(family):
        C = (family.g_vectors * w) @ F.conj().T
        for k, lk in enumerate(family.lambdas):
            target = -phi / (probes - lk)
            scale = np.maximum(np.abs(target), family.g_norms[k] * np.sqrt(np.sum(w * np.abs(F) ** 2, axis=1)))
            eig_probe = max(eig_probe, float(np.max(np.abs(C[k] - target) / scale)))
        D = (family.g_vectors * w) @ family.f_vectors.conj().T  # D[k, j] = (g_k, f_j)
        R = D + np.diag(family.phi_prime)
        eig_eig = float(np.max(np.abs(R) / np.abs(family.phi_prime)[:, None]))
        eig_eig_norm = float(np.max(np.abs(R) / np.outer(family.g_norms, family.f_norms)))
    return EstimateReport(
        "biorthogonality",
        "biorthogonality relations",
        0.0,
        max(pair, eig_probe, eig_eig),
        {
            "pair": pair,
            "eigen_probe": eig_probe,
            "eigen_eigen": eig_eig,
            "eigen_eigen_normalized": eig_eig_norm,
        },
    )


def _fourier_band(grid, R, band_fraction):
    kmax = int(np.floor(band_fraction * R * grid.a / (2 * np.pi)))
    k = np.arange(-kmax, kmax + 1)
    return np.exp(2j * np.pi * np.outer(grid.nodes, k) / grid.a)


def right_regularity_bounds(model, R=200.0, m=2048, band_fraction=0.25, which="g_side"):
    """Windowed frame bounds of ``h -> (h, g(x)) / ||g(x)||`` on ``[-R, R]``.

    ``right`` is the squared largest singular value of the sampled map (the
    best ``M`` on the window).  ``left`` is the squared smallest singular
    value on the band ``|xi| <= band_fraction * R`` of exponentials
    ``exp(i xi t)`` the window resolves (evidence for ``m``).
    """
    x = cell_centres(R, m)
    dx = 2.0 * R / m
    # f_* side: the adjoint model evaluates f_*(x_*) with x_* = -x
    G = model.quasi_exponentials(x if which == "g_side" else -x, which)
    w = model.grid.weights
    gn = np.sqrt(np.sum(w * np.abs(G) ** 2, axis=1))
    if np.any(gn <= 0) or not np.all(np.isfinite(gn)):
        raise ValueError("w^2 must be positive on the window")
    sw = np.sqrt(w)
    S = (np.sqrt(dx) / gn)[:, None] * G.conj() * sw[None, :]
    sig = np.linalg.svd(S, compute_uv=False)
    E = _fourier_band(model.grid, R, band_fraction) * sw[:, None]
    Q, _ = np.linalg.qr(E)
    sig_band = np.linalg.svd(S @ Q, compute_uv=False)
    top_mode = (-1.0) ** np.arange(model.n) * sw
    top_mode /= np.linalg.norm(top_mode)
    captured = float(np.linalg.norm(S @ top_mode) ** 2)
    return EstimateReport(
        "right_regularity",
        "right-regularity",
        float(sig_band[-1] ** 2),
        float(sig[0] ** 2),
        {"R": R, "m": m, "band_modes": int(Q.shape[1]), "highest_mode_energy": captured},
    )


class DiagonalModel:
    """Normal operator with a prescribed spectrum (resolvent ``diag(1/(l - z))``)."""

    def __init__(self, eigenvalues):
        self.eigenvalues = np.asarray(eigenvalues, dtype=complex)

    def resolvent_A_norm(self, z):
        return float(np.max(1.0 / np.abs(self.eigenvalues - z)))


def lrg_sample(model, spec, probes, min_distance=1e-4):
    """``||R_z(A)|| d(z)`` over probe points."""
    probes = np.asarray(probes, dtype=complex)
    zeros = spec.zeros if hasattr(spec, "zeros") else np.asarray(spec, dtype=complex)
    d = np.min(np.abs(probes[:, None] - zeros[None, :]), axis=1)
    if np.any(d < min_distance):
        raise ProbeAtSpectrum(f"probe within {min_distance} of the spectrum")
    q = np.array([model.resolvent_A_norm(z) for z in probes]) * d
    return EstimateReport(
        "LRG", "linear resolvent growth", float(q.min()), float(q.max()), {"probes": probes.size}
    )


def random_test_vectors(grid, count=N_RANDOM, seed=0, modes=8):
    """Band-limited random vectors ``sum_{|k| <= modes} c_k exp(2 pi i k t / a)``."""
    rng = np.random.default_rng(seed)
    k = np.arange(-modes, modes + 1)
    E = np.exp(2j * np.pi * np.outer(grid.nodes, k) / grid.a)
    c = rng.standard_normal((count, k.size)) + 1j * rng.standard_normal((count, k.size))
    return c @ E.T


class _LineData:
    """Quasi-exponentials, ``phi`` and ``delta`` sampled on a real window."""

    def __init__(self, model, spec, R, m):
        self.x = np.linspace(-R, R, m)
        x = self.x
        w = model.grid.weights
        self.G = model.quasi_exponentials(x, "g_side")
        self.F = model.quasi_exponentials(-x, "f_star_side")
        self.phi = model.phi_many(x)
        self.gn = np.sqrt(np.sum(w * np.abs(self.G) ** 2, axis=1))
        self.fn = np.sqrt(np.sum(w * np.abs(self.F) ** 2, axis=1))
        d = spec.distance(x.astype(complex))
        self.delta = d / (1.0 + d)


def _strip_points(spec, R, c, nx=401, ny=9):
    x = np.linspace(-R, R, nx)
    y = np.linspace(-c, c, ny)
    Z = (x[:, None] + 1j * y[None, :]).ravel()
    return Z[spec.distance(Z) > 1e-6]


def _L_norms(model, Z):
    w = model.grid.weights
    G = model.quasi_exponentials(Z, "g_side")
    F = model.quasi_exponentials(-np.conj(Z), "f_star_side")
    phi = model.phi_many(Z)
    gn = np.sqrt(np.sum(w * np.abs(G) ** 2, axis=1))
    fn = np.sqrt(np.sum(w * np.abs(F) ** 2, axis=1))
    return gn * fn / np.abs(phi)


def est_A_integral(spec, R, m=20001, count=10):
    """``sup_k int_{-R}^{R} delta^2(x) / |lambda_k - x|^2 dx`` over the first zeros."""
    x = np.linspace(-R, R, m)
    d = spec.distance(x.astype(complex))
    delta2 = (d / (1.0 + d)) ** 2
    vals = [np.trapezoid(delta2 / np.abs(lk - x) ** 2, x) for lk in spec.zeros[:count]]
    return float(max(vals)) if vals else 0.0


def estimate_suite(model, spec, family, R, c=1.0, m=2001, seed=0, n_random=N_RANDOM):
    """Numerical versions of the weighted resolvent estimates.

    Strip and line checks are restricted to ``|Re z| <= R_eff`` with
    ``R_eff = min(R, half the spectrum window) / 1`` so that the nearest
    zero of every probe is among the computed ones.
    """
    x0, x1 = spec.window[0], spec.window[1]
    R_eff = min(R, 0.5 * min(abs(x0), abs(x1))) if x0 < 0 < x1 else R
    reports = []

    Z = _strip_points(spec, R_eff, c)
    Ln = _L_norms(model, Z)
    dZ = spec.distance(Z)
    band = Ln * dZ / (1.0 + dZ)
    reports.append(
        EstimateReport("est_M", "double-sided estimate of L(z)", float(band.min()), float(band.max()),
                       {"c": c, "R": R_eff, "points": int(Z.size)})
    )

    Zb = np.concatenate([Z, (np.linspace(-R_eff, R_eff, 41)[:, None] + 1j * np.array([2, 4, -2, -4])).ravel()])
    Zb = Zb[spec.distance(Zb) > 1e-6]
    Lb = _L_norms(model, Zb)
    reports.append(
        EstimateReport("M_below", "lower bound of L(z)", float(Lb.min()), float(Lb.max()),
                       {"points": int(Zb.size)})
    )

    line = _LineData(model, spec, R_eff, m)
    ginv = line.delta * line.fn * line.gn / np.abs(line.phi)
    reports.append(
        EstimateReport("est_ginv", "1/||g|| two-sided", float(ginv.min()), float(ginv.max()),
                       {"R": R_eff})
    )
    ratio_W = (np.abs(line.phi) ** 2 / (line.gn**2 * line.delta**2)) / line.fn**2
    reports.append(
        EstimateReport("W_over_w_star", "W^2 comparable to w_*^2", float(ratio_W.min()), float(ratio_W.max()),
                       {"R": R_eff})
    )

    estA_R = est_A_integral(spec, R_eff)
    estA_2R = est_A_integral(spec, 2 * R_eff)
    reports.append(
        EstimateReport("est_A", "sup_k int delta^2 / |lambda_k - x|^2", estA_R, estA_2R,
                       {"R": R_eff, "drift": abs(estA_2R - estA_R) / estA_R if estA_R else 0.0})
    )

    H = random_test_vectors(model.grid, n_random, seed)
    w = model.grid.weights
    hn2 = np.sum(w * np.abs(H) ** 2, axis=1)
    ip_f = (H * w) @ line.F.conj().T  # (h, f_*(x_*))
    ip_g = (H * w) @ line.G.conj().T  # (h, g(x))
    pref = line.delta**2 / np.abs(line.phi) ** 2
    main1 = np.trapezoid(pref * line.gn**2 * np.abs(ip_f) ** 2, line.x, axis=1) / hn2
    main2 = np.trapezoid(pref * line.fn**2 * np.abs(ip_g) ** 2, line.x, axis=1) / hn2
    reports.append(EstimateReport("est_main1", "weighted L(x)h integral", float(main1.min()), float(main1.max()),
                                  {"seed": seed, "draws": n_random}))
    reports.append(EstimateReport("est_main2", "weighted L*(x)h integral", float(main2.min()), float(main2.max()),
                                  {"seed": seed, "draws": n_random}))

    res = []
    BT = model.B.matrix.T
    for h, ipf in zip(H, ip_f):
        U = model.B.solver.solve_many(line.x, h) @ BT
        RA = U + (ipf / line.phi)[:, None] * line.G
        nr2 = np.sum(w * np.abs(RA) ** 2, axis=1)
        res.append(np.trapezoid(nr2 * line.delta**2, line.x))
    res = np.array(res) / hn2
    reports.append(EstimateReport("res_est", "weighted resolvent integral", float(res.min()), float(res.max()),
                                  {"seed": seed, "draws": n_random}))

    if len(family):
        inside = np.abs(line.x) <= 0.5 * R_eff
        xs = line.x[inside][::10]
        phk = _phi_k(model.phi_many(xs), xs, family.lambdas, family.phi_prime)
        gsum = np.sum(np.abs(phk) ** 2 * family.g_norms[None, :] ** 2, axis=1)
        fsum = np.sum(np.abs(phk) ** 2 * family.f_norms[None, :] ** 2, axis=1)
        gq = line.gn[inside][::10] ** 2 / gsum
        fq = line.fn[inside][::10] ** 2 / fsum
        reports.append(EstimateReport("g_norm_expansion", "||g||^2 vs coefficient sum", float(gq.min()), float(gq.max())))
        reports.append(EstimateReport("f_norm_expansion", "||f_*||^2 vs coefficient sum", float(fq.min()), float(fq.max())))
    return reports


def _phi_k(phi, points, lambdas, phi_prime):
    """``phi_k(p) = phi(p) / ((p - lambda_k) phi'(lambda_k))`` as a matrix."""
    return phi[:, None] / ((points[:, None] - lambdas[None, :]) * phi_prime[None, :])


def expansion_residual(family, target, point, N):
    """Relative residual of the truncated eigen-expansion at ``point``.

    ``g_at_lambda``: ``g(p) - sum_{k<N} phi_k(p) g(lambda_k)``;
    ``f_star_at_mu``: ``f_*(p_*) - sum_{k<N} conj(phi_k(p)) f_*(lambda_k*)``.
    """
    point = complex(point)
    if len(family.spec) and family.spec.distance(point) < 1e-12:
        raise AtSpectrum("expansion point lies on the spectrum")
    model = family.model
    N = min(int(N), len(family))
    phi = model.phi(point)
    coef = _phi_k(np.array([phi]), np.array([point]), family.lambdas[:N], family.phi_prime[:N])[0]
    if target == "g_at_lambda":
        exact = model.quasi_exponential(point, "g_side").values
        approx = coef @ family.g_vectors[:N]
    elif target == "f_star_at_mu":
        exact = model.quasi_exponential(-np.conj(point), "f_star_side").values
        approx = np.conj(coef) @ family.f_vectors[:N]
    else:
        raise ValueError(f"unknown target {target!r}")
    return model.grid.norm(exact - approx) / model.grid.norm(exact)
