"""Reproducing kernel Hilbert spaces of the prior processes.

Conventions: ``f^(lam) = (2 pi)^{-1} int exp(i t lam) f(t) dt`` and the
rescaled spectral measure ``mu_c(B) = mu(cB)`` has density
``c * phihat(c lam)``.  For ``h in L2(mu_c)`` the transform
``(F_c h)(t) = int exp(-i t lam) h(lam) dmu_c(lam)`` is an RKHS element with
``||F_c h||^2 = int |h|^2 dmu_c``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Callable, Iterable, Optional, Sequence

import numpy as np

from .processes import (
    GaussianPrior,
    RescaledStationary,
    StationaryKernel,
    check_grid,
    default_grid,
)

QUAD_FLOOR = -1e-10


@dataclass
class GridFunction:
    """Values of a function on a grid, optionally with an RKHS norm bound."""

    grid: np.ndarray
    values: np.ndarray
    norm_bound: Optional[float] = None
    sup_error: Optional[float] = None
    bandwidth: Optional[float] = None
    norm_terms: Optional[tuple] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError("grid and values must have the same shape")

    def sup_distance(self, other) -> float:
        other_values = other.values if isinstance(other, GridFunction) else np.asarray(other)
        return float(np.max(np.abs(self.values - other_values)))


# --------------------------------------------------------------------------
# finite kernel-section elements


def _quadratic_form_norm(cov: np.ndarray, coeffs: np.ndarray) -> float:
    q = float(coeffs @ cov @ coeffs)
    if q < QUAD_FLOOR:
        raise ArithmeticError(f"negative quadratic form {q:.3e}; covariance is not PSD")
    return math.sqrt(max(q, 0.0))


def rkhs_norm_finite(prior: GaussianPrior, points, coeffs) -> float:
    """RKHS norm of ``sum_i coeffs[i] * K(points[i], .)``."""
    points = np.asarray(points, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if points.shape != coeffs.shape or points.ndim != 1:
        raise ValueError("points and coeffs must be 1-d arrays of equal length")
    if np.any(points < 0) or np.any(points > 1):
        raise ValueError("points must lie in [0, 1]")
    cov = prior.covariance(points[:, None], points[None, :])
    return _quadratic_form_norm(0.5 * (cov + cov.T), coeffs)


@dataclass
class KernelSections:
    """``t -> sum_i coeffs[i] K(points[i], t)``."""

    prior: GaussianPrior
    points: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.points.shape != self.coeffs.shape:
            raise ValueError("points and coeffs must have equal length")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.prior.covariance(t[..., None], self.points) @ self.coeffs

    def derivative(self, t, order: int):
        if not isinstance(self.prior, RescaledStationary):
            raise TypeError("derivatives are implemented for stationary priors")
        c = self.prior.c
        t = np.asarray(t, dtype=float)
        x = (t[..., None] - self.points) / c
        return self.prior.kernel.derivative(x, order) @ self.coeffs / c**order

    def norm(self) -> float:
        return rkhs_norm_finite(self.prior, self.points, self.coeffs)

    def inner(self, other: "KernelSections") -> float:
        cross = self.prior.covariance(self.points[:, None], other.points[None, :])
        return float(self.coeffs @ cross @ other.coeffs)

    def normalized(self) -> "KernelSections":
        nrm = self.norm()
        if nrm == 0:
            return self
        return KernelSections(self.prior, self.points, self.coeffs / nrm)

    def on_grid(self, grid=None) -> GridFunction:
        grid = default_grid() if grid is None else check_grid(grid)
        return GridFunction(grid, self(grid), self.norm())


# --------------------------------------------------------------------------
# spectral transforms


def _panel_rule(lo: float, hi: float, panels: int, order: int = 16):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def spectral_transform(
    prior: RescaledStationary,
    h: Callable[[np.ndarray], np.ndarray],
    grid=None,
    tol: float = 1e-8,
    max_panels: int = 2**14,
) -> GridFunction:
    """Real part of ``F_c h`` on ``grid`` with ``norm_bound = ||h||_{L2(mu_c)}``.

    Composite Gauss-Legendre on ``[-L, L]`` where the ``mu_c`` tail mass
    beyond ``L`` is below 1e-12; the panel count doubles until two successive
    evaluations agree to ``tol``.
    """
    if not isinstance(prior, RescaledStationary):
        raise TypeError("spectral_transform needs a RescaledStationary prior")
    grid = default_grid() if grid is None else check_grid(grid)
    c = prior.c
    spectral = prior.kernel.spectral
    radius = spectral.tail_radius(1e-12) / c

    def evaluate(panels):
        lam, wts = _panel_rule(-radius, radius, panels)
        dens = c * spectral.density(c * lam)
        hv = np.asarray(h(lam), dtype=complex)
        weighted = wts * hv * dens
        vals = np.exp(-1j * np.outer(grid, lam)) @ weighted
        norm_sq = float(np.sum(wts * np.abs(hv) ** 2 * dens))
        return vals, norm_sq

    panels = 8
    prev, prev_norm = evaluate(panels)
    while True:
        panels *= 2
        vals, norm_sq = evaluate(panels)
        if np.max(np.abs(vals - prev)) <= tol and abs(norm_sq - prev_norm) <= tol * max(1.0, norm_sq):
            break
        if panels >= max_panels or not np.all(np.isfinite(vals)):
            raise ArithmeticError("spectral transform quadrature did not converge")
        prev, prev_norm = vals, norm_sq
    return GridFunction(grid, vals.real, math.sqrt(norm_sq))


# --------------------------------------------------------------------------
# the smoothing kernel psi


def smooth_step(x):
    """C-infinity step: 1 for ``x <= 0``, 0 for ``x >= 1``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x < 1.0, np.exp(-1.0 / np.maximum(1.0 - x, 1e-300)), 0.0)
        b = np.where(x > 0.0, np.exp(-1.0 / np.maximum(x, 1e-300)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class SmoothingKernelPsi:
    """Higher-order kernel ``psi`` with ``psihat = bump / (2 pi)``.

    ``bump`` is 1 on ``|lam| <= plateau`` and 0 on ``|lam| >= support`` with a
    C-infinity transition, so every moment of ``psi`` of order >= 1 vanishes
    and ``int psi = 1``.
    """

    fourier_plateau_radius: float = 1.0
    fourier_support_radius: float = 2.0

    def __post_init__(self):
        if not 0 < self.fourier_plateau_radius < self.fourier_support_radius:
            raise ValueError("need 0 < plateau < support")

    def bump(self, lam):
        p, s = self.fourier_plateau_radius, self.fourier_support_radius
        return smooth_step((np.abs(np.asarray(lam, dtype=float)) - p) / (s - p))

    def psi_hat(self, lam):
        return self.bump(lam) / (2.0 * math.pi)

    @cached_property
    def _taper_rule(self):
        return _panel_rule(self.fourier_plateau_radius, self.fourier_support_radius, 64, 32)

    def psi(self, t):
        """``psi(t) = int exp(-i t lam) psihat(lam) dlam`` by quadrature."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        p = self.fourier_plateau_radius
        lam, wts = self._taper_rule
        taper = wts * self.bump(lam)
        out = np.empty_like(t)
        for start in range(0, t.size, 4096):
            chunk = t[start:start + 4096]
            plateau = np.where(chunk == 0.0, p, np.sin(p * chunk) / np.where(chunk == 0.0, 1.0, chunk))
            out[start:start + 4096] = (plateau + np.cos(np.outer(chunk, lam)) @ taper) / math.pi
        return out

    def moment(self, order: int, truncation: float = 3000.0, dps: int = 50) -> float:
        """``int_{-T}^{T} t^order psi(t) dt`` in extended precision.

        The t-integral is done in closed form and the remaining frequency
        integral by mpmath quadrature; ``psi`` decays roughly like
        ``exp(-1.5 sqrt|t|)``, so ``T = 3000`` leaves a tail far below 1e-6
        for orders up to 6.
        """
        import mpmath as mp

        if order % 2 == 1:
            return 0.0
        with mp.workdps(dps):
            T = mp.mpf(truncation)
            p = mp.mpf(self.fourier_plateau_radius)
            s = mp.mpf(self.fourier_support_radius)

            def power_exp_integral(n, lam):
                # int_0^T t^n exp(i lam t) dt by integration by parts
                e = mp.expj(lam * T)
                acc = (e - 1) / (1j * lam)
                for j in range(1, n + 1):
                    acc = (T**j * e - j * acc) / (1j * lam)
                return acc

            if order == 0:
                plateau = mp.si(p * T)
            else:
                plateau = mp.im(power_exp_integral(order - 1, p))

            def step(x):
                if x <= 0:
                    return mp.mpf(1)
                if x >= 1:
                    return mp.mpf(0)
                a, b = mp.exp(-1 / (1 - x)), mp.exp(-1 / x)
                return a / (a + b)

            def integrand(lam):
                return step((lam - p) / (s - p)) * mp.re(power_exp_integral(order, lam))

            # fixed 12-point Gauss-Legendre per half-period subinterval
            nodes = mp.calculus.quadrature.GaussLegendre(mp.mp).calc_nodes(3, mp.mp.prec)
            n_sub = int(math.ceil(float((s - p) * T / mp.pi))) + 1
            width = (s - p) / n_sub
            taper = mp.mpf(0)
            for i in range(n_sub):
                mid = p + width * (i + mp.mpf(0.5))
                taper += sum(wt * integrand(mid + width / 2 * x) for x, wt in nodes) * width / 2
            return float(2 / mp.pi * (plateau + taper))


DEFAULT_PSI = SmoothingKernelPsi()


# --------------------------------------------------------------------------
# extension of a truth to the line and its Fourier transform

LINE_BOX = 64.0
LINE_POINTS = 2**19
LOWPASS_CHUNK = 2**21


def line_cutoff(t):
    """Smooth cutoff: 1 on [-0.5, 1.5], 0 outside [-1, 2]."""
    t = np.asarray(t, dtype=float)
    return smooth_step((-0.5 - t) / 0.5) * smooth_step((t - 1.5) / 0.5)


def reflect_into_unit(t):
    """Fold ``t`` into [0, 1] by reflection across 0 and 1."""
    t = np.mod(np.asarray(t, dtype=float), 2.0)
    return np.where(t > 1.0, 2.0 - t, t)


def extend_to_line(w0: Callable) -> Callable:
    """Compactly supported extension of ``w0`` from [0, 1] to the line.

    Functions flagged ``native_line`` are evaluated directly; others are
    reflected across 0 and 1 first.  Both are multiplied by
    :func:`line_cutoff`.
    """
    if getattr(w0, "native_line", False):
        return lambda t: w0(t) * line_cutoff(t)
    return lambda t: w0(reflect_into_unit(t)) * line_cutoff(t)


@dataclass
class LineSpectrum:
    """Fourier transform of the extended truth on the frequency lattice
    ``2 pi k / LINE_BOX``, obtained by FFT on a periodic box."""

    lam: np.ndarray
    what: np.ndarray
    dlam: float

    @classmethod
    def of(cls, w0: Callable, box: float = LINE_BOX, points: int = LINE_POINTS) -> "LineSpectrum":
        w_ext = extend_to_line(w0)
        dx = box / points
        x0 = 0.5 - box / 2.0
        x = x0 + dx * np.arange(points)
        vals = np.asarray(w_ext(x), dtype=float)
        lam = 2.0 * math.pi * np.fft.fftfreq(points, d=dx)
        what = dx * points * np.fft.ifft(vals) * np.exp(1j * lam * x0) / (2.0 * math.pi)
        order = np.argsort(lam)
        return cls(lam[order], what[order], 2.0 * math.pi / box)

    @property
    def nyquist(self) -> float:
        return float(-self.lam[0])

    def band(self, radius: float):
        if radius >= self.nyquist:
            raise ArithmeticError("bandwidth too small for the line sampling")
        sel = np.abs(self.lam) < radius
        return self.lam[sel], self.what[sel]


def lowpass(spectrum: LineSpectrum, bandwidth: float, grid, orders: Sequence[int] = (0,),
            psi: SmoothingKernelPsi = DEFAULT_PSI) -> list[np.ndarray]:
    """Derivatives of ``bandwidth^{-1} psi_bandwidth * w`` on ``grid``.

    In frequency this multiplies ``w^`` by ``bump(bandwidth * lam)``.
    """
    lam, what = spectrum.band(psi.fourier_support_radius / bandwidth)
    coef = spectrum.dlam * what * psi.bump(bandwidth * lam)
    grid = np.asarray(grid, dtype=float)
    out = [np.zeros(grid.size) for _ in orders]
    step = max(1, LOWPASS_CHUNK // max(grid.size, 1))
    for start in range(0, lam.size, step):
        sl = slice(start, start + step)
        phase = np.exp(-1j * np.outer(grid, lam[sl]))
        for acc, m in zip(out, orders):
            acc += np.real(phase @ (coef[sl] * (-1j * lam[sl]) ** m))
    return out


def _stationary_norm_sq(spectrum: LineSpectrum, bandwidth: float, prior: RescaledStationary,
                        psi: SmoothingKernelPsi) -> float:
    # || lowpass ||^2 = int |w^|^2 bump(b lam)^2 / (c phihat(c lam)) dlam
    lam, what = spectrum.band(psi.fourier_support_radius / bandwidth)
    c = prior.c
    log_dens = prior.kernel.spectral.log_density(c * lam) + math.log(c)
    if np.min(log_dens) < -700.0:
        raise ArithmeticError("spectral density underflows on the support of psihat(b .)")
    weight = psi.bump(bandwidth * lam) ** 2 * np.exp(-log_dens)
    return float(spectrum.dlam * np.sum(np.abs(what) ** 2 * weight))


def holder_approx(w0, beta: float, c: float, kernel: StationaryKernel, grid=None,
                  psi: SmoothingKernelPsi = DEFAULT_PSI, spectrum: Optional[LineSpectrum] = None):
    """RKHS approximation ``c^{-1} psi_c * w`` of a Holder function.

    Returns ``(approx, sup_error, rkhs_norm_sq)`` where the norm is
    ``c^{-1} int |w^(lam)|^2 bump(c lam)^2 / phihat(c lam) dlam``
    (equivalently ``(2 pi)^2 c^{-1} int |w^|^2 |psihat(c .)|^2 / phihat(c .)``).
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    grid = default_grid() if grid is None else check_grid(grid)
    spectrum = LineSpectrum.of(w0) if spectrum is None else spectrum
    prior = RescaledStationary(kernel, c)
    (values,) = lowpass(spectrum, c, grid, (0,), psi)
    norm_sq = _stationary_norm_sq(spectrum, c, prior, psi)
    if not np.all(np.isfinite(values)) or not math.isfinite(norm_sq):
        raise ArithmeticError("holder_approx quadrature diverged")
    sup_error = float(np.max(np.abs(values - np.asarray(w0(grid), dtype=float))))
    approx = GridFunction(grid, values, math.sqrt(norm_sq), sup_error, c)
    return approx, sup_error, norm_sq


# --------------------------------------------------------------------------
# Sobolev RKHS of the modified integrated Brownian motion


def sobolev_norm_terms(k: int, c: float, a: float, derivatives: Sequence, grid) -> tuple:
    """The two summands ``(c^{2k+1} ||h^{(k+1)}||_2^2, a sum_i h^{(i)}(0)^2)``."""
    if len(derivatives) < k + 2:
        raise ValueError(f"need derivatives of orders 0..{k + 1}")
    grid = check_grid(grid)
    if grid[0] != 0.0:
        raise ValueError("grid must start at 0 to read off h^(i)(0)")
    top = np.asarray(derivatives[k + 1], dtype=float)
    smooth_part = c ** (2 * k + 1) * float(np.trapezoid(top**2, grid))
    boundary = sum(float(np.asarray(derivatives[i], dtype=float)[0]) ** 2 for i in range(k + 1))
    # a = inf encodes the pure integrated Brownian motion
    poly_part = 0.0 if boundary == 0.0 else a * boundary
    return smooth_part, poly_part


def sobolev_rkhs_norm(k: int, c: float, a: float, derivatives: Sequence, grid) -> float:
    """``sqrt(c^{2k+1} ||h^{(k+1)}||_2^2 + a sum_{i<=k} h^{(i)}(0)^2)``.

    ``derivatives[i]`` holds ``h^{(i)}`` on ``grid`` (which must start at 0)
    for ``i = 0..k+1``; the L2 norm uses the trapezoid rule.
    """
    return math.sqrt(sum(sobolev_norm_terms(k, c, a, derivatives, grid)))


SOBOLEV_QUAD_POINTS = 4097


def _ibm_element(spectrum: LineSpectrum, k: int, c: float, a: float, sigma: float, grid,
                 w0, psi: SmoothingKernelPsi):
    fine = np.linspace(0.0, 1.0, SOBOLEV_QUAD_POINTS)
    derivs = lowpass(spectrum, sigma, fine, range(k + 2), psi)
    terms = sobolev_norm_terms(k, c, a, derivs, fine)
    (values,) = lowpass(spectrum, sigma, grid, (0,), psi)
    sup_error = float(np.max(np.abs(values - np.asarray(w0(grid), dtype=float))))
    return values, sup_error, terms


def ibm_approx(w0, beta: float, k: int, c: float, a: float, epsilon: float, grid=None,
               psi: SmoothingKernelPsi = DEFAULT_PSI, spectrum: Optional[LineSpectrum] = None):
    """Smoothed truth ``w * psi_sigma`` with ``sigma = epsilon^{1/beta}``.

    ``psi`` integrates to one and has vanishing moments of every order, which
    covers orders ``1..k``.  Returns ``(approx, rkhs_norm_sq)``; the approx
    carries its sup error and the two norm summands.
    """
    if not 0 < beta <= k + 1:
        raise ValueError("need 0 < beta <= k + 1")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    grid = default_grid() if grid is None else check_grid(grid)
    spectrum = LineSpectrum.of(w0) if spectrum is None else spectrum
    sigma = epsilon ** (1.0 / beta)
    values, sup_error, terms = _ibm_element(spectrum, k, c, a, sigma, grid, w0, psi)
    norm_sq = sum(terms)
    approx = GridFunction(grid, values, math.sqrt(norm_sq), sup_error, sigma, terms)
    return approx, norm_sq


# --------------------------------------------------------------------------
# entropy net of piecewise polynomials

MAX_NET_ORDER = 60


@dataclass(frozen=True)
class EntropyNet:
    """Piecewise-polynomial net over the RKHS unit ball.

    Piece ``i`` covers ``((i-1) d, i d]`` and carries the polynomial
    ``sum_{j<k} gamma_ij (t - i d)^j / j!`` with ``gamma_ij`` on the lattice
    ``eta_j Z`` intersected with ``[-radii[j], radii[j]]``.
    """

    c: float
    epsilon: float
    d: float
    k_order: int
    eta: tuple
    radii: tuple
    n_pieces: int
    log_cardinality: float

    @property
    def levels(self) -> tuple:
        """Number of lattice points per coefficient on each side of zero."""
        return tuple(int(math.floor(r / e)) for r, e in zip(self.radii, self.eta))


def entropy_net(prior: RescaledStationary, epsilon: float) -> EntropyNet:
    if not isinstance(prior, RescaledStationary):
        raise TypeError("entropy_net needs a RescaledStationary prior")
    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    spectral = prior.kernel.spectral
    c = prior.c
    d = spectral.delta * c / 4.0
    k = None
    for order in range(1, MAX_NET_ORDER + 1):
        remainder = math.sqrt(spectral.absolute_moment(2 * order)) * (d / c) ** order / math.factorial(order)
        if remainder <= epsilon:
            k = order
            break
    if k is None:
        raise ValueError("no polynomial order <= 60 meets the remainder bound")
    eta = tuple(epsilon * math.factorial(j) / (d**j * k) for j in range(k))
    radii = tuple(math.sqrt(spectral.absolute_moment(2 * j)) / c**j for j in range(k))
    n_pieces = math.ceil(1.0 / d - 1e-12)
    per_piece = sum(math.log(2 * math.floor(r / e) + 1) for r, e in zip(radii, eta))
    return EntropyNet(c, epsilon, d, k, eta, radii, n_pieces, n_pieces * per_piece)


def _piece_polynomial(gamma: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    powers = np.array([offsets**j / math.factorial(j) for j in range(gamma.shape[-1])])
    return gamma @ powers


def net_distance(net: EntropyNet, element: KernelSections, grid=None) -> float:
    """Grid sup-distance from ``element`` to its nearest net member.

    Each piece is matched independently: the lattice-rounded Taylor
    coefficients at the right end point are tried first, then the ``3^k``
    neighbouring lattice points.
    """
    grid = default_grid() if grid is None else check_grid(grid)
    values = element(grid)
    eta = np.array(net.eta)
    levels = np.array(net.levels)
    worst = 0.0
    piece_of = np.clip(np.ceil(grid / net.d - 1e-12).astype(int), 1, net.n_pieces)
    for i in range(1, net.n_pieces + 1):
        mask = piece_of == i
        if not np.any(mask):
            continue
        anchor = i * net.d
        offsets = grid[mask] - anchor
        target = values[mask]
        taylor = np.array([element.derivative(anchor, j) for j in range(net.k_order)])
        idx = np.clip(np.rint(taylor / eta), -levels, levels)
        best = np.max(np.abs(_piece_polynomial(idx * eta, offsets) - target))
        if best > 2 * net.epsilon:
            shifts = np.array(np.meshgrid(*[[-1, 0, 1]] * net.k_order)).reshape(net.k_order, -1).T
            cand = np.clip(idx + shifts, -levels, levels) * eta
            errs = np.max(np.abs(_piece_polynomial(cand, offsets) - target), axis=1)
            best = min(best, float(errs.min()))
        worst = max(worst, float(best))
    return worst


def net_covers(net: EntropyNet, element: KernelSections, grid=None) -> bool:
    """True iff a net member lies within ``2 epsilon`` of ``element`` on the grid."""
    return net_distance(net, element, grid) <= 2 * net.epsilon


# --------------------------------------------------------------------------
# concentration function


@dataclass
class ConcentrationEstimate:
    """Upper estimate of the concentration function at ``epsilon``.

    The infimum over ``||h - w0|| <= epsilon`` is replaced by the norm of a
    constructed witness, so ``value`` bounds the concentration function from
    above (up to Monte Carlo error in the small-ball term).
    """

    epsilon: float
    approx_term: float
    smallball_term: float
    bandwidth: float
    sup_error: float

    @property
    def value(self) -> float:
        return self.approx_term + self.smallball_term


BANDWIDTH_LADDER = 2.0 ** (-np.arange(0, 56) / 4.0)


class InfeasibleApproximation(ArithmeticError):
    pass


def concentration_estimate(prior: GaussianPrior, w0, epsilon: float, smallball, grid=None,
                           psi: SmoothingKernelPsi = DEFAULT_PSI) -> ConcentrationEstimate:
    """Approximation cost of ``w0`` at resolution ``epsilon`` plus the
    small-ball exponent of ``smallball``.

    The witness is the low-pass approximation of the largest bandwidth on a
    geometric ladder whose grid sup-error is at most ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if abs(smallball.epsilon - epsilon) > 1e-12 * max(1.0, epsilon):
        raise ValueError("small-ball estimate was computed at a different epsilon")
    grid = default_grid() if grid is None else check_grid(grid)
    truth = np.asarray(w0(grid), dtype=float)
    if np.max(np.abs(truth)) == 0.0:
        return ConcentrationEstimate(epsilon, 0.0, smallball.neg_log_prob, math.inf, 0.0)
    spectrum = LineSpectrum.of(w0)
    for b in BANDWIDTH_LADDER:
        if psi.fourier_support_radius / b >= spectrum.nyquist:
            break
        if isinstance(prior, RescaledStationary):
            (values,) = lowpass(spectrum, b, grid, (0,), psi)
            err = float(np.max(np.abs(values - truth)))
            if err <= epsilon:
                try:
                    norm_sq = _stationary_norm_sq(spectrum, b, prior, psi)
                except ArithmeticError as exc:
                    raise InfeasibleApproximation(f"RKHS norm overflows at sup error {epsilon}") from exc
                return ConcentrationEstimate(epsilon, norm_sq, smallball.neg_log_prob, float(b), err)
        else:
            (values,) = lowpass(spectrum, b, grid, (0,), psi)
            err = float(np.max(np.abs(values - truth)))
            if err <= epsilon:
                _, err, terms = _ibm_element(spectrum, prior.k, prior.c, prior.a, b, grid, w0, psi)
                norm_sq = sum(terms)
                return ConcentrationEstimate(epsilon, norm_sq, smallball.neg_log_prob, float(b), err)
    raise InfeasibleApproximation(f"no bandwidth reaches sup error {epsilon}")


# --------------------------------------------------------------------------
# serialisation

ENTROPY_COLUMNS = ["c", "epsilon", "d", "k_order", "log_cardinality"]
APPROX_COLUMNS = ["c", "sup_error", "rkhs_norm_sq"]
CONCENTRATION_COLUMNS = ["epsilon", "approx_term", "smallball_term", "total", "bandwidth", "sup_error"]


def _writer(fh: IO[str]):
    return csv.writer(fh, lineterminator="\n")


def write_entropy_csv(nets: Iterable[EntropyNet], fh: IO[str]) -> None:
    w = _writer(fh)
    w.writerow(ENTROPY_COLUMNS)
    for n in nets:
        w.writerow([repr(float(n.c)), repr(float(n.epsilon)), repr(float(n.d)), n.k_order,
                    repr(float(n.log_cardinality))])


def write_approx_csv(rows: Iterable[tuple], fh: IO[str]) -> None:
    """Rows of ``(c, sup_error, rkhs_norm_sq)``."""
    w = _writer(fh)
    w.writerow(APPROX_COLUMNS)
    for c, err, nrm in rows:
        w.writerow([repr(float(c)), repr(float(err)), repr(float(nrm))])


def write_concentration_csv(estimates: Iterable[ConcentrationEstimate], fh: IO[str]) -> None:
    w = _writer(fh)
    w.writerow(CONCENTRATION_COLUMNS)
    for e in estimates:
        w.writerow([repr(float(e.epsilon)), repr(float(e.approx_term)), repr(float(e.smallball_term)),
                    repr(float(e.value)), repr(float(e.bandwidth)), repr(float(e.sup_error))])
