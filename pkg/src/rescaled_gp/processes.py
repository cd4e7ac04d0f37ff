"""Prior processes: stationary kernels via spectral measures, the modified
integrated Brownian motion, time rescaling and exact grid sampling.

Two prior families are supported:

* ``RescaledStationary``: ``t -> W_{t/c}`` for a centred stationary process with
  covariance ``phi(s - t)`` and spectral measure ``mu``
  (``phi(t) = int exp(-i t lam) dmu(lam)``).
* ``ModifiedIbm``: ``V_t = (I^k B)_{t/c} + a^{-1/2} sum_i Z_i t^i / i!``.

Random numbers come from the counter-based Philox4x64-10 generator keyed by
``(stream << 64) | seed``, so a ``(seed, stream)`` pair pins a sample stream.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import IO, Iterable, Union

import numpy as np
from scipy import integrate, special

DEFAULT_GRID_SIZE = 256
IBM_MAX_ORDER = 4

JITTER_START = 1e-12
JITTER_MAX = 1e-6


class CovarianceError(RuntimeError):
    """Raised when a covariance matrix cannot be factorised at maximal jitter."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``(stream << 64) | seed``."""
    if seed < 0 or seed >= 2**64 or stream < 0:
        raise ValueError("seed must lie in [0, 2**64) and stream must be >= 0")
    return np.random.Generator(np.random.Philox(key=(int(stream) << 64) | int(seed)))


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a non-empty 1-d array")
    if not np.all(np.isfinite(grid)) or grid[0] < 0.0 or grid[-1] > 1.0:
        raise ValueError("grid points must lie in [0, 1]")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing")
    return grid


# --------------------------------------------------------------------------
# spectral measures and stationary kernels


class SpectralFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


@dataclass(frozen=True)
class SpectralMeasure:
    """Symmetric spectral measure with a Lebesgue density.

    ``delta`` is an exponent for which ``int exp(delta |lam|) dmu`` is finite.
    The Gaussian family (density of N(0, 2)) pairs with ``exp(-t^2)``; the
    Laplace family (``exp(-|lam|) / 2``) pairs with ``1 / (1 + t^2)``.
    """

    family: SpectralFamily
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "family", SpectralFamily(self.family))
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.family is SpectralFamily.LAPLACE and self.delta >= 1.0:
            raise ValueError("the Laplace spectral measure needs delta < 1")

    @classmethod
    def gaussian(cls, delta: float = 1.0) -> "SpectralMeasure":
        return cls(SpectralFamily.GAUSSIAN, delta)

    @classmethod
    def laplace(cls, delta: float = 0.5) -> "SpectralMeasure":
        return cls(SpectralFamily.LAPLACE, delta)

    def density(self, lam):
        lam = np.abs(np.asarray(lam, dtype=float))
        if self.family is SpectralFamily.GAUSSIAN:
            return np.exp(-0.25 * lam**2) / (2.0 * math.sqrt(math.pi))
        return 0.5 * np.exp(-lam)

    def log_density(self, lam):
        lam = np.abs(np.asarray(lam, dtype=float))
        if self.family is SpectralFamily.GAUSSIAN:
            return -0.25 * lam**2 - math.log(2.0 * math.sqrt(math.pi))
        return math.log(0.5) - lam

    def total_mass(self) -> float:
        return 1.0

    def tail_mass(self, radius: float) -> float:
        """Mass of ``{|lam| > radius}``."""
        if self.family is SpectralFamily.GAUSSIAN:
            return float(special.erfc(radius / 2.0))
        return math.exp(-radius)

    def tail_radius(self, tol: float = 1e-12) -> float:
        """Smallest radius whose tail mass is below ``tol``."""
        if self.family is SpectralFamily.GAUSSIAN:
            return 2.0 * float(special.erfcinv(tol))
        return -math.log(tol)

    def absolute_moment(self, order: int) -> float:
        """``int |lam|^order dmu`` by adaptive quadrature (rel. tol 1e-10)."""
        return _absolute_moment(self.family, int(order))

    def absolute_moment_exact(self, order: int) -> float:
        if self.family is SpectralFamily.GAUSSIAN:
            return 2.0**order * math.gamma((order + 1) / 2.0) / math.sqrt(math.pi)
        return math.gamma(order + 1.0)

    def exponential_moment(self) -> float:
        """``int exp(delta |lam|) dmu`` by quadrature."""
        val, _ = integrate.quad(
            lambda x: math.exp(self.delta * x + float(self.log_density(x))), 0.0, np.inf,
            epsrel=1e-10,
        )
        return 2.0 * val


@lru_cache(maxsize=None)
def _absolute_moment(family: SpectralFamily, order: int) -> float:
    measure = SpectralMeasure(family, 0.5)
    if order == 0:
        return measure.total_mass()
    # integrate the scaled integrand |lam|^p f(lam) / peak around its mode
    if family is SpectralFamily.GAUSSIAN:
        mode = math.sqrt(2.0 * order)
    else:
        mode = float(order)

    def log_integrand(x):
        return order * math.log(x) + float(measure.log_density(x)) if x > 0 else -np.inf

    log_peak = log_integrand(mode)
    f = lambda x: math.exp(log_integrand(x) - log_peak) if x > 0 else 0.0
    left, _ = integrate.quad(f, 0.0, mode, epsrel=1e-12, limit=200)
    right, _ = integrate.quad(f, mode, np.inf, epsrel=1e-12, limit=200)
    return 2.0 * (left + right) * math.exp(log_peak)


def spectral_density(measure: SpectralMeasure, lam):
    """Lebesgue density of the spectral measure at ``lam``."""
    return measure.density(lam)


@dataclass(frozen=True)
class StationaryKernel:
    """Covariance function ``phi`` determined by a spectral measure."""

    spectral: SpectralMeasure

    @classmethod
    def squared_exponential(cls, delta: float = 1.0) -> "StationaryKernel":
        return cls(SpectralMeasure.gaussian(delta))

    @classmethod
    def laplace_spectral(cls, delta: float = 0.5) -> "StationaryKernel":
        return cls(SpectralMeasure.laplace(delta))

    @property
    def name(self) -> str:
        if self.spectral.family is SpectralFamily.GAUSSIAN:
            return "squared_exponential"
        return "laplace_spectral"

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        if self.spectral.family is SpectralFamily.GAUSSIAN:
            return np.exp(-t * t)
        return 1.0 / (1.0 + t * t)

    def derivative(self, t, order: int):
        """``order``-th derivative of ``phi`` at ``t`` (closed form)."""
        t = np.asarray(t, dtype=float)
        if order == 0:
            return self.phi(t)
        if self.spectral.family is SpectralFamily.GAUSSIAN:
            # d^j/dt^j exp(-t^2) = (-1)^j H_j(t) exp(-t^2), physicists' Hermite
            coef = np.zeros(order + 1)
            coef[order] = 1.0
            return (-1.0) ** order * np.polynomial.hermite.hermval(t, coef) * np.exp(-t * t)
        # 1/(1+t^2) = Im(1/(t-i)); j-th derivative is Im((-1)^j j! (t-i)^{-j-1})
        z = (t - 1j) ** (-(order + 1))
        return np.imag((-1.0) ** order * math.factorial(order) * z)

    def phi_by_quadrature(self, t: float, tol: float = 1e-12) -> float:
        """``int exp(-i t lam) dmu(lam)`` by quadrature (real by symmetry)."""
        radius = self.spectral.tail_radius(tol)
        val, _ = integrate.quad(
            lambda lam: math.cos(t * lam) * float(self.spectral.density(lam)),
            0.0, radius, limit=400, epsabs=1e-13, epsrel=1e-12,
        )
        return 2.0 * val


def stationary_covariance(kernel: StationaryKernel, c: float, s, t):
    """``phi((s - t) / c)``."""
    if not c > 0:
        raise ValueError("c must be positive")
    return kernel.phi((np.asarray(s, dtype=float) - np.asarray(t, dtype=float)) / c)


# --------------------------------------------------------------------------
# integrated Brownian motion


def ibm_covariance(k: int, s, t):
    """Covariance of the k-fold integrated Brownian motion.

    ``E[(I^k B)_s (I^k B)_t] = int_0^{s^t} (s-u)^k (t-u)^k du / (k!)^2``.
    Closed forms for ``k <= 1``; for larger ``k`` the integrand is a
    polynomial of degree ``2k`` in ``u`` and ``k + 1`` Gauss-Legendre nodes
    integrate it exactly.
    """
    if not (isinstance(k, (int, np.integer)) and 0 <= k <= IBM_MAX_ORDER):
        raise ValueError(f"k must be an integer in [0, {IBM_MAX_ORDER}]")
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("ibm_covariance needs s, t >= 0")
    lo = np.minimum(s, t)
    if k == 0:
        return lo
    hi = np.maximum(s, t)
    if k == 1:
        return 0.5 * lo * lo * hi - lo**3 / 6.0
    nodes, weights = np.polynomial.legendre.leggauss(k + 1)
    out = np.zeros(lo.shape)
    for x, w in zip(nodes, weights):
        u = 0.5 * lo * (x + 1.0)
        out += w * ((s - u) * (t - u)) ** k
    return 0.5 * lo * out / math.factorial(k) ** 2


def ibm_covariance_quad(k: int, s: float, t: float) -> float:
    """Adaptive-quadrature reference for :func:`ibm_covariance`."""
    upper = min(s, t)
    val, _ = integrate.quad(lambda u: ((s - u) * (t - u)) ** k, 0.0, upper,
                            epsabs=1e-12, epsrel=1e-12)
    return val / math.factorial(k) ** 2


# --------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class RescaledStationary:
    """``t -> W_{t/c}`` for a stationary process with the given kernel."""

    kernel: StationaryKernel
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")

    @property
    def family(self) -> str:
        return self.kernel.name

    def covariance(self, s, t):
        return stationary_covariance(self.kernel, self.c, s, t)


@dataclass(frozen=True)
class ModifiedIbm:
    """k-fold integrated Brownian motion at time ``t/c`` plus an independent
    polynomial ``a^{-1/2} sum_{i<=k} Z_i t^i / i!``.

    ``a = inf`` drops the polynomial and leaves the pure integrated motion.
    """

    k: int
    c: float
    a: float

    def __post_init__(self):
        if not (isinstance(self.k, (int, np.integer)) and 0 <= self.k <= IBM_MAX_ORDER):
            raise ValueError(f"k must be an integer in [0, {IBM_MAX_ORDER}]")
        if not self.c > 0 or not self.a > 0:
            raise ValueError("c and a must be positive")

    family = "modified_ibm"

    def covariance(self, s, t):
        s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
        cov = ibm_covariance(self.k, s / self.c, t / self.c)
        if math.isinf(self.a):
            return cov
        st = s * t
        poly = sum(st**i / math.factorial(i) ** 2 for i in range(self.k + 1))
        return cov + poly / self.a


GaussianPrior = Union[RescaledStationary, ModifiedIbm]


def rescale(prior: GaussianPrior, c_new: float) -> GaussianPrior:
    """Same prior family with the time scale replaced by ``c_new``."""
    if not c_new > 0:
        raise ValueError("c_new must be positive")
    return dataclasses.replace(prior, c=float(c_new))


def prior_covariance_matrix(prior: GaussianPrior, grid) -> np.ndarray:
    grid = check_grid(grid)
    cov = prior.covariance(grid[:, None], grid[None, :])
    return 0.5 * (cov + cov.T)


def cholesky_with_jitter(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``cov + j * max(diag) * I``.

    ``j`` starts at 1e-12 and grows tenfold up to 1e-6; the relative jitter
    used is returned alongside the factor.
    """
    scale = float(np.max(np.diag(cov)))
    if not scale > 0:
        scale = 1.0
    eye = np.eye(cov.shape[0])
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CovarianceError("Cholesky failed at maximal jitter; covariance is not PSD")


@dataclass
class PathSample:
    grid: np.ndarray
    values: np.ndarray
    seed: int

    def __post_init__(self):
        self.grid = check_grid(self.grid)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("values and grid must have the same length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path values must be finite")


def draw_paths(factor: np.ndarray, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """``n_paths`` rows of ``factor @ z`` with ``z`` standard normal."""
    z = rng.standard_normal((n_paths, factor.shape[0]))
    return z @ factor.T


def sample_paths(prior: GaussianPrior, grid, n_paths: int, seed: int) -> list[PathSample]:
    """Independent zero-mean Gaussian draws on ``grid`` (deterministic in ``seed``)."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    grid = check_grid(grid)
    factor, _ = cholesky_with_jitter(prior_covariance_matrix(prior, grid))
    values = draw_paths(factor, n_paths, make_rng(seed))
    return [PathSample(grid, row, seed) for row in values]


def write_paths_csv(paths: Iterable[PathSample], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "value", "path_id"])
    for path_id, path in enumerate(paths):
        for t, v in zip(path.grid, path.values):
            writer.writerow([repr(float(t)), repr(float(v)), path_id])
