"""Ground-truth functions, scaling rules for the rescaling constant, the
posterior contraction harness and log-log rate fits."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .inference import (
    ClassificationData,
    ConjugateRegression,
    DensityModel,
    LinearInterpolator,
    McmcConfig,
    SUMMARY_COLUMNS,
    classification_posterior,
    density_posterior,
    empirical_norm,
    logistic,
)
from .processes import (
    GaussianPrior,
    ModifiedIbm,
    RescaledStationary,
    StationaryKernel,
    default_grid,
    make_rng,
)

NOISE_SD = 0.5
WEIERSTRASS_TERMS = 12
NORMALIZATION_POINTS = 2**15 + 1


class TruthFormula(str, enum.Enum):
    WEIERSTRASS = "weierstrass"
    POLY_SMOOTH = "poly_smooth"
    TRIG = "trig"


@dataclass(frozen=True)
class SmoothTruth:
    """Test function with a known smoothness exponent.

    ``weierstrass`` / ``poly_smooth``:
    ``sum_{j=1}^{J} 2^{-j alpha} cos(2^j pi t - floor(alpha) pi / 2)``, which for
    ``alpha >= 1`` is (up to constants) the ``floor(alpha)``-fold antiderivative
    of the Weierstrass-type sum of exponent ``alpha - floor(alpha)``.  It is
    1-periodic and defined on the whole line.  ``trig``: ``sin(2 pi t)`` on
    [0, 1], extended by reflection when an extension is needed.  All truths
    are scaled to ``sup |w| = amplitude``.
    """

    alpha: float
    formula: TruthFormula = TruthFormula.WEIERSTRASS
    amplitude: float = 1.0
    n_terms: int = WEIERSTRASS_TERMS

    def __post_init__(self):
        object.__setattr__(self, "formula", TruthFormula(self.formula))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def native_line(self) -> bool:
        return self.formula is not TruthFormula.TRIG

    def _raw(self, t):
        t = np.asarray(t, dtype=float)
        if self.formula is TruthFormula.TRIG:
            return np.sin(2 * math.pi * t)
        j = np.arange(1, self.n_terms + 1)
        phase = math.floor(self.alpha) * math.pi / 2
        return np.cos(np.multiply.outer(t, 2.0**j * math.pi) - phase) @ (2.0 ** (-j * self.alpha))

    def derivative(self, t, order: int):
        """Exact ``order``-th derivative of the (unextended) formula."""
        t = np.asarray(t, dtype=float)
        if self.amplitude == 0:
            return np.zeros(t.shape)
        shift = order * math.pi / 2
        if self.formula is TruthFormula.TRIG:
            raw = (2 * math.pi) ** order * np.sin(2 * math.pi * t + shift)
        else:
            j = np.arange(1, self.n_terms + 1)
            freq = 2.0**j * math.pi
            phase = math.floor(self.alpha) * math.pi / 2
            raw = np.cos(np.multiply.outer(t, freq) - phase + shift) @ (2.0 ** (-j * self.alpha) * freq**order)
        return raw * (self.amplitude / self._scale)

    @property
    def _scale(self) -> float:
        return _sup_norm(self.formula, self.alpha, self.n_terms)

    def __call__(self, t):
        if self.amplitude == 0:
            return np.zeros(np.shape(t))
        out = np.empty(np.shape(t))
        flat = np.asarray(t, dtype=float).ravel()
        res = out.reshape(-1)
        for start in range(0, flat.size, 65536):
            res[start:start + 65536] = self._raw(flat[start:start + 65536])
        return out * (self.amplitude / self._scale)


_SUP_CACHE: dict = {}


def _sup_norm(formula, alpha, n_terms) -> float:
    key = (formula, alpha, n_terms)
    if key not in _SUP_CACHE:
        probe = SmoothTruth(alpha, formula, 1.0, n_terms)
        t = np.linspace(0.0, 1.0, NORMALIZATION_POINTS)
        _SUP_CACHE[key] = float(np.max(np.abs(probe._raw(t))))
    return _SUP_CACHE[key]


def make_truth(setting: str, alpha: float, amplitude: float = 1.0,
               formula: Optional[str] = None) -> SmoothTruth:
    """Certified-exponent truth for ``setting``.

    The same function serves as the log-density (density), the regression
    function, and the logit of the success probability (classification).
    """
    if setting not in ("density", "regression", "classification"):
        raise ValueError(f"unknown setting {setting!r}")
    if formula is None:
        formula = TruthFormula.WEIERSTRASS if alpha < 1 else TruthFormula.POLY_SMOOTH
    return SmoothTruth(alpha, formula, amplitude)


def holder_quotient(values, grid, exponent: float) -> float:
    """``max |f(s) - f(t)| / |s - t|^exponent`` over all grid pairs."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    best = 0.0
    for lag in range(1, grid.size):
        diff = np.abs(values[lag:] - values[:-lag])
        q = diff / (grid[lag:] - grid[:-lag]) ** exponent
        best = max(best, float(q.max()))
    return best


def difference_quotient(values, step: float, order: int) -> float:
    """``max |Delta_h^order f| / h^order`` on an equispaced grid."""
    d = np.diff(np.asarray(values, dtype=float), n=order)
    return float(np.max(np.abs(d))) / step**order


# --------------------------------------------------------------------------
# scaling rules


class PriorFamily(str, enum.Enum):
    SQUARED_EXPONENTIAL = "squared_exponential"
    LAPLACE_SPECTRAL = "laplace_spectral"
    MODIFIED_IBM = "modified_ibm"

    @property
    def stationary(self) -> bool:
        return self is not PriorFamily.MODIFIED_IBM


def _family(family) -> PriorFamily:
    if family == "stationary":
        return PriorFamily.SQUARED_EXPONENTIAL
    return PriorFamily(family)


def scaling_rule(family, alpha: float, n: int, k: int = 0) -> tuple[float, float]:
    """``(c_n, a_n)``.

    Stationary: ``c_n = (log^2 n / n)^{1/(2 alpha + 1)}`` and ``a_n = 1``
    (unused).  Modified integrated Brownian motion:
    ``c_n = n^{(alpha - (k+1/2)) / ((k+1/2)(1+2 alpha))}`` and
    ``a_n = n^{(1 + 2 alpha - 2k) / (1 + 2 alpha)}``.
    """
    fam = _family(family)
    if n < 2:
        raise ValueError("n must be >= 2")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if fam.stationary:
        return (math.log(n) ** 2 / n) ** (1.0 / (2 * alpha + 1)), 1.0
    if alpha > k + 1:
        raise ValueError("the integrated Brownian motion rule needs alpha <= k + 1")
    order = k + 0.5
    c_n = float(n) ** ((alpha - order) / (order * (1 + 2 * alpha)))
    a_n = float(n) ** ((1 + 2 * alpha - 2 * k) / (1 + 2 * alpha))
    return c_n, a_n


def target_rate(family, alpha: float, n) -> np.ndarray:
    """The contraction rate paired with :func:`scaling_rule`."""
    n = np.asarray(n, dtype=float)
    if _family(family).stationary:
        return (n / np.log(n) ** 2) ** (-alpha / (1 + 2 * alpha))
    return n ** (-alpha / (1 + 2 * alpha))


def rate_balance(family, alpha: float, n: float, k: int = 0) -> dict:
    """Left/right ratios of the inequalities that make the rate work.

    Stationary: ``(1/c)(log(1/(c e^2)))^2 <~ n e^2``, ``c^alpha <= e`` and
    ``1/c <~ n e^2``.  Integrated Brownian motion (dominant terms, beta =
    alpha): ``(c^{k+1/2} e)^{-1/(k+1/2)} <~ n e^2`` and
    ``c^{2k+1} e^{-(2k+2-2 alpha)/alpha} <~ n e^2``.
    """
    c, a = scaling_rule(family, alpha, n, k)
    eps = float(target_rate(family, alpha, n))
    rhs = n * eps * eps
    if _family(family).stationary:
        return {
            "smallball": (1.0 / c) * math.log(1.0 / (c * eps * eps)) ** 2 / rhs,
            "bias": c**alpha / eps,
            "rkhs_norm": (1.0 / c) / rhs,
        }
    order = k + 0.5
    return {
        "smallball": (1.0 / (c**order * eps)) ** (1.0 / order) / rhs,
        "approximation": c ** (2 * k + 1) * (1.0 / eps) ** ((2 * k + 2 - 2 * alpha) / alpha) / rhs,
    }


def rate_balance_stability(family, alpha: float, k: int = 0, n_lo: float = 1e2, n_mid: float = 1e4,
                           n_hi: float = 1e6, points: int = 41) -> dict:
    """For each inequality: the fitted constant (largest ratio) over
    ``[n_lo, n_mid]`` and over ``[n_lo, n_hi]``, and their quotient."""
    ns = np.logspace(math.log10(n_lo), math.log10(n_hi), points)
    ratios = [rate_balance(family, alpha, n, k) for n in ns]
    out = {}
    for key in ratios[0]:
        r = np.array([x[key] for x in ratios])
        early = float(np.max(r[ns <= n_mid * (1 + 1e-12)]))
        full = float(np.max(r))
        out[key] = {"constant_early": early, "constant_full": full, "growth": full / early,
                    "spread": float(r.max() / r.min())}
    return out


# --------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    n_values: np.ndarray
    radii: np.ndarray
    slope: float
    intercept: float
    slope_se: float
    target_slope: float = math.nan
    log_corrected_slope: float = math.nan
    median_radii: Optional[np.ndarray] = None
    alpha: float = math.nan
    family: str = ""

    def slope_ci(self, level: float = 0.95) -> tuple[float, float]:
        q = stats.t.ppf(0.5 + level / 2, len(self.n_values) - 2)
        return self.slope - q * self.slope_se, self.slope + q * self.slope_se


def rate_fit(n_values, radii, alpha: Optional[float] = None, family: str = "squared_exponential") -> RateFit:
    """Least squares of ``log radius`` on ``log n``."""
    n_values = np.asarray(n_values, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if n_values.shape != radii.shape or n_values.size < 4:
        raise ValueError("need at least 4 paired (n, radius) values")
    if np.any(radii <= 0) or np.any(n_values <= 0):
        raise ValueError("radii and n must be positive")
    order = np.argsort(n_values)
    n_values, radii = n_values[order], radii[order]
    res = stats.linregress(np.log(n_values), np.log(radii))
    fit = RateFit(n_values, radii, float(res.slope), float(res.intercept), float(res.stderr), family=family)
    if alpha is not None:
        fit.alpha = alpha
        fit.target_slope = -alpha / (1 + 2 * alpha)
        curve = target_rate(family, alpha, n_values)
        fit.log_corrected_slope = float(stats.linregress(np.log(n_values), np.log(curve)).slope)
    return fit


# --------------------------------------------------------------------------
# contraction harness


def cell_seed(seed: int, n: int, replication: int) -> int:
    """Seed for one (n, replication) cell, derived by hashing the triple."""
    return int(np.random.SeedSequence([seed, n, replication]).generate_state(1, np.uint64)[0])


def build_prior(family, c: float, a: float = 1.0, k: int = 0) -> GaussianPrior:
    fam = _family(family)
    if fam is PriorFamily.SQUARED_EXPONENTIAL:
        return RescaledStationary(StationaryKernel.squared_exponential(), c)
    if fam is PriorFamily.LAPLACE_SPECTRAL:
        return RescaledStationary(StationaryKernel.laplace_spectral(), c)
    return ModifiedIbm(k, c, a)


@dataclass
class ExperimentResult:
    fit: RateFit
    rows: list = field(default_factory=list)


RAW_COLUMNS = SUMMARY_COLUMNS + ["c", "a"]


def run_cell(setting: str, prior: GaussianPrior, truth, n: int, cell: int, grid,
             mcmc: Optional[McmcConfig] = None, n_draws: int = 500,
             regression: Optional[ConjugateRegression] = None) -> tuple[float, float, float]:
    """Simulate one data set of size ``n`` and return the posterior distance
    quantiles ``(q50, q90)`` and the acceptance rate.

    Regression uses the equispaced design ``(i + 1/2)/n``, noise sd 0.5 and
    the exact conjugate posterior with known noise level (``regression`` may
    carry a prebuilt factorisation for that design); density and
    classification use the MCMC sampler configured by ``mcmc``.
    """
    data_rng = make_rng(cell, 0)
    if setting == "regression":
        design = (np.arange(n) + 0.5) / n
        post = regression if regression is not None else ConjugateRegression(prior, design, NOISE_SD, grid)
        w0 = truth(design)
        y = w0 + NOISE_SD * data_rng.standard_normal(n)
        draws = post.draws(y, n_draws, make_rng(cell, 1))
        dist = empirical_norm(LinearInterpolator.build(grid, design)(draws) - w0)
        return float(np.quantile(dist, 0.5)), float(np.quantile(dist, 0.9)), 1.0
    mcmc = McmcConfig() if mcmc is None else mcmc
    cfg = McmcConfig(**{**mcmc.to_dict(), "seed": cell})
    if setting == "density":
        samples = DensityModel.from_w(grid, truth(grid)).sample(n, data_rng)
        summ = density_posterior(prior, samples, cfg, grid, truth)
    elif setting == "classification":
        x = data_rng.random(n)
        labels = (data_rng.random(n) < logistic(truth(x))).astype(int)
        summ = classification_posterior(prior, ClassificationData(x, labels), cfg, grid, truth)
    else:
        raise ValueError(f"unknown setting {setting!r}")
    return summ.distance_quantile(0.5), summ.contraction_radius, summ.acceptance_rate


def contraction_experiment(setting: str, prior_family, alpha: float, n_values: Sequence[int],
                           replications: int, seed: int, override_c: Optional[float] = None,
                           k: int = 0, grid_size: int = 256, mcmc: Optional[McmcConfig] = None,
                           n_draws: int = 500) -> ExperimentResult:
    """Contraction radius per (n, replication) and the log-log fit of the
    mean radius against n.  ``c_n`` follows :func:`scaling_rule` unless
    ``override_c`` freezes it."""
    n_values = [int(n) for n in n_values]
    if len(n_values) < 4 or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be increasing with at least 4 entries")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if setting not in ("density", "regression", "classification"):
        raise ValueError(f"unknown setting {setting!r}")
    fam = _family(prior_family)
    truth = make_truth(setting, alpha)
    grid = default_grid(grid_size)
    rows = []
    mean_radii, median_radii = [], []
    for n in n_values:
        c, a = scaling_rule(fam, alpha, n, k)
        if override_c is not None:
            c = float(override_c)
        prior = build_prior(fam, c, a, k)
        shared = None
        if setting == "regression":
            shared = ConjugateRegression(prior, (np.arange(n) + 0.5) / n, NOISE_SD, grid)
        radii = []
        for rep in range(replications):
            s = cell_seed(seed, n, rep)
            q50, q90, acc = run_cell(setting, prior, truth, n, s, grid, mcmc, n_draws, shared)
            radii.append(q90)
            rows.append([setting, n, rep, repr(q50), repr(q90), repr(float(acc)), s,
                         repr(float(c)), repr(float(a))])
        mean_radii.append(float(np.mean(radii)))
        median_radii.append(float(np.median(radii)))
    fit = rate_fit(n_values, mean_radii, alpha, fam.value)
    fit.median_radii = np.array(median_radii)
    return ExperimentResult(fit, rows)


RATE_COLUMNS = ["alpha", "family", "slope", "slope_se", "target_slope", "n_min", "n_max"]


def write_rate_csv(fits: Iterable[RateFit], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RATE_COLUMNS)
    for f in fits:
        writer.writerow([repr(float(f.alpha)), f.family, repr(f.slope), repr(f.slope_se),
                         repr(float(f.target_slope)), int(f.n_values.min()), int(f.n_values.max())])


def write_raw_csv(rows: Iterable[Sequence], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RAW_COLUMNS)
    writer.writerows(rows)
