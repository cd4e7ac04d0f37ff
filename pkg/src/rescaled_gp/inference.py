"""Posteriors for density estimation, fixed-design regression and binary
classification under a Gaussian process prior on a grid.

Regression is conjugate and computed exactly.  Density estimation and
classification use a prior-reversible autoregressive (preconditioned
Crank-Nicolson) Metropolis sampler, whose acceptance ratio involves only the
likelihood.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import linalg, special

from .processes import (
    GaussianPrior,
    check_grid,
    cholesky_with_jitter,
    default_grid,
    make_rng,
    prior_covariance_matrix,
)
from .rkhs import GridFunction

SETTINGS = ("density", "regression", "classification")


def logistic(x):
    return special.expit(x)


def _log_logistic(x):
    return -np.logaddexp(0.0, -x)


# --------------------------------------------------------------------------
# data and models


@dataclass
class DensityModel:
    """``p = exp(w) / int_0^1 exp(w)`` on a grid (trapezoid normalisation)."""

    w: GridFunction
    p: GridFunction

    @classmethod
    def from_w(cls, grid, w_values) -> "DensityModel":
        grid = check_grid(grid)
        w_values = np.asarray(w_values, dtype=float)
        shifted = np.exp(w_values - np.max(w_values))
        p = shifted / np.trapezoid(shifted, grid)
        return cls(GridFunction(grid, w_values), GridFunction(grid, p))

    @classmethod
    def from_density(cls, grid, p_values) -> "DensityModel":
        grid = check_grid(grid)
        p_values = np.asarray(p_values, dtype=float)
        if np.any(p_values < 0):
            raise ValueError("density values must be nonnegative")
        p = p_values / np.trapezoid(p_values, grid)
        with np.errstate(divide="ignore"):
            return cls(GridFunction(grid, np.log(p)), GridFunction(grid, p))

    @property
    def grid(self) -> np.ndarray:
        return self.p.grid

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws by inverting the piecewise-linear-density CDF."""
        grid, p = self.grid, self.p.values
        cell = 0.5 * (p[1:] + p[:-1]) * np.diff(grid)
        total = float(cell.sum())
        cdf = np.concatenate([[0.0], np.cumsum(cell)]) / total
        u = rng.random(n)
        i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.size - 2)
        # mass to cover inside cell i; solve p0 x + slope x^2 / 2 = target
        h = grid[i + 1] - grid[i]
        p0 = p[i]
        slope = (p[i + 1] - p0) / h
        target = (u - cdf[i]) * total
        flat = np.abs(slope) * h <= 1e-12 * np.maximum(p0, 1e-300)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_quad = 2.0 * target / (p0 + np.sqrt(np.maximum(p0**2 + 2.0 * slope * target, 0.0)))
            x = np.where(flat, target / p0, x_quad)
        x = np.where(np.isfinite(x), x, 0.0)
        return np.clip(grid[i] + np.clip(x, 0.0, h), grid[0], grid[-1])


@dataclass
class RegressionData:
    design: np.ndarray
    responses: np.ndarray
    sigma0: Optional[float] = None

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=float)
        self.responses = np.asarray(self.responses, dtype=float)
        if self.design.shape != self.responses.shape:
            raise ValueError("design and responses must have equal length")
        if np.any(self.design < 0) or np.any(self.design > 1):
            raise ValueError("design points must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.design.size


@dataclass
class ClassificationData:
    covariates: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.covariates.shape != self.labels.shape:
            raise ValueError("covariates and labels must have equal length")
        if np.any((self.labels != 0) & (self.labels != 1)):
            raise ValueError("labels must be 0 or 1")
        if np.any(self.covariates < 0) or np.any(self.covariates > 1):
            raise ValueError("covariates must lie in [0, 1]")


@dataclass
class PosteriorSummary:
    """Retained posterior draws and their distances to the truth.

    ``contraction_radius`` is the empirical 0.9-quantile of
    ``distances_to_truth`` (NaN when no truth was supplied).
    """

    setting: str
    draws: list
    distances_to_truth: np.ndarray
    acceptance_rate: float = 1.0
    effective_sample_proxy: float = math.nan
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        self.distances_to_truth = np.asarray(self.distances_to_truth, dtype=float)

    @property
    def contraction_radius(self) -> float:
        return self.distance_quantile(0.9)

    def distance_quantile(self, q: float) -> float:
        if self.distances_to_truth.size == 0:
            return math.nan
        return float(np.quantile(self.distances_to_truth, q))

    @property
    def diagnostics(self) -> tuple:
        return self.acceptance_rate, self.effective_sample_proxy

    def draw_matrix(self) -> np.ndarray:
        return np.array([d.values for d in self.draws])


# --------------------------------------------------------------------------
# distances


def _same_grid(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or not np.array_equal(a, b):
        raise ValueError("densities live on different grids")


def hellinger(p, q) -> float:
    """``sqrt(0.5 int (sqrt p - sqrt q)^2)`` by the trapezoid rule."""
    p = p.p if isinstance(p, DensityModel) else p
    q = q.p if isinstance(q, DensityModel) else q
    _same_grid(p.grid, q.grid)
    diff = (np.sqrt(np.maximum(p.values, 0)) - np.sqrt(np.maximum(q.values, 0))) ** 2
    return float(min(math.sqrt(max(0.5 * np.trapezoid(diff, p.grid), 0.0)), 1.0))


def empirical_norm(values_at_design: np.ndarray) -> np.ndarray:
    """``||f||_n = sqrt(n^{-1} sum f(t_i)^2)`` along the last axis."""
    return np.sqrt(np.mean(np.asarray(values_at_design) ** 2, axis=-1))


def l2_distance(f: np.ndarray, g: np.ndarray, grid) -> np.ndarray:
    return np.sqrt(np.trapezoid((np.asarray(f) - np.asarray(g)) ** 2, grid, axis=-1))


# --------------------------------------------------------------------------
# interpolation onto data points


@dataclass(frozen=True)
class LinearInterpolator:
    """Linear interpolation from grid values to fixed points, as index/weight
    pairs so that it can be applied to many grid vectors at once."""

    left: np.ndarray
    frac: np.ndarray

    @classmethod
    def build(cls, grid, points) -> "LinearInterpolator":
        grid = np.asarray(grid, dtype=float)
        points = np.clip(np.asarray(points, dtype=float), grid[0], grid[-1])
        left = np.clip(np.searchsorted(grid, points, side="right") - 1, 0, grid.size - 2)
        frac = (points - grid[left]) / (grid[left + 1] - grid[left])
        return cls(left, frac)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        return values[..., self.left] * (1.0 - self.frac) + values[..., self.left + 1] * self.frac

    def node_weights(self, size: int) -> np.ndarray:
        """Vector ``h`` with ``h @ w = sum_i w(points_i)``."""
        h = np.bincount(self.left, weights=1.0 - self.frac, minlength=size)
        h += np.bincount(self.left + 1, weights=self.frac, minlength=size)
        return h


# --------------------------------------------------------------------------
# conjugate regression


class ConjugateRegression:
    """Exact Gaussian posterior on ``grid`` for ``Y = w(design) + N(0, sigma^2)``.

    The factorisation depends only on ``(prior, design, sigma, grid)``, so one
    instance serves any number of response vectors.
    """

    def __init__(self, prior: GaussianPrior, design, sigma: float, grid=None):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        self.prior = prior
        self.grid = default_grid() if grid is None else check_grid(grid)
        self.design = np.asarray(design, dtype=float)
        self.sigma = float(sigma)
        k_gg = prior_covariance_matrix(prior, self.grid)
        n = self.design.size
        if n == 0:
            self.smoother = np.zeros((self.grid.size, 0))
            self.cov = k_gg
            self._chol = None
        else:
            k_dd = prior.covariance(self.design[:, None], self.design[None, :])
            k_dd = 0.5 * (k_dd + k_dd.T)
            k_gd = prior.covariance(self.grid[:, None], self.design[None, :])
            a = k_dd + self.sigma**2 * np.eye(n)
            self._chol = linalg.cho_factor(a, lower=True)
            assert np.all(np.diag(self._chol[0]) > 0), "K_dd + sigma^2 I must be positive definite"
            self.smoother = linalg.cho_solve(self._chol, k_gd.T).T
            cov = k_gg - self.smoother @ k_gd.T
            self.cov = 0.5 * (cov + cov.T)
        self._factor = None

    @property
    def factor(self) -> np.ndarray:
        if self._factor is None:
            self._factor, _ = cholesky_with_jitter(self.cov)
        return self._factor

    def mean(self, responses) -> np.ndarray:
        return self.smoother @ np.asarray(responses, dtype=float)

    def draws(self, responses, n_draws: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n_draws, self.grid.size))
        return self.mean(responses) + z @ self.factor.T

    def log_marginal(self, responses) -> float:
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            return 0.0
        alpha = linalg.cho_solve(self._chol, y)
        logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol[0]))))
        return -0.5 * float(y @ alpha) - 0.5 * logdet - 0.5 * y.size * math.log(2 * math.pi)


def regression_posterior(prior: GaussianPrior, data: RegressionData, sigma: float, grid=None,
                         n_draws: int = 500, seed: int = 0):
    """Conjugate posterior of ``w`` on the grid: ``(mean, cov, draws)``."""
    post = ConjugateRegression(prior, data.design, sigma, grid)
    mean = GridFunction(post.grid, post.mean(data.responses))
    draws = post.draws(data.responses, n_draws, make_rng(seed)) if n_draws > 0 else np.empty((0, post.grid.size))
    return mean, post.cov, draws


def regression_posterior_sigma(prior: GaussianPrior, data: RegressionData, sigma_interval,
                               sigma_grid_size: int, grid=None, n_draws: int = 500, seed: int = 0,
                               truth: Optional[Callable] = None) -> PosteriorSummary:
    """Joint posterior of ``(w, sigma)`` with a uniform prior on ``sigma``.

    The interval is discretised on ``sigma_grid_size`` equispaced nodes (its
    midpoint when there is one node); node weights are the exact Gaussian
    marginal likelihoods.  Distances: ``||w - w0||_n + |sigma - sigma0|``.
    """
    lo, hi = map(float, sigma_interval)
    if not 0 < lo <= hi or (lo == hi and sigma_grid_size != 1):
        raise ValueError("need 0 < lo < hi")
    if sigma_grid_size < 1:
        raise ValueError("sigma_grid_size must be >= 1")
    if data.sigma0 is not None and not lo <= data.sigma0 <= hi:
        raise ValueError("generating sigma0 lies outside the sigma interval")
    nodes = np.array([0.5 * (lo + hi)]) if sigma_grid_size == 1 else np.linspace(lo, hi, sigma_grid_size)
    posts = [ConjugateRegression(prior, data.design, s, grid) for s in nodes]
    logml = np.array([p.log_marginal(data.responses) for p in posts])
    weights = np.exp(logml - special.logsumexp(logml))
    rng = make_rng(seed)
    choice = rng.choice(nodes.size, size=n_draws, p=weights)
    draws = np.empty((n_draws, posts[0].grid.size))
    for j in np.unique(choice):
        sel = choice == j
        draws[sel] = posts[j].draws(data.responses, int(sel.sum()), make_rng(seed, int(j) + 1))
    sigmas = nodes[choice]
    grid_ = posts[0].grid
    distances = np.empty(0)
    if truth is not None:
        interp = LinearInterpolator.build(grid_, data.design)
        truth_d = np.asarray(truth(data.design), dtype=float)
        distances = empirical_norm(interp(draws) - truth_d)
        if data.sigma0 is not None:
            distances = distances + np.abs(sigmas - data.sigma0)
    summary = PosteriorSummary("regression", [GridFunction(grid_, d) for d in draws], distances)
    summary.extras.update(sigma_nodes=nodes, sigma_weights=weights, sigma_draws=sigmas)
    return summary


# --------------------------------------------------------------------------
# function-space MCMC


@dataclass
class McmcConfig:
    chain_length: int = 20_000
    burn_in: int = 5_000
    thin: int = 30
    beta_init: float = 0.5
    target_acceptance: float = 0.25
    seed: int = 0

    BETA_MIN = 0.01
    BETA_MAX = 1.0
    ADAPT_WINDOW = 100
    ACCEPT_BAND = 0.05

    def __post_init__(self):
        if self.chain_length < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("chain_length >= 1, burn_in >= 0 and thin >= 1 required")
        if self.burn_in >= self.chain_length:
            raise ValueError("burn_in must be shorter than the chain")
        if not self.BETA_MIN <= self.beta_init <= self.BETA_MAX:
            raise ValueError("beta_init must lie in [0.01, 1]")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")

    @classmethod
    def from_dict(cls, doc: dict) -> "McmcConfig":
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "McmcConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class McmcError(RuntimeError):
    pass


@dataclass
class ChainResult:
    draws: np.ndarray
    loglik: np.ndarray
    acceptance_rate: float
    beta: float
    effective_sample_proxy: float


def effective_sample_size(trace: np.ndarray) -> float:
    """Initial-positive-sequence ESS of a scalar trace."""
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    s = 0.0
    for lag in range(1, n - 1, 2):
        pair = acf[lag] + acf[lag + 1]
        if pair <= 0:
            break
        s += pair
    return float(n / max(1.0 + 2.0 * s, 1.0))


def pcn_chain(prior: GaussianPrior, loglik: Callable[[np.ndarray], float], mcmc: McmcConfig,
              grid=None, stream: int = 0) -> ChainResult:
    """Autoregressive Metropolis chain ``w' = sqrt(1 - b^2) w + b xi``.

    ``xi`` is a fresh prior draw, the acceptance probability is
    ``min(1, exp(loglik(w') - loglik(w)))``.  During burn-in ``b`` is
    multiplied or divided by 1.25 after each window of 100 steps whose
    acceptance falls outside ``target +- 0.05``; it is frozen afterwards.
    """
    grid = default_grid() if grid is None else check_grid(grid)
    factor, _ = cholesky_with_jitter(prior_covariance_matrix(prior, grid))
    rng = make_rng(mcmc.seed, stream)
    m = grid.size
    w = factor @ rng.standard_normal(m)
    ll = loglik(w)
    beta = mcmc.beta_init
    kept, kept_ll, trace = [], [], []
    window_acc = 0
    accepted_after = 0
    for it in range(mcmc.chain_length):
        xi = factor @ rng.standard_normal(m)
        prop = math.sqrt(1.0 - beta * beta) * w + beta * xi
        ll_prop = loglik(prop)
        if math.log(1.0 - rng.random()) <= ll_prop - ll:
            w, ll = prop, ll_prop
            accept = True
        else:
            accept = False
        if it < mcmc.burn_in:
            window_acc += accept
            if (it + 1) % mcmc.ADAPT_WINDOW == 0:
                rate = window_acc / mcmc.ADAPT_WINDOW
                if rate > mcmc.target_acceptance + mcmc.ACCEPT_BAND:
                    beta = min(beta * 1.25, mcmc.BETA_MAX)
                elif rate < mcmc.target_acceptance - mcmc.ACCEPT_BAND:
                    beta = max(beta / 1.25, mcmc.BETA_MIN)
                window_acc = 0
        else:
            accepted_after += accept
            trace.append(ll)
            if (it - mcmc.burn_in + 1) % mcmc.thin == 0:
                kept.append(w.copy())
                kept_ll.append(ll)
    n_after = mcmc.chain_length - mcmc.burn_in
    if accepted_after == 0:
        raise McmcError("no proposal accepted after adaptation; the prior may be mis-scaled")
    draws = np.array(kept) if kept else np.empty((0, m))
    return ChainResult(draws, np.array(kept_ll), accepted_after / n_after, beta,
                       effective_sample_size(np.array(trace)))


def density_loglik(grid, samples) -> Callable[[np.ndarray], float]:
    """``sum_i log p_w(X_i)`` with ``p_w = exp(w) / trapz(exp(w))``."""
    grid = check_grid(grid)
    samples = np.asarray(samples, dtype=float)
    h = LinearInterpolator.build(grid, samples).node_weights(grid.size)
    n = samples.size
    dx = np.diff(grid)
    tw = np.concatenate([[dx[0] / 2], (dx[:-1] + dx[1:]) / 2, [dx[-1] / 2]])

    def loglik(w):
        if n == 0:
            return 0.0
        top = np.max(w)
        return float(h @ w) - n * (top + math.log(float(tw @ np.exp(w - top))))

    return loglik


def classification_loglik(grid, data: ClassificationData) -> Callable[[np.ndarray], float]:
    interp = LinearInterpolator.build(check_grid(grid), data.covariates)
    y = data.labels.astype(float)

    def loglik(w):
        if y.size == 0:
            return 0.0
        f = interp(w)
        return float(np.sum(y * _log_logistic(f) + (1.0 - y) * _log_logistic(-f)))

    return loglik


def _chain_summary(setting, grid, chain: ChainResult, distances) -> PosteriorSummary:
    draws = [GridFunction(grid, d) for d in chain.draws]
    summary = PosteriorSummary(setting, draws, distances, chain.acceptance_rate, chain.effective_sample_proxy)
    summary.extras["beta"] = chain.beta
    return summary


def density_posterior(prior: GaussianPrior, samples, mcmc: McmcConfig, grid=None,
                      truth: Optional[Callable] = None) -> PosteriorSummary:
    """Posterior over ``w`` for i.i.d. samples from ``p_w``.

    ``truth`` is the log-density ``w0`` (up to a constant); distances are
    Hellinger distances ``h(p_draw, p_w0)``.
    """
    grid = default_grid() if grid is None else check_grid(grid)
    samples = np.asarray(samples, dtype=float)
    if np.any(samples < 0) or np.any(samples > 1):
        raise ValueError("samples must lie in [0, 1]")
    chain = pcn_chain(prior, density_loglik(grid, samples), mcmc, grid)
    distances = np.empty(0)
    if truth is not None:
        p0 = DensityModel.from_w(grid, truth(grid))
        distances = np.array([hellinger(DensityModel.from_w(grid, d), p0) for d in chain.draws])
    return _chain_summary("density", grid, chain, distances)


def classification_posterior(prior: GaussianPrior, data: ClassificationData, mcmc: McmcConfig,
                             grid=None, truth: Optional[Callable] = None) -> PosteriorSummary:
    """Posterior over ``w`` with ``P(Y = 1 | X = t) = logistic(w(t))``.

    ``truth`` is ``w0``; distances are ``||logistic(w) - logistic(w0)||``
    in ``L2[0, 1]`` (uniform covariate law).
    """
    grid = default_grid() if grid is None else check_grid(grid)
    chain = pcn_chain(prior, classification_loglik(grid, data), mcmc, grid)
    distances = np.empty(0)
    if truth is not None:
        f0 = logistic(np.asarray(truth(grid), dtype=float))
        distances = l2_distance(logistic(chain.draws), f0, grid)
    return _chain_summary("classification", grid, chain, distances)


# --------------------------------------------------------------------------

SUMMARY_COLUMNS = ["setting", "n", "replication", "distance_quantile_0.5", "distance_quantile_0.9",
                   "acceptance_rate", "seed"]


def summary_row(summary: PosteriorSummary, n: int, replication: int, seed: int) -> list:
    return [summary.setting, n, replication, repr(summary.distance_quantile(0.5)),
            repr(summary.distance_quantile(0.9)), repr(float(summary.acceptance_rate)), seed]


def write_summary_csv(rows: Iterable[Sequence], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    writer.writerows(rows)
