"""Monte Carlo small-deviation probabilities ``Pr(max_t |W_t| <= eps)`` on a
grid and least-squares conformance against the theoretical upper bounds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
from scipy import special, stats

from .processes import (
    GaussianPrior,
    ModifiedIbm,
    RescaledStationary,
    cholesky_with_jitter,
    default_grid,
    make_rng,
    prior_covariance_matrix,
)

MIN_PATHS = 1000
DEFAULT_BATCH = 10_000
Z95 = 1.959963984540054
PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class SmallBallEstimate:
    """Estimate of ``-log Pr(max_grid |W| <= epsilon)`` with a 95% interval.

    ``method="crude"``: ``hits`` paths landed in the ball and the interval is
    the Wilson interval on ``p`` mapped through ``-log``.  With no hits,
    ``censored`` is set and ``neg_log_prob = log(n_paths)`` is only a lower
    bound.  ``method="ghk"``: sequential conditioning estimator; ``hits``
    counts samples with nonzero weight and the interval is a normal interval
    on the weighted mean.
    """

    prior: GaussianPrior
    epsilon: float
    n_paths: int
    hits: int
    neg_log_prob: float
    ci_low: float
    ci_high: float
    grid_size: int
    seed: int
    method: str = "crude"
    censored: bool = False

    @property
    def probability(self) -> float:
        return math.exp(-self.neg_log_prob)

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def _neg_log(p: float) -> float:
    return math.inf if p <= 0 else -math.log(p)


def wilson_neg_log_interval(hits: int, n: int) -> tuple[float, float]:
    """95% Wilson interval on ``p`` as an interval on ``-log p``."""
    lo, hi = stats.binomtest(hits, n).proportion_ci(0.95, method="wilson")
    return _neg_log(hi), _neg_log(lo)


def smallball_mc(prior: GaussianPrior, epsilon: float, n_paths: int, seed: int,
                 grid_size: int = 256, batch_size: int = DEFAULT_BATCH,
                 method: str = "crude") -> SmallBallEstimate:
    """Small-ball estimate on ``grid_size`` equispaced points.

    Batch ``b`` draws from the Philox stream ``b + 1`` of ``seed``; the result
    depends on ``(seed, batch_size)`` and not on evaluation order.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if n_paths < MIN_PATHS:
        raise ValueError(f"n_paths must be >= {MIN_PATHS}")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    cov = prior_covariance_matrix(prior, default_grid(grid_size))
    if method == "crude":
        return _crude(prior, cov, epsilon, n_paths, seed, grid_size, batch_size)
    if method == "ghk":
        return _ghk(prior, cov, epsilon, n_paths, seed, grid_size, batch_size)
    raise ValueError(f"unknown method {method!r}")


def _batches(n: int, size: int):
    for b, start in enumerate(range(0, n, size)):
        yield b, min(size, n - start)


def _crude(prior, cov, epsilon, n_paths, seed, grid_size, batch_size):
    factor, _ = cholesky_with_jitter(cov)
    hits = 0
    for b, m in _batches(n_paths, batch_size):
        z = make_rng(seed, b + 1).standard_normal((m, factor.shape[0]))
        paths = z @ factor.T
        hits += int(np.count_nonzero(np.max(np.abs(paths), axis=1) <= epsilon))
    ci_low, ci_high = wilson_neg_log_interval(hits, n_paths)
    if hits == 0:
        return SmallBallEstimate(prior, epsilon, n_paths, 0, math.log(n_paths), ci_low, math.inf,
                                 grid_size, seed, "crude", True)
    nlp = -math.log(hits / n_paths)
    return SmallBallEstimate(prior, epsilon, n_paths, hits, nlp, min(ci_low, nlp), max(ci_high, nlp),
                             grid_size, seed, "crude", False)


def pivoted_cholesky(cov: np.ndarray, tol: float = PIVOT_TOL):
    """Greedy pivoted Cholesky ``cov[perm][:, perm] ~ L L^T`` with ``L``
    of shape ``(m, r)`` lower trapezoidal; stops when the largest remaining
    diagonal falls below ``tol * max(diag(cov))``."""
    m = cov.shape[0]
    perm = np.arange(m)
    d = np.diag(cov).astype(float).copy()
    stop = tol * max(float(d.max()), 0.0)
    L = np.zeros((m, m))
    r = 0
    while r < m:
        j = r + int(np.argmax(d[perm[r:]]))
        if d[perm[j]] <= stop:
            break
        perm[[r, j]] = perm[[j, r]]
        L[[r, j], :r] = L[[j, r], :r]
        piv = perm[r]
        L[r, r] = math.sqrt(d[piv])
        rest = perm[r + 1:]
        L[r + 1:, r] = (cov[rest, piv] - L[r + 1:, :r] @ L[r, :r]) / L[r, r]
        d[rest] -= L[r + 1:, r] ** 2
        r += 1
    return L[:, :r], perm


def _ghk(prior, cov, epsilon, n_samples, seed, grid_size, batch_size):
    L, _ = pivoted_cholesky(cov)
    r = L.shape[1]
    total = 0.0
    total_sq = 0.0
    hits = 0
    for b, m in _batches(n_samples, batch_size):
        u = make_rng(seed, b + 1).random((m, r))
        z = np.zeros((m, r))
        log_w = np.zeros(m)
        for j in range(r):
            mean = z[:, :j] @ L[j, :j]
            lo = (-epsilon - mean) / L[j, j]
            hi = (epsilon - mean) / L[j, j]
            # evaluate on the side of zero away from the interval for accuracy
            flip = lo > 0
            a = np.where(flip, -hi, lo)
            bnd = np.where(flip, -lo, hi)
            pa, pb = special.ndtr(a), special.ndtr(bnd)
            mass = pb - pa
            log_w += np.log(np.maximum(mass, 1e-300))
            x = special.ndtri(np.clip(pa + u[:, j] * mass, 1e-300, 1 - 1e-16))
            z[:, j] = np.where(flip, -x, x)
        rest = np.abs(z @ L[r:].T) <= epsilon if r < L.shape[0] else np.ones((m, 1), bool)
        w = np.exp(log_w) * np.all(rest, axis=1)
        total += float(w.sum())
        total_sq += float((w**2).sum())
        hits += int(np.count_nonzero(w > 0))
    p = total / n_samples
    if p <= 0:
        return SmallBallEstimate(prior, epsilon, n_samples, 0, math.inf, math.inf, math.inf,
                                 grid_size, seed, "ghk", True)
    var = max(total_sq / n_samples - p * p, 0.0) / n_samples
    half = Z95 * math.sqrt(var) / p
    nlp = -math.log(p)
    return SmallBallEstimate(prior, epsilon, n_samples, hits, nlp, nlp - half, nlp + half,
                             grid_size, seed, "ghk", False)


# --------------------------------------------------------------------------
# bound conformance


def smallball_predictor(prior: GaussianPrior, radius: float) -> float:
    """Theoretical shape of ``-log Pr(max |W| <= radius)``.

    The bounds are stated for a ball of radius ``2 eps``, so ``eps = radius/2``:
    stationary ``(1/c) log(1/(c eps^2))^2``; modified integrated Brownian
    motion ``(c^{k+1/2} eps)^{-1/(k+1/2)} + k log(1/(sqrt(a) eps))`` (the
    logarithm vanishes for the pure process ``a = inf``).
    """
    eps = radius / 2.0
    if isinstance(prior, RescaledStationary):
        return (1.0 / prior.c) * math.log(1.0 / (prior.c * eps * eps)) ** 2
    order = prior.k + 0.5
    value = (1.0 / (prior.c**order * eps)) ** (1.0 / order)
    if prior.k > 0 and not math.isinf(prior.a):
        value += prior.k * math.log(1.0 / (math.sqrt(prior.a) * eps))
    return value


@dataclass(frozen=True)
class BoundFit:
    """Least-squares fit ``neg_log_prob ~ C * predictor`` through the origin.

    ``r_squared`` is the uncentred coefficient of determination, the usual
    choice for a model without intercept.
    """

    fitted_constant: float
    r_squared: float
    predictors: tuple
    responses: tuple
    family: str

    def fitted(self) -> np.ndarray:
        return self.fitted_constant * np.asarray(self.predictors)

    def __iter__(self):
        return iter((self.fitted_constant, self.r_squared))


def bound_fit(estimates: Sequence[SmallBallEstimate]) -> BoundFit:
    estimates = list(estimates)
    if len(estimates) < 6:
        raise ValueError("bound_fit needs at least 6 design points")
    kinds = {type(e.prior) for e in estimates}
    if len(kinds) > 1:
        raise ValueError("mixed prior families in one fit")
    if kinds == {RescaledStationary}:
        if len({e.prior.kernel for e in estimates}) > 1:
            raise ValueError("mixed stationary kernels in one fit")
        if any(e.prior.c > 1 for e in estimates):
            raise ValueError("the stationary bound needs c <= 1")
    x = np.array([smallball_predictor(e.prior, e.epsilon) for e in estimates])
    y = np.array([e.neg_log_prob for e in estimates])
    if not np.all(np.isfinite(y)):
        raise ValueError("estimates must be finite")
    slope = float(x @ y / (x @ x))
    resid = y - slope * x
    r2 = 1.0 - float(resid @ resid) / float(y @ y)
    return BoundFit(slope, r2, tuple(x), tuple(y), estimates[0].prior.family)


# --------------------------------------------------------------------------

SMALLBALL_COLUMNS = ["family", "c", "a", "k", "epsilon", "n_paths", "hits", "neg_log_prob",
                     "ci_low", "ci_high", "grid_size", "seed"]


def _prior_columns(prior: GaussianPrior) -> list:
    if isinstance(prior, ModifiedIbm):
        return [prior.family, repr(float(prior.c)), repr(float(prior.a)), prior.k]
    return [prior.family, repr(float(prior.c)), "", ""]


def write_smallball_csv(estimates: Iterable[SmallBallEstimate], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SMALLBALL_COLUMNS)
    for e in estimates:
        writer.writerow(_prior_columns(e.prior) + [
            repr(float(e.epsilon)), e.n_paths, e.hits, repr(float(e.neg_log_prob)),
            repr(float(e.ci_low)), repr(float(e.ci_high)), e.grid_size, e.seed])
