"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line (also
collected in the terminal summary) and then asserts the criterion with the
pinned tolerance.  Run alone with ``pytest tests/test_acceptance.py -s``."""

import hashlib
import itertools
import json
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from rescaled_gp import cli
from rescaled_gp.experiments import (
    SmoothTruth,
    contraction_experiment,
    rate_balance_stability,
    scaling_rule,
)
from rescaled_gp.inference import (
    ConjugateRegression,
    DensityModel,
    McmcConfig,
    RegressionData,
    effective_sample_size,
    hellinger,
    pcn_chain,
    regression_posterior,
)
from rescaled_gp.processes import ModifiedIbm, RescaledStationary, StationaryKernel, default_grid, prior_covariance_matrix
from rescaled_gp.rkhs import KernelSections, LineSpectrum, entropy_net, holder_approx, net_covers
from rescaled_gp.smallball import bound_fit, smallball_mc

SE = StationaryKernel.squared_exponential()
N_VALUES = [200, 400, 800, 1600, 3200, 6400]
TARGET = -1 / 3


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


# ---------------------------------------------------------------- 1 and 2


@pytest.fixture(scope="module")
def regression_runs():
    start = time.perf_counter()
    scaled = contraction_experiment("regression", "squared_exponential", 1.0, N_VALUES, 20, seed=2024)
    c200, _ = scaling_rule("squared_exponential", 1.0, 200)
    frozen = contraction_experiment("regression", "squared_exponential", 1.0, N_VALUES, 20, seed=2024,
                                    override_c=c200)
    return scaled, frozen, time.perf_counter() - start


def test_criterion_01_regression_slope(regression_runs):
    scaled, _, elapsed = regression_runs
    fit = scaled.fit
    ok = abs(fit.slope - TARGET) <= 0.10 and elapsed < 600
    report(1, ok, f"slope {fit.slope:.3f} (se {fit.slope_se:.3f}) vs -1/3 +- 0.10; "
                  f"log-factor-corrected target {fit.log_corrected_slope:.3f}; {elapsed:.0f}s for both runs")
    assert ok


def test_criterion_02_rescaling_matters(regression_runs):
    scaled, frozen, _ = regression_runs
    lo_s, hi_s = scaled.fit.slope_ci()
    lo_f, hi_f = frozen.fit.slope_ci()
    gap = frozen.fit.slope - scaled.fit.slope
    ok = gap >= 0.05 and hi_s < lo_f
    report(2, ok, f"rescaled {scaled.fit.slope:.3f} CI ({lo_s:.3f}, {hi_s:.3f}); frozen c_200 "
                  f"{frozen.fit.slope:.3f} CI ({lo_f:.3f}, {hi_f:.3f}); gap {gap:.3f} >= 0.05")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_03_matched_smoothness_identity():
    values = [scaling_rule("modified_ibm", k + 0.5, n, k)[0] for k in range(5) for n in (2, 10, 10**3, 10**6, 10**9)]
    ok = all(v == 1.0 for v in values)
    report(3, ok, f"c_n == 1 exactly for k = 0..4 over {len(values)} (k, n) pairs")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_04_smallball_bound_shape():
    start = time.perf_counter()
    estimates = [smallball_mc(RescaledStationary(SE, c), eps, 100_000, seed=40 + i, method="ghk")
                 for i, (c, eps) in enumerate(itertools.product((1.0, 0.5, 0.25, 0.125), (0.3, 0.2, 0.1)))]
    fit = bound_fit(estimates)
    line = fit.fitted()
    y = np.array(fit.responses)
    widths = np.array([e.ci_width for e in estimates])
    excess = y - (1.5 * line + widths)
    worst = float(np.max(y / line))
    elapsed = time.perf_counter() - start
    ok_r2 = fit.r_squared >= 0.8
    ok_env = bool(np.all(excess <= 0))
    ok = ok_r2 and ok_env and elapsed < 900
    report(4, ok, f"R^2 {fit.r_squared:.3f} (>= 0.8: {ok_r2}); points above 1.5x line + CI: "
                  f"{int(np.sum(excess > 0))}/12, worst ratio to line {worst:.2f}; {elapsed:.0f}s")
    assert ok_r2, "R^2 below 0.8"
    assert ok_env, "estimates exceed 1.5x the fitted line plus CI width"


# ---------------------------------------------------------------- 5

# (c, target radius after the transfer) per order k
SELF_SIMILAR_POINTS = {0: [(0.25, 0.6), (0.5, 0.8), (2.0, 1.0), (4.0, 1.2)],
                       1: [(0.25, 0.3), (0.5, 0.4), (2.0, 0.5), (4.0, 0.6)]}


def test_criterion_05_self_similarity():
    start = time.perf_counter()
    n_checks = sum(len(v) for v in SELF_SIMILAR_POINTS.values())
    # family-wise 95% over all checks
    z = stats.norm.ppf(1 - 0.025 / n_checks)
    worst = 0.0
    seed = 500
    for k, points in SELF_SIMILAR_POINTS.items():
        for c, radius in points:
            eps = radius / c ** (k + 0.5)
            a = smallball_mc(ModifiedIbm(k, c, math.inf), eps, 100_000, seed)
            b = smallball_mc(ModifiedIbm(k, 1.0, math.inf), radius, 100_000, seed + 1)
            seed += 2
            half = math.hypot(a.ci_width, b.ci_width) / 2 * z / stats.norm.ppf(0.975)
            worst = max(worst, abs(a.neg_log_prob - b.neg_log_prob) / half)
    elapsed = time.perf_counter() - start
    ok = worst <= 1.0 and elapsed < 300
    report(5, ok, f"{n_checks} paired estimates, largest |difference| / joint CI half-width {worst:.2f} "
                  f"(<= 1, Bonferroni); {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_06_holder_construction():
    start = time.perf_counter()
    cs = 2.0 ** -np.arange(2, 7)
    parts, ok = [], True
    for beta, formula in ((0.5, "weierstrass"), (1.0, "poly_smooth"), (2.0, "poly_smooth")):
        w0 = SmoothTruth(beta, formula)
        spectrum = LineSpectrum.of(w0)
        out = [holder_approx(w0, beta, c, SE, spectrum=spectrum) for c in cs]
        slope = float(np.polyfit(np.log(cs), np.log([o[1] for o in out]), 1)[0])
        scaled = np.array([o[2] * c for o, c in zip(out, cs)])
        variation = float(scaled.max() / scaled.min())
        ok_slope = abs(slope - beta) <= 0.2 * beta
        ok_var = bool(np.all(np.isfinite(scaled))) and variation <= 3.0
        ok = ok and ok_slope and ok_var
        parts.append(f"beta {beta}: slope {slope:.3f} ({'ok' if ok_slope else 'out'}), "
                     f"c*norm^2 variation {variation:.2f} ({'ok' if ok_var else 'out'})")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 120
    report(6, ok, "; ".join(parts) + f"; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_07_entropy_net():
    start = time.perf_counter()
    ratios = []
    for c, eps in itertools.product((1.0, 0.5, 0.25), (0.1, 0.05)):
        net = entropy_net(RescaledStationary(SE, c), eps)
        ratios.append(net.log_cardinality * c / math.log(1 / eps) ** 2)
    spread = max(ratios) / min(ratios)
    prior = RescaledStationary(SE, 0.25)
    net = entropy_net(prior, 0.05)
    covered = 0
    for i in range(100):
        rng = np.random.default_rng(700 + i)
        m = int(rng.integers(1, 8))
        element = KernelSections(prior, rng.uniform(0, 1, m), rng.normal(size=m)).normalized()
        covered += net_covers(net, element)
    elapsed = time.perf_counter() - start
    ok = spread <= 3.0 and covered >= 99 and elapsed < 300
    report(7, ok, f"log#H * c / log(1/eps)^2 in [{min(ratios):.2f}, {max(ratios):.2f}] (factor {spread:.2f} <= 3); "
                  f"covered {covered}/100 unit elements; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 8


def _brute_force_regression():
    worst = 0.0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        grid = np.sort(rng.uniform(0, 1, 3))
        prior = RescaledStationary(SE, float(rng.uniform(0.2, 1.0)))
        y = rng.normal(size=3)
        sigma = 0.5
        mean, cov, _ = regression_posterior(prior, RegressionData(grid, y), sigma, grid=grid, n_draws=0)
        L = np.linalg.cholesky(prior_covariance_matrix(prior, grid) + 1e-12 * np.eye(3))
        x, wts = np.polynomial.hermite_e.hermegauss(120)
        w = np.array(list(itertools.product(x, repeat=3))) @ L.T
        weight = np.prod(np.array(list(itertools.product(wts, repeat=3))), axis=1)
        weight = weight * np.exp(-0.5 * np.sum((w - y) ** 2, axis=1) / sigma**2)
        weight /= weight.sum()
        bm = weight @ w
        bc = (w - bm).T @ ((w - bm) * weight[:, None])
        worst = max(worst, float(np.max(np.abs(mean.values - bm))), float(np.max(np.abs(cov - bc))))
    return worst


def _mcmc_gaussian_target():
    grid = default_grid(12)
    prior = RescaledStationary(SE, 0.5)
    j, y, sigma = 4, 1.0, 0.3
    chain = pcn_chain(prior, lambda w: -0.5 * (w[j] - y) ** 2 / sigma**2,
                      McmcConfig(chain_length=60_000, burn_in=5_000, thin=5, seed=8), grid)
    exact = ConjugateRegression(prior, [grid[j]], sigma, grid)
    mean, var = exact.mean([y]), np.diag(exact.cov)
    worst = 0.0
    for i in range(grid.size):
        trace = chain.draws[:, i]
        ess = effective_sample_size(trace)
        worst = max(worst, abs(trace.mean() - mean[i]) / math.sqrt(var[i] / ess))
        # var of a sample variance of Gaussian draws: 2 sigma^4 / n
        worst = max(worst, abs(trace.var() - var[i]) / (var[i] * math.sqrt(2 / ess)))
    return worst


def _hellinger_resolution():
    coarse, fine = default_grid(256), default_grid(4 * 255 + 1)
    # non-periodic log-densities, so the trapezoid rule is not spectrally exact
    h = [hellinger(DensityModel.from_w(g, 1.5 * g**2 - g), DensityModel.from_w(g, np.sin(3 * g))) for g in (coarse, fine)]
    return abs(h[0] - h[1])


def test_criterion_08_oracle_equivalence():
    reg = _brute_force_regression()
    mc = _mcmc_gaussian_target()
    hel = _hellinger_resolution()
    ok = reg <= 1e-4 and mc <= 3.0 and hel <= 1e-4
    report(8, ok, f"regression vs Gauss-Hermite max error {reg:.1e} (<= 1e-4); MCMC vs exact "
                  f"max {mc:.2f} MC-se (<= 3); hellinger vs 4x grid {hel:.1e} (<= 1e-4)")
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_09_rate_balance():
    cases = [("squared_exponential", a, 0) for a in (0.5, 1.0, 2.0)]
    cases += [("modified_ibm", a, k) for k, a in ((0, 0.5), (1, 1.0), (1, 1.5), (1, 2.0), (2, 2.5))]
    worst, where = 0.0, ""
    for family, alpha, k in cases:
        for key, v in rate_balance_stability(family, alpha, k).items():
            if v["growth"] > worst:
                worst, where = v["growth"], f"{family} alpha={alpha} {key}"
    ok = worst <= 2.0
    report(9, ok, f"largest growth of the fitted constant from n <= 1e4 to n <= 1e6: {worst:.2f} "
                  f"({where}) over {len(cases)} settings")
    assert ok


# ---------------------------------------------------------------- 10

CLI_CONFIGS = {
    "sample-prior": {"prior": {"family": "squared_exponential", "c": 0.3}, "n_paths": 3, "grid_size": 64},
    "smallball": {"priors": [{"family": "modified_ibm", "c": 1.0, "k": 1, "a": None}], "epsilons": [0.3, 0.5],
                  "n_paths": 2000, "grid_size": 64, "method": "ghk"},
    "concentration": {"prior": {"family": "squared_exponential", "c": 0.25}, "truth": {"alpha": 1.0},
                      "epsilons": [0.5, 0.25], "n_paths": 2000, "grid_size": 64, "entropy_net": True},
    "fit": {"setting": "classification", "prior_family": "squared_exponential", "alpha": 1.0, "n": 100,
            "grid_size": 32, "mcmc": {"chain_length": 1000, "burn_in": 200, "thin": 10}},
    "rates": {"setting": "density", "prior_family": "squared_exponential", "alpha": 1.0,
              "n_values": [50, 100, 200, 400], "replications": 1, "grid_size": 32,
              "mcmc": {"chain_length": 1000, "burn_in": 200, "thin": 10}},
}


def test_criterion_10_determinism(tmp_path):
    identical, total = 0, 0
    for command, config in CLI_CONFIGS.items():
        cfg_path = tmp_path / f"{command}.json"
        cfg_path.write_text(json.dumps(config))
        first = tmp_path / f"{command}-first"
        assert cli.main([command, "--config", str(cfg_path), "--output", str(first)]) == 0
        for csv_path in sorted(first.glob("*.csv")):
            again = tmp_path / f"{command}-{csv_path.stem}-again"
            assert cli.main([command, "--config", f"{csv_path}.json", "--output", str(again)]) == 0
            for produced in first.glob("*.csv"):
                total += 1
                identical += hashlib.sha256((again / produced.name).read_bytes()).digest() == \
                    hashlib.sha256(produced.read_bytes()).digest()
    ok = identical == total
    report(10, ok, f"{identical}/{total} CSV files byte-identical when re-run from their sidecars "
                   f"({len(CLI_CONFIGS)} commands)")
    assert ok


# ---------------------------------------------------------------- reports (not gating)


@pytest.mark.slow
@pytest.mark.parametrize("setting", ["density", "classification"])
def test_report_mcmc_contraction_slopes(setting):
    res = contraction_experiment(setting, "squared_exponential", 1.0, N_VALUES, 3, seed=11, grid_size=128,
                                 mcmc=McmcConfig(chain_length=8000, burn_in=2000, thin=20))
    slope = res.fit.slope
    within = abs(slope - TARGET) <= 0.15
    print(f"report {setting}: slope {slope:.3f} (se {res.fit.slope_se:.3f}), "
          f"{'within' if within else 'outside'} the relaxed +-0.15 band around -1/3")
    assert np.all(np.isfinite(res.fit.radii))
