import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rescaled_gp.processes import ModifiedIbm, RescaledStationary, StationaryKernel, default_grid, prior_covariance_matrix
from rescaled_gp.smallball import (
    SMALLBALL_COLUMNS,
    SmallBallEstimate,
    bound_fit,
    pivoted_cholesky,
    smallball_mc,
    smallball_predictor,
    wilson_neg_log_interval,
    write_smallball_csv,
)

SE = StationaryKernel.squared_exponential()
LAP = StationaryKernel.laplace_spectral()
BM = ModifiedIbm(0, 1.0, math.inf)

# expected overshoot of a Gaussian random walk over a barrier, -zeta(1/2)/sqrt(2 pi)
OVERSHOOT = 0.5825971579390106


def bm_ball_neg_log(eps, terms=50):
    """``-log Pr(sup_[0,1] |B| <= eps)`` from the alternating series."""
    k = np.arange(terms)
    p = 4 / math.pi * np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * math.pi**2 / (8 * eps**2)))
    return -math.log(p)


def half_width(est):
    return (est.ci_high - est.ci_low) / 2


def test_huge_radius_gives_zero():
    est = smallball_mc(RescaledStationary(SE, 0.3), 100.0, 1000, 0)
    assert est.hits == 1000 and est.neg_log_prob == 0.0
    assert est.probability == 1.0


def test_series_oracle_sanity():
    # for large eps the exit probability is about 4 P(Z > eps)
    assert bm_ball_neg_log(3.0) == pytest.approx(4 * stats.norm.sf(3.0), rel=0.01)
    assert bm_ball_neg_log(0.1) == pytest.approx(math.pi**2 / (8 * 0.01) - math.log(4 / math.pi), rel=1e-12)


@pytest.fixture(scope="module")
def bm_crude():
    return smallball_mc(BM, 0.5, 100_000, 3)


def test_brownian_ball_matches_discretised_oracle(bm_crude):
    # the 256-point grid sees the continuous-time event with the barrier
    # moved out by the random-walk overshoot
    step = 1.0 / 255
    oracle = bm_ball_neg_log(0.5 + OVERSHOOT * math.sqrt(step))
    assert abs(bm_crude.neg_log_prob - oracle) <= half_width(bm_crude) + 0.02
    assert bm_crude.ci_low <= bm_crude.neg_log_prob <= bm_crude.ci_high


def test_brownian_ball_matches_independent_estimator(bm_crude):
    ghk = smallball_mc(BM, 0.5, 100_000, 4, method="ghk")
    assert abs(bm_crude.neg_log_prob - ghk.neg_log_prob) <= math.hypot(half_width(bm_crude), half_width(ghk))


@pytest.mark.xfail(strict=True, reason="grid bias: a 4x finer grid sees more exits than the CI width allows")
def test_brownian_ball_against_four_times_finer_grid():
    prior = ModifiedIbm(0, 1.0, 1e12)
    coarse = smallball_mc(prior, 0.5, 100_000, 21)
    fine = smallball_mc(prior, 0.5, 100_000, 22, grid_size=4 * 255 + 1)
    assert abs(coarse.neg_log_prob - fine.neg_log_prob) <= math.hypot(half_width(coarse), half_width(fine))


def test_grid_refinement_moves_toward_continuous_value():
    coarse = smallball_mc(BM, 0.5, 50_000, 5, method="ghk", grid_size=64)
    fine = smallball_mc(BM, 0.5, 50_000, 5, method="ghk", grid_size=512)
    target = bm_ball_neg_log(0.5)
    assert coarse.neg_log_prob < fine.neg_log_prob < target + half_width(fine)


@given(st.floats(0.2, 1.0), st.floats(0.2, 1.0))
@settings(max_examples=15, deadline=None)
def test_monotone_in_radius_with_common_numbers(e1, e2):
    lo, hi = sorted((e1, e2))
    prior = RescaledStationary(SE, 0.2)
    a = smallball_mc(prior, lo, 2000, 7, grid_size=64)
    b = smallball_mc(prior, hi, 2000, 7, grid_size=64)
    assert a.hits <= b.hits
    if not a.censored:
        assert a.neg_log_prob >= b.neg_log_prob


def test_monotone_in_scale():
    values = [smallball_mc(RescaledStationary(SE, c), 0.5, 20_000, 8, method="ghk").neg_log_prob
              for c in (1.0, 0.25, 0.0625)]
    assert values[0] < values[1] < values[2]


@pytest.mark.parametrize("c", [0.25, 4.0])
def test_brownian_self_similarity(c):
    # B(t/c) = c^{-1/2} B(t) in law, on the same grid
    scaled = smallball_mc(ModifiedIbm(0, c, math.inf), 0.4, 5000, 9)
    base = smallball_mc(BM, 0.4 * math.sqrt(c), 5000, 9)
    assert abs(scaled.hits - base.hits) <= 1


def test_deterministic_given_seed():
    prior = RescaledStationary(LAP, 0.3)
    a = smallball_mc(prior, 0.6, 3000, 11, batch_size=1000)
    b = smallball_mc(prior, 0.6, 3000, 11, batch_size=1000)
    assert a == b
    assert smallball_mc(prior, 0.6, 3000, 11, method="ghk") == smallball_mc(prior, 0.6, 3000, 11, method="ghk")


def test_crude_and_ghk_agree():
    prior = ModifiedIbm(1, 0.5, 2.0)
    crude = smallball_mc(prior, 0.3, 50_000, 12)
    ghk = smallball_mc(prior, 0.3, 50_000, 13, method="ghk")
    assert abs(crude.neg_log_prob - ghk.neg_log_prob) <= 1.5 * math.hypot(half_width(crude), half_width(ghk))


def test_censored_when_no_hits():
    est = smallball_mc(RescaledStationary(SE, 0.05), 0.01, 1000, 0)
    assert est.censored and est.hits == 0
    assert est.neg_log_prob == math.log(1000) and math.isinf(est.ci_high)


def test_validation():
    with pytest.raises(ValueError):
        smallball_mc(BM, 0.5, 999, 0)
    with pytest.raises(ValueError):
        smallball_mc(BM, 0.0, 1000, 0)
    with pytest.raises(ValueError):
        smallball_mc(BM, 0.5, 1000, 0, method="other")


def test_wilson_interval_matches_closed_form():
    hits, n = 37, 1000
    p = hits / n
    z = 1.959963984540054
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo, hi = wilson_neg_log_interval(hits, n)
    assert lo == pytest.approx(-math.log(centre + half), rel=1e-9)
    assert hi == pytest.approx(-math.log(centre - half), rel=1e-9)


def test_pivoted_cholesky_reconstructs():
    cov = prior_covariance_matrix(RescaledStationary(SE, 1.0), default_grid(64))
    L, perm = pivoted_cholesky(cov)
    assert L.shape[1] < 64  # smooth kernel has low numerical rank
    assert np.allclose(L @ L.T, cov[np.ix_(perm, perm)], atol=1e-8)


# ---------------------------------------------------------------- bound fit


def fake(prior, eps, nlp):
    return SmallBallEstimate(prior, eps, 1000, 10, nlp, nlp, nlp, 256, 0)


def test_predictor_examples():
    assert smallball_predictor(RescaledStationary(SE, 1.0), 0.2) == pytest.approx(math.log(100) ** 2)
    assert smallball_predictor(BM, 0.2) == pytest.approx(100.0)
    val = smallball_predictor(ModifiedIbm(1, 1.0, 4.0), 0.2)
    assert val == pytest.approx(10 ** (2 / 3) + math.log(1 / (2 * 0.1)))


def test_bound_fit_recovers_exact_constant():
    design = [(c, e) for c in (1.0, 0.5, 0.25) for e in (0.2, 0.4)]
    ests = [fake(RescaledStationary(SE, c), e, 2.0 * smallball_predictor(RescaledStationary(SE, c), e))
            for c, e in design]
    C, r2 = bound_fit(ests)
    assert C == pytest.approx(2.0) and r2 == pytest.approx(1.0)
    fit = bound_fit(ests)
    assert np.allclose(fit.fitted(), fit.responses)


def test_bound_fit_errors():
    ok = [fake(RescaledStationary(SE, 0.5), e, 1.0) for e in np.linspace(0.1, 0.6, 6)]
    with pytest.raises(ValueError):
        bound_fit(ok[:5])
    with pytest.raises(ValueError):
        bound_fit(ok[:5] + [fake(BM, 0.3, 1.0)])
    with pytest.raises(ValueError):
        bound_fit(ok[:5] + [fake(RescaledStationary(LAP, 0.5), 0.3, 1.0)])
    with pytest.raises(ValueError):
        bound_fit(ok[:5] + [fake(RescaledStationary(SE, 2.0), 0.3, 1.0)])
    with pytest.raises(ValueError):
        bound_fit(ok[:5] + [fake(RescaledStationary(SE, 0.5), 0.3, math.inf)])


def test_csv():
    buf = io.StringIO()
    write_smallball_csv([smallball_mc(ModifiedIbm(1, 0.5, 2.0), 0.5, 1000, 1)], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(SMALLBALL_COLUMNS)
    assert lines[1].startswith("modified_ibm,0.5,2.0,1,0.5,1000,")
