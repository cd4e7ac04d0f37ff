"""How much prior mass sits near zero, and how that cost grows as c shrinks.

Run: python demos/02_small_ball_exponents.py
"""
import math

from rescaled_gp.processes import ModifiedIbm, RescaledStationary, StationaryKernel
from rescaled_gp.smallball import bound_fit, smallball_mc, smallball_predictor

se = StationaryKernel.squared_exponential()

# %% Crude Monte Carlo counts paths inside the band |W| <= eps.  It works
# while the probability is not tiny; the sequential conditioning (GHK)
# estimator keeps working far into the tail.
prior = RescaledStationary(se, 0.25)
for eps in (0.5, 0.3, 0.1):
    crude = smallball_mc(prior, eps, 20_000, seed=1)
    ghk = smallball_mc(prior, eps, 20_000, seed=2, method="ghk")
    tag = " (no hits: lower bound only)" if crude.censored else ""
    print(f"c=0.25 eps={eps}: crude -log p = {crude.neg_log_prob:6.2f}{tag}, "
          f"GHK = {ghk.neg_log_prob:6.2f} [{ghk.ci_low:.2f}, {ghk.ci_high:.2f}]")

# %% The exponent should grow like (1/c) log(1/(c eps^2))^2.  Fit the
# constant over a small design and look at the ratios.
estimates = [smallball_mc(RescaledStationary(se, c), eps, 20_000, seed=10 + i, method="ghk")
             for i, (c, eps) in enumerate([(c, e) for c in (1.0, 0.5, 0.25) for e in (0.3, 0.1)])]
fit = bound_fit(estimates)
print(f"\nfitted constant {fit.fitted_constant:.3f}, R^2 = {fit.r_squared:.3f}")
for e, x, y in zip(estimates, fit.predictors, fit.responses):
    print(f"  c={e.prior.c:<5} eps={e.epsilon:<4} predictor {x:7.2f}  estimate {y:6.2f}  "
          f"ratio {y / (fit.fitted_constant * x):.2f}")

# %% Brownian motion is self-similar: B(t/c) on [0,1] has the law of
# c^{-1/2} B(t), so the ball of radius eps at scale c matches radius
# sqrt(c) eps at scale 1.
for c in (0.25, 4.0):
    a = smallball_mc(ModifiedIbm(0, c, math.inf), 0.5, 50_000, seed=3)
    b = smallball_mc(ModifiedIbm(0, 1.0, math.inf), 0.5 * math.sqrt(c), 50_000, seed=4)
    print(f"BM c={c}: {a.neg_log_prob:.3f} vs rescaled radius {b.neg_log_prob:.3f}")
print("predictor for BM at radius 0.5:", smallball_predictor(ModifiedIbm(0, 1.0, math.inf), 0.5))
