"""Posterior contraction with and without the rescaling rule.

Run: python demos/04_contraction_rates.py
"""
from rescaled_gp.experiments import contraction_experiment, scaling_rule
from rescaled_gp.inference import McmcConfig

N = [200, 400, 800, 1600, 3200, 6400]

# %% Regression with a truth of smoothness 1 and a squared-exponential
# prior.  With c_n = (log^2 n / n)^{1/3} the posterior radius should shrink
# roughly like n^{-1/3}; log factors flatten the fitted slope a little.
scaled = contraction_experiment("regression", "squared_exponential", 1.0, N, 10, seed=1)
print("rescaled prior")
for n, r in zip(N, scaled.fit.radii):
    print(f"  n = {n:5d}  c_n = {scaling_rule('squared_exponential', 1.0, n)[0]:.3f}  radius {r:.4f}")
print(f"  slope {scaled.fit.slope:.3f}, target -1/3, log-corrected {scaled.fit.log_corrected_slope:.3f}")

# %% Freezing c at its n = 200 value keeps the prior too rough for large n:
# the posterior then contracts much more slowly.
c200 = scaling_rule("squared_exponential", 1.0, 200)[0]
frozen = contraction_experiment("regression", "squared_exponential", 1.0, N, 10, seed=1, override_c=c200)
print(f"frozen c = {c200:.3f}: slope {frozen.fit.slope:.3f} with 95% CI "
      f"({frozen.fit.slope_ci()[0]:.3f}, {frozen.fit.slope_ci()[1]:.3f})")

# %% Density estimation uses the function-space MCMC sampler; a short chain
# is enough to see the trend.
mcmc = McmcConfig(chain_length=6000, burn_in=2000, thin=20)
dens = contraction_experiment("density", "squared_exponential", 1.0, N, 2, seed=2, grid_size=128, mcmc=mcmc)
print(f"density (Hellinger): slope {dens.fit.slope:.3f}")
