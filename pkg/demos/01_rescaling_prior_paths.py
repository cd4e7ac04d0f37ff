"""Rescaling a smooth Gaussian process changes how rough its paths look.

Run: python demos/01_rescaling_prior_paths.py
"""
import numpy as np

from rescaled_gp.processes import ModifiedIbm, RescaledStationary, StationaryKernel, default_grid, sample_paths

# %% A squared-exponential process has analytic paths.  Shrinking the time
# scale c packs more oscillations into [0, 1]; total variation of the path
# on a fine grid is a simple roughness measure.
grid = default_grid(512)
se = StationaryKernel.squared_exponential()
print("squared-exponential prior, mean total variation of 200 paths")
for c in (2.0, 1.0, 0.3, 0.1, 0.03):
    paths = sample_paths(RescaledStationary(se, c), grid, 200, seed=1)
    tv = np.mean([np.abs(np.diff(p.values)).sum() for p in paths])
    print(f"  c = {c:5.2f}   TV = {tv:7.2f}")

# %% The roughness grows like 1/c: halving c doubles the expected number of
# upcrossings.  The Laplace-spectral kernel (phi(t) = 1/(1 + t^2)) behaves
# the same way.
lap = StationaryKernel.laplace_spectral()
tv = [np.mean([np.abs(np.diff(p.values)).sum() for p in sample_paths(RescaledStationary(lap, c), grid, 200, 2)])
      for c in (0.4, 0.2, 0.1)]
print("laplace-spectral prior, TV at c = 0.4, 0.2, 0.1:", np.round(tv, 2))

# %% Integrated Brownian motion works the other way round.  Its paths have
# k derivatives, and c > 1 shrinks the variance like c^{-(2k+1)} while the
# random polynomial part (weight 1/a) frees the values at t = 0.
for k in (0, 1, 2):
    sd_end = [np.std([p.values[-1] for p in sample_paths(ModifiedIbm(k, c, np.inf), grid, 2000, 3)])
              for c in (1.0, 4.0)]
    print(f"pure IBM k={k}: sd of W(1) at c=1 {sd_end[0]:.3f}, at c=4 {sd_end[1]:.4f} "
          f"(ratio {sd_end[0] / sd_end[1]:.1f}, theory {4 ** (k + 0.5):.1f})")
