"""Approximating a rough truth by elements of the reproducing kernel
Hilbert space, and what the approximation costs.

Run: python demos/03_rkhs_approximation.py
"""
import numpy as np

from rescaled_gp.experiments import SmoothTruth
from rescaled_gp.processes import RescaledStationary, StationaryKernel
from rescaled_gp.rkhs import LineSpectrum, concentration_estimate, entropy_net, holder_approx, ibm_approx
from rescaled_gp.smallball import smallball_mc

se = StationaryKernel.squared_exponential()

# %% Convolving the truth with a band-limited kernel at bandwidth c gives an
# RKHS element.  For a truth with beta derivatives the sup error shrinks
# like c^beta while the squared RKHS norm grows no faster than 1/c.
for beta, formula in ((0.5, "weierstrass"), (1.0, "poly_smooth"), (2.0, "poly_smooth")):
    w0 = SmoothTruth(beta, formula)
    spectrum = LineSpectrum.of(w0)
    print(f"truth with beta = {beta}")
    for c in 2.0 ** -np.arange(2, 7):
        _, err, norm_sq = holder_approx(w0, beta, c, se, spectrum=spectrum)
        print(f"  c = 1/{int(1 / c):<3d} sup error {err:.4f}   c * ||h||^2 = {c * norm_sq:.3f}")

# %% Integrated Brownian motion has a Sobolev-type RKHS; the smooth part of
# the norm grows like eps^{-(2k+2-2beta)/beta}.
w0 = SmoothTruth(1.0, "poly_smooth")
spectrum = LineSpectrum.of(w0)
print("\nIBM (k=1) approximation of a beta = 1 truth")
for eps in (0.2, 0.1, 0.05, 0.025):
    approx, norm_sq = ibm_approx(w0, 1.0, 1, 1.0, 1.0, eps, spectrum=spectrum)
    print(f"  eps = {eps:<6} sup error {approx.sup_error:.4f}  norm^2 {norm_sq:8.2f}")

# %% The concentration function adds the small-ball exponent.  Its balance
# against n eps^2 is what sets the posterior contraction rate.
prior = RescaledStationary(se, 0.125)
for eps in (0.5, 0.25):
    sb = smallball_mc(prior, eps, 20_000, seed=5, method="ghk")
    est = concentration_estimate(prior, w0, eps, sb)
    print(f"c=1/8 eps={eps}: approximation {est.approx_term:.2f} + small ball {est.smallball_term:.2f}"
          f" = {est.value:.2f}")

# %% The unit ball of the RKHS is small: a piecewise-Taylor net covers it
# with about (1/c) log(1/eps)^2 bits.
for c in (1.0, 0.5, 0.25):
    net = entropy_net(RescaledStationary(se, c), 0.05)
    print(f"c={c}: {net.n_pieces} pieces, Taylor order {net.k_order}, log #net = {net.log_cardinality:.1f}")
