"""
Structural distribution estimation with instruments
===================================================

When the regressor is endogenous, orthogonality against an instrument
replaces orthogonality against the regressor itself, and the fitted object
becomes a structural conditional distribution. This example compares the
direct instrument-orthogonality estimator, the projected-regressor
(indirect) variant, classical two stage least squares, and the exogenous
estimator that ignores endogeneity.
"""

# %%
# A linear heteroscedastic structural model with an endogenous regressor:
# the disturbance mixes the regressor's own shock with an independent one,
# and a valid instrument moves the regressor without touching the error.
import numpy as np

from dualreg import (
    Dataset,
    build_design,
    fit_dual,
    fit_iv_direct,
    fit_iv_indirect,
    two_stage_least_squares,
)

rng = np.random.default_rng(11)
n = 5000
z = rng.uniform(-0.5, 0.5, n)
v = rng.uniform(-0.5, 0.5, n)
w = rng.standard_normal(n)
x = 1.0 + z + v
estar = (v + w) / np.sqrt(1.0 / 12.0 + 1.0)
y = 1.0 + x + (0.5 + 0.2 * x) * estar
data = Dataset(y=y, x=x, z=z)
print("structural truth: location (1, 1), scale (0.5, 0.2)")

# %%
# Ignoring endogeneity biases the location slope upward (the regressor
# shock leaks into the error).
naive = fit_dual(y, build_design(data))
print("exogenous fit location:", np.round(naive.lambda1, 3), " (biased)")

# %%
# The direct estimator solves the just-identified instrument moment system
# for all four structural parameters at once, and backs out the constraint
# multipliers from the stationarity conditions.
direct = fit_iv_direct(y, data)
print("direct fit: location", np.round(direct.beta1, 3),
      " scale", np.round(direct.beta2, 3))
print("constraint multipliers:", np.round(np.r_[direct.lambda1, direct.lambda2], 3))

# %%
# The indirect route projects the regressors on the instruments first and
# uses the projections as constraint weights; in the just-identified case
# the two routes solve the same equations.
indirect = fit_iv_indirect(y, data)
print("indirect fit: location", np.round(indirect.beta1, 3),
      " scale", np.round(indirect.beta2, 3))
print("direct vs indirect:",
      np.max(np.abs(np.r_[direct.beta1, direct.beta2]
                    - np.r_[indirect.beta1, indirect.beta2])))

# %%
# Two stage least squares is the location-only restriction of the indirect
# estimator: pinning every slope multiplier beyond the location equation to
# zero collapses the system to the classical projection formula.
b2sls = two_stage_least_squares(y, data)
restricted = fit_iv_indirect(y, data, location_only=True)
print("2SLS:", np.round(b2sls, 3))
print("restricted indirect:", np.round(restricted.beta1, 3),
      " (difference", np.max(np.abs(restricted.beta1 - b2sls)), ")")

# %%
# The full structural fit also delivers distribution-level output: ranks of
# the structural residuals, independent of the instrument by construction.
zd = build_design(data, use_instruments=True).values
print("instrument moments at the solution:",
      np.abs(zd.T @ direct.e).max() / n,
      np.abs(zd.T @ (direct.e**2 - 1)).max() / (2 * n))
