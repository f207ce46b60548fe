"""
Location-scale fit on Engel-style data
======================================

This example fits the workhorse estimator on a simulated food-expenditure
dataset: one pass of the solver delivers the location and scale multipliers,
per-observation conditional distribution values, and the whole family of
conditional quantile curves, with no crossing anywhere in the sample range.
"""

# %%
# Draw a sample calibrated to the classic Engel household data: income is a
# left-truncated normal and food expenditure follows a linear
# heteroscedastic model around it.
import numpy as np

from dualreg import DgpSpec, draw_sample, build_design, fit_dual

spec = DgpSpec(n=235, seed=7)
y, x, eps_true, u_true = draw_sample(spec)
design = build_design(x[:, None])

# %%
# One fit gives both coefficient blocks at once. lambda1 is the location
# function (intercept, slope), lambda2 the scale function: dispersion of
# food expenditure rises with income.
fit = fit_dual(y, design)
print("converged:", fit.converged, "in", fit.iterations, "iterations")
print("location multipliers:", np.round(fit.lambda1, 3))
print("scale multipliers:   ", np.round(fit.lambda2, 4))
print("duality check (y'e vs program value):",
      fit.objective_dual - fit.objective_primal)

# %%
# The fitted ranks u estimate the conditional distribution value of every
# observation. Against the truth of the simulation they are accurate to a
# few percent at n = 235.
print("max |u - true u|:", np.abs(fit.u - u_true).max())
print("mean |u - true u|:", np.abs(fit.u - u_true).mean())

# %%
# Quantile-coefficient curves come from the same multipliers: evaluate
# beta(u) = lambda1 + lambda2 * Fninv(u) on a grid and trace the conditional
# quantile lines. Positivity of the fitted scale at every sample point
# guarantees the lines never cross over the observed income range.
from dualreg import quantile_coefficients

levels = np.arange(1, 10) / 10.0
beta = quantile_coefficients(fit, levels)
lines = design.values @ beta.T
print("lines ordered at every observation:", bool(np.all(np.diff(lines, axis=1) > 0)))

# %%
# Plot the sample with the nine fitted quantile curves.
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

order = np.argsort(x)
fig, ax = plt.subplots(figsize=(7, 5))
ax.scatter(x, y, s=8, alpha=0.4, color="gray")
for j, u in enumerate(levels):
    ax.plot(x[order], lines[order, j], lw=1.2)
ax.set_xlabel("household income")
ax.set_ylabel("food expenditure")
ax.set_title("Conditional quantile curves from one location-scale fit")
fig.tight_layout()
fig.savefig("demo01_quantile_curves.png", dpi=120)
print("wrote demo01_quantile_curves.png")
