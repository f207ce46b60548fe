"""Linear quantile regression on a grid and the rearranged CDF benchmark.

Each quantile fit minimizes the check loss exactly by solving the bounded
dual linear program

    max { y'a : X'a = (1 - tau) X'1,  a in [0, 1]^n },

whose equality multipliers are the regression coefficients. The conditional
distribution benchmark integrates the indicator of the fitted quantile
function lying below the outcome over the quantile index,

    u_hat = eps + integral_eps^{1-eps} 1{Q(u|x) <= y} du,

by a midpoint rule, which is monotone in the outcome by construction and
clamps to [eps, 1 - eps].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import DesignMatrix, numerical_rank
from .exceptions import DesignRankError, DomainError, GridError, NumericalError

__all__ = ["QrFit", "fit_qr", "qr_coefficient_process", "rearranged_cdf", "rearranged_quantiles"]


@dataclass(frozen=True)
class QrFit:
    """Quantile-regression coefficient process on a grid.

    ``coefficients[r]`` holds the fitted coefficient vector at ``taus[r]``.
    ``epsilon`` and ``u_grid_size`` configure the rearrangement integral.
    """

    taus: np.ndarray
    coefficients: np.ndarray
    epsilon: float = 0.001
    u_grid_size: int = 999

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        coef = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "coefficients", coef)
        if np.any(np.diff(taus) <= 0):
            raise ValueError("taus must be strictly increasing")
        if not np.all(np.isfinite(coef)):
            raise ValueError("non-finite coefficients")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")

    def coefficients_at(self, u) -> np.ndarray:
        """Coefficients at arbitrary indices, linear between fitted taus and
        constant beyond the extremes; shape (len(u), k)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return np.column_stack(
            [np.interp(u, self.taus, self.coefficients[:, j])
             for j in range(self.coefficients.shape[1])]
        )

    def _integration_points(self) -> tuple[np.ndarray, float]:
        lo, hi = self.epsilon, 1.0 - self.epsilon
        width = (hi - lo) / self.u_grid_size
        mids = lo + (np.arange(self.u_grid_size) + 0.5) * width
        return mids, width


def fit_qr(y, design: DesignMatrix, tau: float) -> np.ndarray:
    """Exact linear quantile regression at a single index.

    Minimizes ``sum_i rho_tau(y_i - b.x_i)`` via the dual linear program;
    the returned coefficients attain the same check loss as enumerating all
    interpolating basic solutions.
    """
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie strictly inside (0, 1)")
    y = np.asarray(y, dtype=float).ravel()
    x = design.values
    if numerical_rank(x) < x.shape[1]:
        raise DesignRankError("design matrix is rank deficient")
    res = linprog(
        -y,
        A_eq=x.T,
        b_eq=(1.0 - tau) * x.sum(axis=0),
        bounds=[(0.0, 1.0)] * x.shape[0],
        method="highs",
    )
    if not res.success:
        raise NumericalError(f"quantile program failed at tau={tau}: {res.message}")
    return -np.asarray(res.eqlin.marginals, dtype=float)


def qr_coefficient_process(y, design: DesignMatrix, tau_grid) -> QrFit:
    """Fit the whole coefficient process, one independent program per index."""
    taus = np.sort(np.asarray(tau_grid, dtype=float).ravel())
    coef = np.empty((taus.shape[0], design.k))
    for r, tau in enumerate(taus):
        try:
            coef[r] = fit_qr(y, design, tau)
        except NumericalError as err:
            raise NumericalError(f"quantile fit failed at grid index {r}: {err}") from err
    return QrFit(taus=taus, coefficients=coef)


def _check_coverage(fit: QrFit):
    gaps = np.diff(fit.taus)
    step = float(np.max(gaps)) if gaps.size else np.inf
    lo, hi = fit.epsilon, 1.0 - fit.epsilon
    if fit.taus[0] > lo + step or fit.taus[-1] < hi - step:
        raise GridError(
            f"tau grid [{fit.taus[0]:g}, {fit.taus[-1]:g}] does not cover "
            f"[{lo:g}, {hi:g}] within one grid step"
        )


def rearranged_cdf(fit: QrFit, x_row, y_value: float) -> float:
    """Monotone conditional distribution estimate at one point.

    ``x_row`` is the design row including the intercept. The value is the
    fraction of the quantile-index grid at which the fitted conditional
    quantile lies below ``y_value``, shifted into [epsilon, 1 - epsilon].
    """
    _check_coverage(fit)
    x_row = np.asarray(x_row, dtype=float).ravel()
    mids, width = fit._integration_points()
    q = fit.coefficients_at(mids) @ x_row
    return float(fit.epsilon + width * np.sum(q <= y_value))


def rearranged_cdf_batch(fit: QrFit, design_rows: np.ndarray, y_values: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rearranged_cdf` across observations."""
    _check_coverage(fit)
    mids, width = fit._integration_points()
    q = fit.coefficients_at(mids) @ np.asarray(design_rows, dtype=float).T
    below = q <= np.asarray(y_values, dtype=float)[None, :]
    return fit.epsilon + width * below.sum(axis=0)


def rearranged_quantiles(fit: QrFit, x_row, u_levels, y_grid) -> np.ndarray:
    """Invert the rearranged CDF on an outcome grid.

    Returns, for each requested level, the smallest grid outcome whose
    rearranged CDF reaches the level (the last grid point if none does).
    The resolution of the answer is that of ``y_grid``.
    """
    y_grid = np.asarray(y_grid, dtype=float).ravel()
    u_levels = np.atleast_1d(np.asarray(u_levels, dtype=float))
    x_row = np.asarray(x_row, dtype=float).ravel()
    cdf = rearranged_cdf_batch(fit, np.tile(x_row, (y_grid.shape[0], 1)), y_grid)
    idx = np.searchsorted(cdf, u_levels, side="left")
    return y_grid[np.minimum(idx, y_grid.shape[0] - 1)]
