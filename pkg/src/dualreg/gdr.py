"""Generalized dual regression with pluggable convex bases.

The estimator solves, for a basis of J members, the moment system

    X_j' h_tilde_j(e) = 0,   j = 1, ..., J,

where ``X_j`` carries an intercept column only for the two canonical members
and ``e`` is defined observation by observation through the representation

    y_i = gamma_1 + gamma_2 e_i + (lambda_1 . x_i) + (lambda_2 . x_i) e_i
          + sum_{j>=3} (lambda_j . x_i) h_j(e_i),

with the regressors centered so the higher-order intercept multipliers
vanish. The outer solve is a damped quasi-Newton iteration on the stacked
moments with a finite-difference Jacobian; the inner step inverts the
representation for ``e`` by a bracketed Newton iteration, which requires the
map to be strictly increasing wherever it is probed.

Where the moment system comes from: if the outcome map ``y = H_x(e)`` were
known, a single constraint would suffice. Writing ``Htilde_x`` for the
antiderivative of ``H_x`` in ``e`` (convex exactly when the map is
increasing), maximizing the outcome-residual correlation subject to
``sum_i Htilde_{x_i}(e_i) = S`` assigns residuals correctly provided the
level ``S`` is the right one; at that level the constraint's multiplier is
exactly one and the stationarity conditions read ``y_i = H_{x_i}(e_i)``.
Neither the map nor ``S`` is observable, so the working estimator expands
``Htilde_x`` on a basis with coefficients linear in ``x``; each coefficient
then carries its own orthogonality constraint (zero for the centered slope
blocks, a normalization for the two canonical intercepts), and the unknown
level drops out of the problem. That expansion is what :class:`BasisSpec`
parameterizes and :func:`fit_gdr` estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._newton import column_scales, solve_square
from .basis import BasisSpec, canonical_basis
from .core import Dataset, DesignMatrix, build_design, ecdf_transform
from .exceptions import (
    BracketError,
    InitializationError,
    NonMonotoneMapError,
    NumericalError,
)
from .solver import SolverOptions

__all__ = ["GdrFit", "invert_foc", "gdr_moments", "fit_gdr"]

#: Inversion gives up once the bracket would leave [-BRACKET_LIMIT, BRACKET_LIMIT].
BRACKET_LIMIT = 1e6
#: Residual tolerance of the inner inversion, relative to max(1, |y_i|).
INVERT_RTOL = 1e-12


@dataclass(frozen=True)
class GdrFit:
    """Solution of the generalized problem.

    ``gamma`` holds the two intercept coefficients, ``slopes`` the J rows of
    slope coefficients (one per basis member, ``(k-1)`` entries each), in the
    coordinates of the internally centered regressors; ``column_means``
    records the centering shifts.
    """

    gamma: np.ndarray
    slopes: np.ndarray
    e: np.ndarray
    u: np.ndarray
    converged: bool
    iterations: int
    basis: BasisSpec
    column_means: np.ndarray


def _coef_matrix(design_values: np.ndarray, gamma, slopes) -> np.ndarray:
    """Per-observation basis coefficients beta_j(x_i), shape (n, J)."""
    gamma = np.asarray(gamma, dtype=float).ravel()
    slopes = np.asarray(slopes, dtype=float)
    n = design_values.shape[0]
    J = slopes.shape[0]
    b = np.zeros((n, J))
    b[:, 0] = gamma[0]
    b[:, 1] = gamma[1]
    if slopes.shape[1] > 0:
        b += design_values[:, 1:] @ slopes.T
    return b


def _invert_all(y, coef, basis: BasisSpec, e_init=None) -> np.ndarray:
    """Solve sum_j coef[i, j] h_j(e_i) = y_i for every observation.

    Bracketed Newton with bisection fallback; raises NonMonotoneMapError when
    the map's derivative is non-positive at a probed point, BracketError when
    no sign change exists within the search bounds.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]

    def value(e):
        return np.sum(coef * basis.eval_h(e), axis=1)

    def deriv(e):
        return np.sum(coef * basis.eval_h_prime(e), axis=1)

    def check_increasing(e, active=None):
        d = deriv(e)
        if active is not None:
            d = np.where(active, d, 1.0)
        bad = np.flatnonzero(d <= 0.0)
        if bad.size:
            raise NonMonotoneMapError(index=int(bad[0]))

    if e_init is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            e = np.where(coef[:, 1] > 0.0, (y - coef[:, 0]) / coef[:, 1], 0.0)
        e = np.clip(np.nan_to_num(e, nan=0.0, posinf=0.0, neginf=0.0), -1e3, 1e3)
    else:
        e = np.array(e_init, dtype=float)

    check_increasing(e)

    # Expand a bracket [lo, hi] around the start until it straddles y.
    width = np.ones(n)
    lo = e - width
    hi = e + width
    for _ in range(64):
        below = value(lo) > y
        above = value(hi) < y
        if not below.any() and not above.any():
            break
        width = np.where(below | above, 2.0 * width, width)
        lo = np.where(below, e - width, lo)
        hi = np.where(above, e + width, hi)
        if np.any(width > 2.0 * BRACKET_LIMIT):
            raise BracketError(index=int(np.argmax(width)))
    else:
        raise BracketError(index=int(np.argmax(width)))
    check_increasing(lo)
    check_increasing(hi)

    tol = INVERT_RTOL * np.maximum(1.0, np.abs(y))
    e = np.clip(e, lo, hi)
    for _ in range(100):
        f = value(e) - y
        lo = np.where(f < 0.0, e, lo)
        hi = np.where(f > 0.0, e, hi)
        done = np.abs(f) <= tol
        if done.all():
            return e
        check_increasing(e, active=~done)
        d = deriv(e)
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = e - f / d
        mid = 0.5 * (lo + hi)
        off = ~np.isfinite(trial) | (trial <= lo) | (trial >= hi)
        trial = np.where(off, mid, trial)
        e = np.where(done, e, trial)
    raise NumericalError("inversion of the representation did not converge")


def invert_foc(y_i: float, x_i, gamma, slopes, basis: BasisSpec) -> float:
    """Invert the representation at a single observation.

    ``x_i`` is the raw regressor row (without intercept), in the same
    coordinates as the supplied coefficients.
    """
    x_i = np.atleast_2d(np.asarray(x_i, dtype=float))
    design_row = np.column_stack([np.ones(1), x_i])
    coef = _coef_matrix(design_row, gamma, slopes)
    return float(_invert_all(np.array([y_i], dtype=float), coef, basis)[0])


def _stack_moments(e: np.ndarray, design: DesignMatrix, basis: BasisSpec) -> np.ndarray:
    ht = basis.eval_h_tilde(e)
    n = e.shape[0]
    parts = []
    for j in range(basis.J):
        cols = design.values if basis.with_intercept[j] else design.values[:, 1:]
        parts.append(cols.T @ ht[:, j] / n)
    return np.concatenate(parts)


def _moment_scales(design: DesignMatrix, basis: BasisSpec) -> np.ndarray:
    scales = column_scales(design.values)
    parts = [scales if basis.with_intercept[j] else scales[1:] for j in range(basis.J)]
    return np.concatenate(parts)


def gdr_moments(gamma, slopes, y, design: DesignMatrix, basis: BasisSpec) -> np.ndarray:
    """Stacked orthogonality residuals ``(X_j' h_tilde_j(e))_j / n``.

    The residual vector ``e`` is obtained by inverting the representation at
    the supplied coefficients; inversion failures propagate with the index
    of the offending observation.
    """
    coef = _coef_matrix(design.values, gamma, slopes)
    e = _invert_all(y, coef, basis)
    return _stack_moments(e, design, basis)


def _pack(gamma, slopes):
    return np.concatenate([np.asarray(gamma, float).ravel(), np.asarray(slopes, float).ravel()])


def _unpack(theta, J, p):
    return theta[:2], theta[2:].reshape(J, p)


def _fit_common_structure(
    y: np.ndarray,
    rep_design: DesignMatrix,
    mom_design: DesignMatrix,
    basis: BasisSpec,
    options: SolverOptions,
    theta0: np.ndarray,
):
    """Quasi-Newton solve of the stacked moment system.

    The representation is evaluated on ``rep_design`` while the orthogonality
    constraints weight ``mom_design`` (they coincide for the exogenous
    estimator; instrumental variants project the regressors first).
    """
    J = basis.J
    p = rep_design.k - 1
    scales = _moment_scales(mom_design, basis)
    n = y.shape[0]

    def moments_at(theta, e_init=None):
        gamma, slopes = _unpack(theta, J, p)
        coef = _coef_matrix(rep_design.values, gamma, slopes)
        e = _invert_all(y, coef, basis, e_init)
        return _stack_moments(e, mom_design, basis), e

    def is_converged(g):
        return (
            float(np.max(np.abs(g) / scales)) <= options.tol_grad
            and float(np.max(np.abs(g))) <= options.tol_constraint
        )

    theta = theta0.copy()
    g, e = moments_at(theta)
    iterations = 0
    converged = is_converged(g)
    while not converged and iterations < options.max_iter:
        dim = theta.shape[0]
        jac = np.empty((dim, dim))
        for j in range(dim):
            h = 1e-7 * max(1.0, abs(theta[j]))
            bumped = theta.copy()
            bumped[j] += h
            g_bumped, _ = moments_at(bumped, e_init=e)
            jac[:, j] = (g_bumped - g) / h
        step = solve_square(jac, -g, what="outer moment Jacobian")

        norm0 = float(g @ g)
        t = 1.0
        accepted = False
        while t > 1e-12:
            try:
                g_new, e_new = moments_at(theta + t * step, e_init=e)
            except (NonMonotoneMapError, BracketError, NumericalError):
                t *= 0.5
                continue
            if float(g_new @ g_new) < norm0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        theta = theta + t * step
        g, e = g_new, e_new
        iterations += 1
        converged = is_converged(g)

    gamma, slopes = _unpack(theta, J, p)
    # Accepted solutions must be strictly increasing in e at every point.
    coef = _coef_matrix(rep_design.values, gamma, slopes)
    dyde = np.sum(coef * basis.eval_h_prime(e), axis=1)
    bad = np.flatnonzero(dyde <= 0.0)
    if bad.size:
        raise NonMonotoneMapError(
            "representation is not increasing at the solution", index=int(bad[0])
        )
    return gamma, slopes, e, bool(converged), iterations


def fit_gdr(y, data, basis: BasisSpec | None = None, options: SolverOptions | None = None) -> GdrFit:
    """Fit the generalized model on internally centered regressors.

    Parameters
    ----------
    y : array_like
        Outcomes.
    data : Dataset or array_like
        Regressor columns (a zero-column matrix fits the intercept-only
        model, where ``e`` is simply the standardized outcome).
    basis : BasisSpec, optional
        Defaults to the canonical two-member basis, for which the result
        coincides with :func:`dualreg.solver.fit_dual` on the centered
        design.
    """
    basis = basis or canonical_basis()
    options = options or SolverOptions()
    y = np.asarray(y, dtype=float).ravel()
    x = data.x if isinstance(data, Dataset) else data
    design = build_design(x, center=True)
    p = design.k - 1

    ols, *_ = np.linalg.lstsq(design.values, y, rcond=None)
    resid = y - design.values @ ols
    sd = float(np.sqrt(np.mean(resid**2)))
    if sd <= 1e-13 * max(1.0, float(np.sqrt(np.mean(y**2)))):
        raise InitializationError("least-squares residual scale is zero")
    slopes0 = np.zeros((basis.J, p))
    if p > 0:
        slopes0[0] = ols[1:]
    theta0 = _pack(np.array([ols[0], sd]), slopes0)

    gamma, slopes, e, converged, iterations = _fit_common_structure(
        y, design, design, basis, options, theta0
    )
    _, u = ecdf_transform(e)
    return GdrFit(
        gamma=gamma,
        slopes=slopes,
        e=e,
        u=u,
        converged=converged,
        iterations=iterations,
        basis=basis,
        column_means=design.column_means,
    )
