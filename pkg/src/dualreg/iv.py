"""Structural distribution estimation under instruments.

Two routes are provided for the single-equation model in which the
structural error is independent of an instrument Z rather than of the
regressors themselves.

Direct orthogonality parameterizes the residual as
``e(y, x, beta) = (y - beta1.x) / (beta2.x)`` and solves the just-identified
moment system ``Z'e = 0``, ``Z'(e^2 - 1)/2 = 0`` for the 2k structural
parameters; the constraint multipliers are then recovered from the
stationarity conditions observation by observation. Indirect
instrumentation replaces the instrument columns by the fitted values of a
linear first stage E(X|Z); for the canonical two-member basis this is the
same moment system with the projected regressors as weights, and pinning
the slope multipliers beyond the location equation to zero collapses it to
classical two stage least squares.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._newton import boundary_step_cap, column_scales, damped_root_step, solve_square
from .basis import BasisSpec
from .core import Dataset, DesignMatrix, build_design, ecdf_transform, numerical_rank
from .exceptions import (
    DataError,
    DesignRankError,
    NotJustIdentifiedError,
    ScaleNotPositiveError,
    SingularJacobianError,
)
from .gdr import _fit_common_structure, _pack
from .solver import SolverOptions

__all__ = [
    "FirstStage",
    "IvFit",
    "first_stage",
    "two_stage_least_squares",
    "fit_iv_direct",
    "fit_iv_indirect",
    "recover_multipliers",
    "covariance_iv",
]


@dataclass(frozen=True)
class FirstStage:
    """Linear projection of the design columns on the instrument design.

    ``coefficients`` maps instrument design columns to regressor design
    columns (shape m x k); ``fitted`` holds the projections, intercept
    column preserved.
    """

    coefficients: np.ndarray
    fitted: np.ndarray


@dataclass(frozen=True)
class IvFit:
    """Structural location-scale fit under instrument orthogonality.

    ``beta1``/``beta2`` are the structural location and scale parameters;
    ``lambda1``/``lambda2`` the multipliers on the instrument constraints
    (populated for converged direct fits). For bases with more than two
    members the higher-order slope coefficients live in ``higher_order``
    and the coordinates are those of the internally centered regressors,
    recorded in ``column_means``.
    """

    beta1: np.ndarray
    beta2: np.ndarray
    e: np.ndarray
    u: np.ndarray
    method: str
    converged: bool
    iterations: int
    lambda1: np.ndarray | None = None
    lambda2: np.ndarray | None = None
    higher_order: np.ndarray | None = None
    column_means: np.ndarray | None = None


def first_stage(dataset: Dataset) -> FirstStage:
    """Regress every design column on the instrument design ``[1 | Z]``."""
    if dataset.z is None:
        raise DataError("dataset has no instrument columns")
    zd = build_design(dataset, use_instruments=True)
    xd = build_design(dataset)
    coef, *_ = np.linalg.lstsq(zd.values, xd.values, rcond=None)
    fitted = zd.values @ coef
    return FirstStage(coefficients=coef, fitted=fitted)


def two_stage_least_squares(y, dataset: Dataset) -> np.ndarray:
    """Closed-form two stage least squares coefficients.

    Equals ``(X' P_Z X)^{-1} X' P_Z y`` with ``P_Z`` the projection on the
    instrument design; requires at least as many instrument columns as
    regressor columns.
    """
    if dataset.m is None or dataset.m < dataset.k:
        raise DataError(
            f"two stage least squares needs m >= k, got m={dataset.m}, k={dataset.k}"
        )
    y = np.asarray(y, dtype=float).ravel()
    fitted = first_stage(dataset).fitted
    if numerical_rank(fitted) < fitted.shape[1]:
        raise DesignRankError("projected design is rank deficient")
    coef, *_ = np.linalg.lstsq(fitted, y, rcond=None)
    return coef


def _moment_system(y, x, w, beta):
    """Moments, residuals, scales, and the analytic Jacobian at ``beta``."""
    n, k = x.shape
    beta1, beta2 = beta[:k], beta[k:]
    s = x @ beta2
    if np.any(s <= 0.0):
        raise ScaleNotPositiveError(int(np.argmax(s <= 0.0)))
    e = (y - x @ beta1) / s
    f = np.concatenate([w.T @ e, 0.5 * (w.T @ (e**2 - 1.0))]) / n
    xw = x / s[:, None]
    j11 = w.T @ xw
    j12 = w.T @ (xw * e[:, None])
    j22 = w.T @ (xw * (e**2)[:, None])
    jac = -np.block([[j11, j12], [j12, j22]]) / n
    return f, e, s, jac


def _solve_orthogonality(y, x, w, beta0, options: SolverOptions, mask=None):
    """Damped Newton on the instrument moment system.

    ``mask`` restricts the solve to a subset of the stacked parameters (the
    matching moment rows are kept, so the system stays square).
    """
    n, k = x.shape
    scales = np.concatenate([column_scales(w)] * 2)
    mask = np.ones(2 * k, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    beta = beta0.copy()
    f, e, s, jac = _moment_system(y, x, w, beta)

    def is_converged(f):
        fa = np.abs(f[mask])
        return (
            float(np.max(fa / scales[mask])) <= options.tol_grad
            and float(np.max(fa)) <= options.tol_constraint
        )

    iterations = 0
    converged = is_converged(f)
    while not converged and iterations < options.max_iter:
        step = np.zeros(2 * k)
        try:
            step[mask] = solve_square(
                jac[np.ix_(mask, mask)], -f[mask], what="instrument moment Jacobian"
            )
        except SingularJacobianError:
            if iterations == 0:
                raise  # structural: degenerate instruments, not a bad iterate
            step[mask] = damped_root_step(jac[np.ix_(mask, mask)], f[mask])
        ds = x @ step[k:]
        t = boundary_step_cap(s, ds, options.boundary_fraction)
        norm0 = float(f[mask] @ f[mask])
        accepted = False
        while t > 1e-14:
            try:
                f_new, e_new, s_new, jac_new = _moment_system(y, x, w, beta + t * step)
            except ScaleNotPositiveError:
                t *= 0.5
                continue
            if float(f_new[mask] @ f_new[mask]) < norm0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        beta = beta + t * step
        f, e, s, jac = f_new, e_new, s_new, jac_new
        iterations += 1
        converged = is_converged(f)
    return beta, e, bool(converged), iterations


def _init_beta(y, dataset: Dataset) -> np.ndarray:
    """Feasible start: 2SLS location, falling back to least squares when the
    projection is degenerate, with the residual spread as scale intercept."""
    k = dataset.k
    xd = build_design(dataset)
    y = np.asarray(y, dtype=float).ravel()
    try:
        b0 = two_stage_least_squares(y, dataset)
    except (DataError, DesignRankError):
        b0 = np.linalg.lstsq(xd.values, y, rcond=None)[0]
    beta0 = np.zeros(2 * k)
    beta0[:k] = b0
    resid = y - xd.values @ b0
    beta0[k] = max(float(np.sqrt(np.mean(resid**2))), 1e-8)
    return beta0


def fit_iv_direct(y, dataset: Dataset, options: SolverOptions | None = None) -> IvFit:
    """Solve the just-identified direct orthogonality system.

    Requires as many instrument columns as regressor columns; the 2m moment
    equations then determine the 2k structural parameters outright. The
    constraint multipliers are recovered afterwards and, with Z = X, equal
    the structural parameters.
    """
    options = options or SolverOptions()
    if dataset.m is None:
        raise DataError("dataset has no instrument columns")
    if dataset.m != dataset.k:
        raise NotJustIdentifiedError(
            f"direct orthogonality handles the just-identified case only "
            f"(m={dataset.m}, k={dataset.k})"
        )
    y = np.asarray(y, dtype=float).ravel()
    xd = build_design(dataset)
    # No rank gate on the instrument design: a degenerate instrument shows
    # up as a singular moment Jacobian instead.
    zd_values = np.column_stack([np.ones(dataset.n), dataset.z])

    beta, e, converged, iterations = _solve_orthogonality(
        y, xd.values, zd_values, _init_beta(y, dataset), options
    )
    _, u = ecdf_transform(e)
    k = dataset.k
    fit = IvFit(
        beta1=beta[:k],
        beta2=beta[k:],
        e=e,
        u=u,
        method="direct",
        converged=converged,
        iterations=iterations,
    )
    if converged:
        lam1, lam2 = recover_multipliers(fit, y, dataset)
        fit = replace(fit, lambda1=lam1, lambda2=lam2)
    return fit


def recover_multipliers(fit: IvFit, y, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Back out the constraint multipliers from the stationarity conditions.

    Solves the 2k linear equations
    ``sum_i [y_i - lambda1.z_i - (lambda2.z_i) e_i] * de_i/dbeta_j = 0``
    using the analytic derivatives of the parametric residual.
    """
    y = np.asarray(y, dtype=float).ravel()
    xd = build_design(dataset)
    x = xd.values
    z = np.column_stack([np.ones(dataset.n), dataset.z])
    s = x @ fit.beta2
    bad = np.flatnonzero(s <= 0.0)
    if bad.size:
        raise ScaleNotPositiveError(int(bad[0]))
    e = fit.e
    d = np.column_stack([-x / s[:, None], -x * (e / s)[:, None]])
    a = d.T @ np.column_stack([z, z * e[:, None]])
    b = d.T @ y
    lam = solve_square(a, b, what="multiplier system")
    m = dataset.m
    return lam[:m], lam[m:]


def fit_iv_indirect(
    y,
    dataset: Dataset,
    basis: BasisSpec | None = None,
    options: SolverOptions | None = None,
    location_only: bool = False,
) -> IvFit:
    """Estimate the structural representation with projected-regressor moments.

    The orthogonality constraints weight the first-stage fitted values
    E(X|Z) instead of the instruments themselves. With the canonical
    two-member basis this solves the direct system with the projections in
    place of Z (identical to the exogenous estimator when Z = X); richer
    bases follow the generalized representation on centered regressors.
    ``location_only`` pins every slope multiplier beyond the location
    equation to zero, which reproduces classical two stage least squares.
    """
    options = options or SolverOptions()
    y = np.asarray(y, dtype=float).ravel()
    if dataset.m is None or dataset.m < dataset.k:
        raise DataError(
            f"indirect instrumentation needs m >= k, got m={dataset.m}, k={dataset.k}"
        )
    k = dataset.k
    fs = first_stage(dataset)
    if numerical_rank(fs.fitted) < k:
        raise DesignRankError("projected design is rank deficient")

    if basis is not None and basis.J > 2:
        if location_only:
            raise ValueError("location_only applies to the canonical basis only")
        return _fit_indirect_generalized(y, dataset, basis, options)

    xd = build_design(dataset)
    mask = None
    if location_only:
        mask = np.zeros(2 * k, dtype=bool)
        mask[: k + 1] = True  # location block plus the scale intercept
    beta, e, converged, iterations = _solve_orthogonality(
        y, xd.values, fs.fitted, _init_beta(y, dataset), options, mask=mask
    )
    _, u = ecdf_transform(e)
    return IvFit(
        beta1=beta[:k],
        beta2=beta[k:],
        e=e,
        u=u,
        method="indirect",
        converged=converged,
        iterations=iterations,
    )


def _fit_indirect_generalized(y, dataset: Dataset, basis: BasisSpec, options: SolverOptions) -> IvFit:
    """Indirect estimation for bases beyond the canonical pair.

    Centers the regressors, projects the centered design on the instrument
    design, and solves the generalized moment system with the projections as
    constraint weights.
    """
    rep_design = build_design(dataset.x, center=True)
    zd = build_design(dataset, use_instruments=True)
    coef, *_ = np.linalg.lstsq(zd.values, rep_design.values, rcond=None)
    w = zd.values @ coef
    if numerical_rank(w) < w.shape[1]:
        raise DesignRankError("projected centered design is rank deficient")
    mom_design = DesignMatrix(values=w, has_intercept=True, centered=True)

    p = rep_design.k - 1
    ols, *_ = np.linalg.lstsq(rep_design.values, y, rcond=None)
    resid = y - rep_design.values @ ols
    sd = max(float(np.sqrt(np.mean(resid**2))), 1e-8)
    slopes0 = np.zeros((basis.J, p))
    slopes0[0] = ols[1:]
    theta0 = _pack(np.array([ols[0], sd]), slopes0)

    gamma, slopes, e, converged, iterations = _fit_common_structure(
        y, rep_design, mom_design, basis, options, theta0
    )
    _, u = ecdf_transform(e)
    return IvFit(
        beta1=np.concatenate([[gamma[0]], slopes[0]]),
        beta2=np.concatenate([[gamma[1]], slopes[1]]),
        e=e,
        u=u,
        method="indirect",
        converged=converged,
        iterations=iterations,
        higher_order=slopes[2:] if basis.J > 2 else None,
        column_means=rep_design.column_means,
    )


def covariance_iv(fit: IvFit, y, dataset: Dataset):
    """Sandwich covariance of the structural parameters.

    Applies the method-of-moments sandwich to the instrument moment system
    (direct fits) or its projected-regressor counterpart (indirect
    canonical fits). Projections are treated as known.
    """
    from .solver import CovarianceEstimate

    if fit.higher_order is not None:
        raise ValueError("covariance is available for the canonical basis only")
    y = np.asarray(y, dtype=float).ravel()
    xd = build_design(dataset)
    if fit.method == "direct":
        w = np.column_stack([np.ones(dataset.n), dataset.z])
    else:
        w = first_stage(dataset).fitted
    n = xd.n
    beta = np.concatenate([fit.beta1, fit.beta2])
    _, e, s, jac = _moment_system(y, xd.values, w, beta)
    m = np.column_stack([w * e[:, None], 0.5 * w * (e**2 - 1.0)[:, None]])
    omega = m.T @ m / n
    jinv_omega = solve_square(jac, omega, what="moment Jacobian")
    vcov = solve_square(jac, jinv_omega.T, what="moment Jacobian").T / n
    vcov = 0.5 * (vcov + vcov.T)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    return CovarianceEstimate(vcov=vcov, se=se)
