"""Location-scale dual regression by minimization of the concentrated program.

The estimator maximizes ``y'e`` over residual assignments subject to the
orthogonality constraints ``X'e = 0`` and ``X'(e^2 - 1)/2 = 0``. Its
minimization counterpart in the 2k multipliers,

    sum_i  0.5 * [((y_i - lambda1.x_i) / (lambda2.x_i))^2 + 1] * (lambda2.x_i),

is smooth on the cone ``{lambda2 : lambda2.x_i > 0 for all i}`` and is solved
here with a damped Newton method: analytic gradient and Hessian, a
fraction-to-boundary cap keeping all scales positive along the path, a
Levenberg shift when the Newton system loses definiteness, and a short
log-barrier continuation that steers the early iterates clear of the cone
boundary. At the solution the two program values coincide, which
:func:`duality_gap` exposes as a correctness diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._newton import boundary_step_cap, column_scales, descent_direction, solve_square
from .core import DesignMatrix, ecdf_transform, numerical_rank, scale_values
from .exceptions import (
    DesignRankError,
    InitializationError,
    ScaleNotPositiveError,
)

__all__ = [
    "SolverOptions",
    "DualFit",
    "MomentReport",
    "CovarianceEstimate",
    "primal_objective",
    "primal_gradient",
    "fit_dual",
    "duality_gap",
    "moment_report",
    "covariance",
]


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and safeguards for the Newton solver.

    Parameters
    ----------
    tol_grad : float
        Convergence threshold on the max-abs column-scaled gradient.
    tol_constraint : float
        Threshold on the max-abs moment residuals ``X'e/n`` and
        ``X'(e^2-1)/(2n)``.
    max_iter : int
        Iteration cap; the best iterate is returned with ``converged=False``
        when it is reached.
    boundary_fraction : float
        Fraction-to-boundary parameter in (0, 1); step lengths are capped so
        every scale retains at least ``1 - boundary_fraction`` of its value.
    init : {"ols", "provided"}
        Starting point rule. ``"ols"`` uses least squares for the location
        multipliers and the residual standard deviation for the scale
        intercept; ``"provided"`` uses ``init_lambda1``/``init_lambda2``.
    """

    tol_grad: float = 1e-10
    tol_constraint: float = 1e-8
    max_iter: int = 200
    boundary_fraction: float = 0.995
    init: str = "ols"
    init_lambda1: np.ndarray | None = None
    init_lambda2: np.ndarray | None = None

    def __post_init__(self):
        if self.tol_grad <= 0 or self.tol_constraint <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.boundary_fraction < 1.0:
            raise ValueError("boundary_fraction must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.init not in ("ols", "provided"):
            raise ValueError("init must be 'ols' or 'provided'")
        if self.init == "provided" and (
            self.init_lambda1 is None or self.init_lambda2 is None
        ):
            raise ValueError("init='provided' requires init_lambda1 and init_lambda2")


@dataclass(frozen=True)
class DualFit:
    """Solution of the dual regression problem.

    Attributes
    ----------
    lambda1, lambda2 : ndarray, shape (k,)
        Location and scale multipliers.
    e : ndarray, shape (n,)
        Fitted residuals.
    u : ndarray, shape (n,)
        Rank transform of ``e``, strictly inside (0, 1).
    objective_dual : float
        ``y'e`` at the solution.
    objective_primal : float
        Value of the minimization program (sum form), equal to
        ``objective_dual`` at convergence.
    """

    lambda1: np.ndarray
    lambda2: np.ndarray
    e: np.ndarray
    u: np.ndarray
    objective_dual: float
    objective_primal: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class MomentReport:
    """Scaled orthogonality residuals ``g1 = X'e/n`` and
    ``g2 = X'(e^2-1)/(2n)``."""

    g1: np.ndarray
    g2: np.ndarray
    max_abs: float


@dataclass(frozen=True)
class CovarianceEstimate:
    """Sandwich covariance for the stacked multipliers (lambda1, lambda2)."""

    vcov: np.ndarray
    se: np.ndarray


def _split(lam: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    return lam[:k], lam[k:]


def primal_objective(lambda1, lambda2, y, design: DesignMatrix) -> float:
    """Value of the minimization program, in sum (not mean) form.

    The sum form makes the optimal value equal to ``y'e`` exactly, so the
    duality gap can be used as a convergence oracle.
    """
    y = np.asarray(y, dtype=float).ravel()
    s = scale_values(design, lambda2)
    e = (y - design.values @ np.asarray(lambda1, dtype=float)) / s
    return float(0.5 * np.sum((e**2 + 1.0) * s))


def primal_gradient(lambda1, lambda2, y, design: DesignMatrix) -> np.ndarray:
    """Gradient of :func:`primal_objective` in the stacked multipliers.

    Equals ``(-X'e, -X'(e^2 - 1)/2)``, i.e. minus the moment conditions: a
    stationary point of the program satisfies the orthogonality constraints.
    """
    y = np.asarray(y, dtype=float).ravel()
    s = scale_values(design, lambda2)
    e = (y - design.values @ np.asarray(lambda1, dtype=float)) / s
    x = design.values
    return np.concatenate([-x.T @ e, -0.5 * (x.T @ (e**2 - 1.0))])


def _objective_gradient_hessian(lam, y, x, mu: float = 0.0):
    """Objective, gradient, Hessian, and residuals at stacked multipliers.

    With ``mu > 0`` the quantities are those of the log-barrier composite
    ``f - mu * sum_i log(lambda2 . x_i)`` used by the continuation stages.
    """
    k = x.shape[1]
    lam1, lam2 = _split(lam, k)
    s = x @ lam2
    if np.any(s <= 0.0):
        raise ScaleNotPositiveError(int(np.argmax(s <= 0.0)))
    e = (y - x @ lam1) / s
    f = float(0.5 * np.sum((e**2 + 1.0) * s))
    grad = np.concatenate([-x.T @ e, -0.5 * (x.T @ (e**2 - 1.0))])
    # Per-observation blocks (1/s) * [1, e; e, e^2] (x) x x', assembled densely.
    xw = x / s[:, None]
    h11 = x.T @ xw
    h12 = x.T @ (xw * e[:, None])
    h22 = x.T @ (xw * (e**2)[:, None])
    hess = np.block([[h11, h12], [h12.T, h22]])
    if mu > 0.0:
        f -= mu * float(np.sum(np.log(s)))
        grad[k:] -= mu * (x.T @ (1.0 / s))
        hess[k:, k:] += mu * ((x / (s**2)[:, None]).T @ x)
    return f, grad, hess, e, s


def _initial_multipliers(y, x, options: SolverOptions) -> np.ndarray:
    k = x.shape[1]
    if options.init == "provided":
        lam = np.concatenate(
            [
                np.asarray(options.init_lambda1, dtype=float).ravel(),
                np.asarray(options.init_lambda2, dtype=float).ravel(),
            ]
        )
        if lam.shape[0] != 2 * k:
            raise ValueError(f"provided multipliers must stack to length {2 * k}")
        return lam
    beta, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ beta
    sd = float(np.sqrt(np.mean(resid**2)))
    if sd <= 1e-13 * max(1.0, float(np.sqrt(np.mean(y**2)))):
        raise InitializationError("least-squares residual scale is zero")
    lam = np.zeros(2 * k)
    lam[:k] = beta
    lam[k] = sd
    return lam


def _backtrack(lam, step, cap, y, x, mu, accept):
    """Halve the step from ``cap`` until ``accept(t, state)`` holds."""
    t = cap
    while t > 1e-14:
        try:
            state = _objective_gradient_hessian(lam + t * step, y, x, mu)
        except ScaleNotPositiveError:
            t *= 0.5
            continue
        if accept(t, state):
            return t, state
        t *= 0.5
    return None


def fit_dual(y, design: DesignMatrix, options: SolverOptions | None = None) -> DualFit:
    """Fit the location-scale dual regression by damped Newton.

    The minimization runs in two phases. A short log-barrier continuation
    keeps the iterates away from the boundary of the feasibility cone
    (small samples can pull the path toward a vanishing scale at an extreme
    design point even when the minimum is interior); a final Newton polish
    with a fraction-to-boundary cap then drives the plain stationarity
    system to tolerance. Samples whose minimization program has no interior
    stationary point come back with ``converged=False``.

    Raises
    ------
    DesignRankError
        If the design is rank deficient.
    InitializationError
        If no feasible starting point exists (zero residual scale).
    """
    options = options or SolverOptions()
    y = np.asarray(y, dtype=float).ravel()
    x = design.values
    n, k = x.shape
    if numerical_rank(x) < k:
        raise DesignRankError("design matrix is rank deficient")

    scales = column_scales(x)
    moment_scale = np.concatenate([scales, scales])

    def scaled_max(grad):
        return float(np.max(np.abs(grad) / (n * moment_scale)))

    def is_converged(grad):
        return (
            scaled_max(grad) <= options.tol_grad
            and float(np.max(np.abs(grad))) / n <= options.tol_constraint
        )

    lam = _initial_multipliers(y, x, options)
    f0, grad0 = _objective_gradient_hessian(lam, y, x)[:2]
    iterations = 0

    # Barrier continuation: damped Newton on f - mu * sum log(scale), with mu
    # shrinking geometrically, traces the central path toward the interior
    # minimum without jamming against the cone boundary.
    mu = 0.1 * max(f0, 1.0) / n if not is_converged(grad0) else 0.0
    mu_floor = 1e-12 * max(f0, 1.0) / n
    while mu > mu_floor and iterations < options.max_iter:
        f, grad, hess, e, s = _objective_gradient_hessian(lam, y, x, mu)
        stage_tol = max(options.tol_grad, 0.05 * mu * float(np.mean(1.0 / s)) / n)
        for _ in range(12):
            if scaled_max(grad) <= stage_tol or iterations >= options.max_iter:
                break
            step = descent_direction(hess, grad)
            cap = boundary_step_cap(s, x @ step[k:], options.boundary_fraction)
            slope = float(grad @ step)
            found = _backtrack(
                lam, step, cap, y, x, mu, lambda t, st: st[0] <= f + 1e-4 * t * slope
            )
            if found is None:
                break
            t, (f, grad, hess, e, s) = found
            lam = lam + t * step
            iterations += 1
        mu *= 0.1

    # Final polish on the plain objective.
    f, grad, hess, e, s = _objective_gradient_hessian(lam, y, x)

    def scaled_norm(grad):
        return float(np.linalg.norm(grad / moment_scale))

    converged = is_converged(grad)
    while not converged and iterations < options.max_iter:
        step = descent_direction(hess, grad)
        cap = boundary_step_cap(s, x @ step[k:], options.boundary_fraction)
        slope = float(grad @ step)
        gnorm = scaled_norm(grad)
        # Objective decreases below this are indistinguishable from rounding;
        # past that point the search damps on the stationarity system instead.
        f_noise = 64.0 * np.finfo(float).eps * (1.0 + abs(f))

        found = _backtrack(
            lam, step, cap, y, x, 0.0, lambda t, st: st[0] <= f + 1e-4 * t * slope
        )
        if found is None or f - found[1][0] <= f_noise:
            polish = _backtrack(
                lam,
                step,
                cap,
                y,
                x,
                0.0,
                lambda t, st: scaled_norm(st[1]) <= (1.0 - 1e-4 * t) * gnorm,
            )
            found = polish
            if found is None:
                break  # stagnated at the joint floor of objective and gradient
        t, (f, grad, hess, e, s) = found
        lam = lam + t * step
        iterations += 1
        converged = is_converged(grad)

    lam1, lam2 = _split(lam, k)
    _, u = ecdf_transform(e)
    return DualFit(
        lambda1=lam1,
        lambda2=lam2,
        e=e,
        u=u,
        objective_dual=float(y @ e),
        objective_primal=f,
        converged=bool(converged),
        iterations=iterations,
    )


def duality_gap(fit: DualFit, y) -> float:
    """Relative gap between ``y'e`` and the minimization-program value.

    At a converged fit the gap is below 1e-8; a large gap flags an iterate
    that has not actually solved the program.
    """
    y = np.asarray(y, dtype=float).ravel()
    dual = float(y @ fit.e)
    return abs(dual - fit.objective_primal) / max(1.0, abs(dual))


def moment_report(fit: DualFit, design: DesignMatrix) -> MomentReport:
    """Orthogonality residuals of the fit, scaled by the sample size."""
    x = design.values
    n = x.shape[0]
    g1 = x.T @ fit.e / n
    g2 = x.T @ (fit.e**2 - 1.0) / (2.0 * n)
    max_abs = float(max(np.max(np.abs(g1)), np.max(np.abs(g2))))
    return MomentReport(g1=g1, g2=g2, max_abs=max_abs)


def covariance(fit: DualFit, y, design: DesignMatrix) -> CovarianceEstimate:
    """Sandwich covariance ``G^{-1} Omega G^{-T} / n`` for the multipliers.

    ``G`` is the Jacobian of the stacked moment conditions with respect to
    (lambda1, lambda2) and ``Omega`` the outer product of per-observation
    moment contributions.

    Raises
    ------
    SingularJacobianError
        If ``G`` is numerically singular (e.g. duplicated design columns).
    """
    x = design.values
    n, k = x.shape
    e = fit.e
    s = scale_values(design, fit.lambda2)

    xw = x / s[:, None]
    g11 = x.T @ xw
    g12 = x.T @ (xw * e[:, None])
    g22 = x.T @ (xw * (e**2)[:, None])
    g = -np.block([[g11, g12], [g12.T, g22]]) / n

    m = np.column_stack([x * e[:, None], 0.5 * x * (e**2 - 1.0)[:, None]])
    omega = m.T @ m / n

    ginv_omega = solve_square(g, omega, what="moment Jacobian")
    vcov = solve_square(g, ginv_omega.T, what="moment Jacobian").T / n
    vcov = 0.5 * (vcov + vcov.T)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    return CovarianceEstimate(vcov=vcov, se=se)
