"""Small shared pieces of the damped Newton machinery."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import SingularJacobianError

#: Condition-number cutoff beyond which a square solve is treated as singular.
COND_LIMIT = 1e12


def column_scales(values: np.ndarray) -> np.ndarray:
    """Per-column magnitude max(1, rms) used to scale moment tolerances."""
    rms = np.sqrt(np.mean(values**2, axis=0))
    return np.maximum(1.0, rms)


def boundary_step_cap(s: np.ndarray, ds: np.ndarray, fraction: float) -> float:
    """Largest step t <= 1 keeping s + t*ds >= (1 - fraction) * s elementwise.

    The usual fraction-to-boundary rule for quantities that must stay
    strictly positive along the iterate path.
    """
    shrinking = ds < 0.0
    if not np.any(shrinking):
        return 1.0
    return float(min(1.0, fraction * np.min(s[shrinking] / -ds[shrinking])))


def descent_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Solve hess @ d = -grad by Cholesky, adding a Levenberg shift when the
    factorization fails (starting at 1e-8 * ||hess|| and escalating x10)."""
    dim = hess.shape[0]
    shift = 0.0
    base = 1e-8 * np.linalg.norm(hess, 2)
    for _ in range(60):
        try:
            factor = scipy.linalg.cho_factor(hess + shift * np.eye(dim), lower=True)
            return scipy.linalg.cho_solve(factor, -grad)
        except scipy.linalg.LinAlgError:
            shift = base if shift == 0.0 else 10.0 * shift
            if base == 0.0:
                base = shift = 1e-8
    raise SingularJacobianError("could not regularize the Newton system")


def solve_square(a: np.ndarray, b: np.ndarray, what: str = "system") -> np.ndarray:
    """Solve a @ x = b, raising SingularJacobianError when a is numerically
    singular."""
    if not np.all(np.isfinite(a)):
        raise SingularJacobianError(f"{what} contains non-finite entries")
    if a.size == 0:
        return np.zeros(0)
    if np.linalg.cond(a) > COND_LIMIT:
        raise SingularJacobianError(f"{what} is singular or near-singular")
    return np.linalg.solve(a, b)


def damped_root_step(jac: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """Levenberg-Marquardt step for an ill-conditioned root-finding iterate.

    Solves (J'J + mu I) d = -J'r with mu escalating until the normal matrix
    factors; always a descent direction for the residual norm.
    """
    jtj = jac.T @ jac
    rhs = -jac.T @ residual
    dim = jtj.shape[0]
    mu = 1e-10 * max(np.linalg.norm(jtj, 2), 1e-30)
    for _ in range(60):
        try:
            factor = scipy.linalg.cho_factor(jtj + mu * np.eye(dim), lower=True)
            return scipy.linalg.cho_solve(factor, rhs)
        except scipy.linalg.LinAlgError:
            mu *= 10.0
    raise SingularJacobianError("could not regularize the root-finding step")
