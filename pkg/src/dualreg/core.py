"""Data containers, design matrices, and the location-scale identities.

This module holds everything the estimators share: the sample container,
design-matrix construction with centering and rank checks, the empirical
distribution transform of residuals, and the algebra linking multipliers,
residuals, and quantile coefficients in the linear location-scale
representation ``y_i = lambda1.x_i + (lambda2.x_i) e_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.stats import rankdata

from .exceptions import DataError, DesignRankError, DomainError, ScaleNotPositiveError

__all__ = [
    "Dataset",
    "DesignMatrix",
    "Ecdf",
    "build_design",
    "ecdf_transform",
    "residual_from_multipliers",
    "reconstruct_y",
    "quantile_coefficients",
]

#: Relative pivot tolerance for declaring a design column linearly dependent.
RANK_TOL = 1e-10


def _as_matrix(a, name: str) -> np.ndarray:
    """Coerce to a 2-d float array; 1-d input becomes a single column."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataError(f"{name} must be a vector or matrix, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class Dataset:
    """A sample of outcomes, regressors, and optional instruments.

    Parameters
    ----------
    y : ndarray, shape (n,)
        Outcome values.
    x : ndarray, shape (n, k-1)
        Raw regressor columns, without an intercept. May have zero columns
        for an intercept-only model.
    z : ndarray, shape (n, m-1), optional
        Raw instrument columns, without an intercept.
    y_name, x_names, z_names
        Column labels, used by file front ends.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray | None = None
    y_name: str = "y"
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = _as_matrix(self.x, "x")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        n = y.shape[0]
        if x.shape[0] != n:
            raise DataError(f"y has {n} rows but x has {x.shape[0]}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DataError("non-finite entries in y or x")
        if n < 2 * self.k:
            raise DataError(
                f"need at least {2 * self.k} observations to identify "
                f"{2 * self.k} multipliers, got {n}"
            )
        if np.unique(y).size < 2:
            raise DataError("y must take at least two distinct values")
        if self.z is not None:
            z = _as_matrix(self.z, "z")
            object.__setattr__(self, "z", z)
            if z.shape[0] != n:
                raise DataError(f"y has {n} rows but z has {z.shape[0]}")
            if not np.all(np.isfinite(z)):
                raise DataError("non-finite entries in z")
        if not self.x_names:
            object.__setattr__(
                self, "x_names", tuple(f"x{j + 1}" for j in range(x.shape[1]))
            )
        if self.z is not None and not self.z_names:
            object.__setattr__(
                self, "z_names", tuple(f"z{j + 1}" for j in range(self.z.shape[1]))
            )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        """Design dimension including the intercept."""
        return self.x.shape[1] + 1

    @property
    def m(self) -> int | None:
        """Instrument design dimension including the intercept."""
        return None if self.z is None else self.z.shape[1] + 1


@dataclass(frozen=True)
class DesignMatrix:
    """An intercept-plus-regressors matrix with centering metadata.

    ``column_means`` records the shift subtracted from each column (zeros
    where nothing was subtracted), so fitted coefficients can be mapped back
    to the original coordinates.
    """

    values: np.ndarray
    has_intercept: bool = True
    centered: bool = False
    column_means: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.column_means is None:
            object.__setattr__(self, "column_means", np.zeros(values.shape[1]))
        else:
            object.__setattr__(
                self, "column_means", np.asarray(self.column_means, dtype=float)
            )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def numerical_rank(a: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank of ``a`` via QR with column pivoting and a relative pivot cutoff."""
    if a.size == 0:
        return 0
    r = scipy.linalg.qr(a, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.sum(d > tol * d[0]))


def build_design(data, center: bool = False, use_instruments: bool = False) -> DesignMatrix:
    """Assemble the design matrix ``[1 | X]`` (or ``[1 | Z]``).

    Parameters
    ----------
    data : Dataset or array_like
        Either a :class:`Dataset` or a raw matrix of regressor columns
        (without intercept).
    center : bool
        Subtract column means from the non-intercept columns, recording the
        shifts in ``column_means``.
    use_instruments : bool
        Build the design from the instrument columns instead (requires a
        :class:`Dataset` with instruments).

    Raises
    ------
    DesignRankError
        If any column is numerically a linear combination of the others.
    """
    if isinstance(data, Dataset):
        if use_instruments:
            if data.z is None:
                raise DataError("dataset has no instrument columns")
            raw = data.z
        else:
            raw = data.x
    else:
        if use_instruments:
            raise DataError("use_instruments requires a Dataset")
        raw = _as_matrix(data, "data")
        if not np.all(np.isfinite(raw)):
            raise DataError("non-finite entries in regressor matrix")

    n = raw.shape[0]
    values = np.column_stack([np.ones(n), raw])
    column_means = np.zeros(values.shape[1])
    if center and raw.shape[1] > 0:
        means = raw.mean(axis=0)
        values[:, 1:] -= means
        column_means[1:] = means

    if numerical_rank(values) < values.shape[1]:
        raise DesignRankError(
            f"design matrix is rank deficient ({values.shape[1]} columns, "
            f"numerical rank {numerical_rank(values)})"
        )
    return DesignMatrix(
        values=values, has_intercept=True, centered=center, column_means=column_means
    )


@dataclass(frozen=True)
class Ecdf:
    """Empirical distribution of a residual vector, on plotting positions.

    Positions are ``rank/(n+1)`` so that every mass point sits strictly
    inside (0, 1) and the inverse stays finite at the extremes.
    """

    sorted_values: np.ndarray
    plotting_positions: np.ndarray

    def inverse(self, u) -> np.ndarray:
        """Quantile function: linear between plotting positions, constant
        beyond the extreme ones."""
        u = np.asarray(u, dtype=float)
        return np.interp(u, self.plotting_positions, self.sorted_values)


def ecdf_transform(e) -> tuple[Ecdf, np.ndarray]:
    """Rank-transform residuals to (0, 1).

    Returns the empirical distribution object and ``u`` with
    ``u_i = rank_i / (n + 1)``, using average ranks for ties.
    """
    e = np.asarray(e, dtype=float).ravel()
    if not np.all(np.isfinite(e)):
        raise DataError("non-finite residuals")
    n = e.shape[0]
    u = rankdata(e, method="average") / (n + 1)
    ecdf = Ecdf(
        sorted_values=np.sort(e),
        plotting_positions=np.arange(1, n + 1) / (n + 1),
    )
    return ecdf, u


def scale_values(design: DesignMatrix, lambda2) -> np.ndarray:
    """Per-observation scales ``lambda2 . x_i``, checked strictly positive."""
    s = design.values @ np.asarray(lambda2, dtype=float)
    bad = np.flatnonzero(s <= 0.0)
    if bad.size:
        raise ScaleNotPositiveError(int(bad[0]))
    return s


def residual_from_multipliers(y, design: DesignMatrix, lambda1, lambda2) -> np.ndarray:
    """Residuals of the location-scale representation.

    Computes ``e_i = (y_i - lambda1 . x_i) / (lambda2 . x_i)``.

    Raises
    ------
    ScaleNotPositiveError
        If ``lambda2 . x_i <= 0`` for some observation (the exception's
        ``index`` attribute identifies the first one).
    """
    y = np.asarray(y, dtype=float).ravel()
    s = scale_values(design, lambda2)
    return (y - design.values @ np.asarray(lambda1, dtype=float)) / s


def reconstruct_y(design: DesignMatrix, lambda1, lambda2, e) -> np.ndarray:
    """Rebuild outcomes ``y_i = lambda1 . x_i + (lambda2 . x_i) e_i``.

    Exact inverse of :func:`residual_from_multipliers` whenever the scales
    are positive.
    """
    lambda1 = np.asarray(lambda1, dtype=float)
    lambda2 = np.asarray(lambda2, dtype=float)
    e = np.asarray(e, dtype=float).ravel()
    return design.values @ lambda1 + (design.values @ lambda2) * e


def quantile_coefficients(fit, u_grid) -> np.ndarray:
    """Quantile-coefficient curves ``beta(u) = lambda1 + lambda2 * Fninv(u)``.

    ``Fninv`` is the inverse empirical distribution of the fit's residuals,
    interpolated linearly between plotting positions and held constant
    beyond the extreme positions.

    Parameters
    ----------
    fit
        Any fit object exposing ``lambda1``, ``lambda2``, and ``e``.
    u_grid : array_like
        Quantile indices, all strictly inside (0, 1).

    Returns
    -------
    ndarray, shape (len(u_grid), k)
        One row ``beta(u)`` per grid point.
    """
    u_grid = np.atleast_1d(np.asarray(u_grid, dtype=float))
    if np.any(u_grid <= 0.0) or np.any(u_grid >= 1.0):
        raise DomainError("quantile indices must lie strictly inside (0, 1)")
    ecdf, _ = ecdf_transform(fit.e)
    q = ecdf.inverse(u_grid)
    lambda1 = np.asarray(fit.lambda1, dtype=float)
    lambda2 = np.asarray(fit.lambda2, dtype=float)
    return lambda1[None, :] + q[:, None] * lambda2[None, :]
