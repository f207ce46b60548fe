"""Convex basis expansions for the generalized estimator.

A basis is an ordered list of triples ``(h_j, h_tilde_j, h_prime_j)`` where
``h_tilde_j`` is an antiderivative of ``h_j`` and ``h_prime_j`` its
derivative. The first two members are fixed: ``h_1 = 1`` with antiderivative
``e`` and ``h_2 = e`` with antiderivative ``(e^2 - 1)/2``, which reproduce
the location-scale model. Members from j = 3 on enter without an intercept
in their orthogonality constraint (centering of the regressors makes the
corresponding intercept multiplier vanish), so their antiderivatives need no
mean normalization.

All callables must accept and return numpy arrays elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigError

__all__ = ["BasisSpec", "canonical_basis", "rational_cubic_basis", "get_basis", "BUILTIN_BASES"]

_PROBES = np.linspace(-3.0, 3.0, 25)
_FD_RTOL = 1e-6


@dataclass(frozen=True)
class BasisSpec:
    """Ordered basis ``(h_j, h_tilde_j, h_prime_j)`` with intercept flags.

    Consistency of the triples is verified at construction by central finite
    differences on 25 probe points.
    """

    h: tuple[Callable, ...]
    h_tilde: tuple[Callable, ...]
    h_prime: tuple[Callable, ...]
    with_intercept: tuple[bool, ...] = ()
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "h", tuple(self.h))
        object.__setattr__(self, "h_tilde", tuple(self.h_tilde))
        object.__setattr__(self, "h_prime", tuple(self.h_prime))
        if not self.with_intercept:
            object.__setattr__(
                self, "with_intercept", tuple(j < 2 for j in range(len(self.h)))
            )
        else:
            object.__setattr__(self, "with_intercept", tuple(self.with_intercept))
        if len({len(self.h), len(self.h_tilde), len(self.h_prime), len(self.with_intercept)}) != 1:
            raise ValueError("h, h_tilde, h_prime, with_intercept must have equal length")
        if self.J < 2:
            raise ValueError("a basis needs at least the two canonical members")
        if self.with_intercept[:2] != (True, True) or any(self.with_intercept[2:]):
            raise ValueError("intercept flags must be True for j=1,2 and False after")
        self._check_consistency()

    @property
    def J(self) -> int:
        return len(self.h)

    def _check_consistency(self):
        e = _PROBES
        step = 1e-6 * np.maximum(1.0, np.abs(e))
        if not np.allclose(self.h[0](e) * np.ones_like(e), 1.0, rtol=0, atol=1e-12):
            raise ValueError("h_1 must be identically 1")
        if not np.allclose(self.h_tilde[0](e), e, rtol=1e-12, atol=1e-12):
            raise ValueError("the antiderivative of h_1 must be the identity")
        if not np.allclose(self.h[1](e), e, rtol=1e-12, atol=1e-12):
            raise ValueError("h_2 must be the identity")
        if not np.allclose(self.h_tilde[1](e), (e**2 - 1.0) / 2.0, rtol=1e-12, atol=1e-12):
            raise ValueError("the antiderivative of h_2 must be (e^2 - 1)/2")
        for j in range(self.J):
            fd_h = (self.h_tilde[j](e + step) - self.h_tilde[j](e - step)) / (2 * step)
            hj = self.h[j](e) * np.ones_like(e)
            if np.max(np.abs(fd_h - hj) / np.maximum(1.0, np.abs(hj))) > _FD_RTOL:
                raise ValueError(f"h_tilde[{j}] is not an antiderivative of h[{j}]")
            fd_hp = (self.h[j](e + step) - self.h[j](e - step)) / (2 * step)
            hpj = self.h_prime[j](e) * np.ones_like(e)
            if np.max(np.abs(fd_hp - hpj) / np.maximum(1.0, np.abs(hpj))) > _FD_RTOL:
                raise ValueError(f"h_prime[{j}] is not the derivative of h[{j}]")

    def eval_h(self, e: np.ndarray) -> np.ndarray:
        """Stack ``h_j(e)`` as columns, shape (n, J)."""
        return np.column_stack([np.broadcast_to(h(e), e.shape) for h in self.h])

    def eval_h_tilde(self, e: np.ndarray) -> np.ndarray:
        return np.column_stack([np.broadcast_to(g(e), e.shape) for g in self.h_tilde])

    def eval_h_prime(self, e: np.ndarray) -> np.ndarray:
        return np.column_stack([np.broadcast_to(g(e), e.shape) for g in self.h_prime])


def _one(e):
    return np.ones_like(np.asarray(e, dtype=float))


def _identity(e):
    return np.asarray(e, dtype=float)


def _half_square(e):
    e = np.asarray(e, dtype=float)
    return (e**2 - 1.0) / 2.0


def _zero(e):
    return np.zeros_like(np.asarray(e, dtype=float))


def _rational_cubic(e):
    e = np.asarray(e, dtype=float)
    return e**3 / (1.0 + e**2)


def _rational_cubic_tilde(e):
    e = np.asarray(e, dtype=float)
    return 0.5 * (e**2 - np.log1p(e**2))


def _rational_cubic_prime(e):
    e = np.asarray(e, dtype=float)
    return e**2 * (3.0 + e**2) / (1.0 + e**2) ** 2


def canonical_basis() -> BasisSpec:
    """The two-member location-scale basis."""
    return BasisSpec(
        h=(_one, _identity),
        h_tilde=(_identity, _half_square),
        h_prime=(_zero, _one),
        name="canonical-J2",
    )


def rational_cubic_basis() -> BasisSpec:
    """Three-member basis adding the bounded-curvature odd term
    ``h_3(e) = e^3 / (1 + e^2)``.

    The extra member grows linearly in the tails with a convex
    antiderivative, so it perturbs the shape of the outcome's response to
    the residual without destroying monotonicity for moderate slope
    coefficients.
    """
    return BasisSpec(
        h=(_one, _identity, _rational_cubic),
        h_tilde=(_identity, _half_square, _rational_cubic_tilde),
        h_prime=(_zero, _one, _rational_cubic_prime),
        name="rational-cubic-J3",
    )


BUILTIN_BASES = {
    "canonical-J2": canonical_basis,
    "rational-cubic-J3": rational_cubic_basis,
}


def get_basis(name: str) -> BasisSpec:
    """Look up a built-in basis by configuration name."""
    try:
        return BUILTIN_BASES[name]()
    except KeyError:
        raise ConfigError(
            f"unknown basis '{name}'; built-ins: {sorted(BUILTIN_BASES)}"
        ) from None
