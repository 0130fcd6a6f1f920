"""Cubic B-spline bases over match minutes and the P-spline difference penalty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import ConfigurationError, DomainError

DEGREE = 3
T_MIN = 1
T_MAX = 85


def equidistant_knots(K: int, lo: float = T_MIN, hi: float = T_MAX) -> np.ndarray:
    """Knot vector giving exactly ``K`` cubic basis functions on [lo, hi].

    Interior knots split [lo, hi] into ``K - 3`` equal segments; three more
    knots with the same spacing are added outside each end.
    """
    if K < 4:
        raise ConfigurationError(f"cubic B-spline basis needs K >= 4, got {K}")
    step = (hi - lo) / (K - DEGREE)
    return lo + step * np.arange(-DEGREE, K + 1, dtype=float)


@dataclass(frozen=True)
class SplineBasis:
    """Equidistant cubic B-spline basis on [lo, hi]."""

    K: int
    lo: float = T_MIN
    hi: float = T_MAX
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "knots", equidistant_knots(self.K, self.lo, self.hi))

    def design(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any((t < self.lo) | (t > self.hi)):
            raise DomainError(f"t must lie in [{self.lo}, {self.hi}]")
        return BSpline.design_matrix(t, self.knots, DEGREE).toarray()


def basis_matrix(K: int, t_values=None) -> np.ndarray:
    """Rows ``B_1(t) ... B_K(t)`` for each ``t`` (default: minutes 1..85)."""
    if t_values is None:
        t_values = np.arange(T_MIN, T_MAX + 1)
    return SplineBasis(K).design(t_values)


@dataclass(frozen=True)
class VaryingCoefficient:
    coeffs: np.ndarray
    basis: SplineBasis

    def __call__(self, t):
        return evaluate_coefficient(self, t)


def evaluate_coefficient(vc: VaryingCoefficient, t):
    """``sum_k nu_k B_k(t)``; scalar in, scalar out."""
    coeffs = np.asarray(vc.coeffs, dtype=float)
    if coeffs.shape != (vc.basis.K,):
        raise ConfigurationError(f"expected {vc.basis.K} coefficients, got {coeffs.shape}")
    values = vc.basis.design(t) @ coeffs
    if np.ndim(t) == 0:
        return float(values[0])
    return values


def difference_matrix(K: int, order: int = 2) -> np.ndarray:
    """(K - order) x K matrix of ``order``-th differences."""
    if K < order + 1:
        raise ConfigurationError(f"need K >= {order + 1} for order-{order} differences")
    return np.diff(np.eye(K), n=order, axis=0)


def penalty(coeffs, lam: float) -> float:
    """``(lam / 2) * sum_{k>=3} (nu_k - 2 nu_{k-1} + nu_{k-2})**2``."""
    if lam < 0:
        raise ConfigurationError(f"smoothing parameter must be >= 0, got {lam}")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size < 3:
        raise ConfigurationError("penalty needs at least 3 coefficients")
    d2 = coeffs[2:] - 2.0 * coeffs[1:-1] + coeffs[:-2]
    return 0.5 * lam * float(d2 @ d2)


def penalty_matrix(K: int, lam: float) -> np.ndarray:
    """Hessian of :func:`penalty`, ``lam * D'D``."""
    D = difference_matrix(K)
    return lam * D.T @ D
