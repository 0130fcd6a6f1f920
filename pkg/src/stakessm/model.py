"""Model definition: parameters, match series, linear predictors and the state grid.

Observation model (home-team relative stakes ``y_t`` in [0, 1])::

    y_t ~ BEINF(mu_t, sigma, p, q)
    logit(mu_t) = alpha0 + alpha_t * prewindiff + zeta1 * scorediff_t
                  + zeta2 * winprobteam_t + g_t

Latent market sentiment::

    g_t = phi * g_{t-1} + beta_t * vaepdiff_{t-1} + omega * eta_t,  eta_t ~ N(0, 1)

In the baseline variant ``alpha_t = alpha`` and ``beta_t = beta`` are constants
and ``zeta1 = zeta2 = 0``; in the varying-coefficient variant both effects are
cubic B-spline combinations over minutes 1..85.  ``g_1`` is drawn from the
stationary law N(0, omega^2 / (1 - phi^2)).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .exceptions import DomainError, InvalidParameterError
from .splines import T_MAX, basis_matrix

BASELINE = "baseline"
VARYING = "varying"


@lru_cache(maxsize=16)
def minute_basis(K: int) -> np.ndarray:
    """Cached 85 x K basis; row ``t - 1`` holds minute ``t``."""
    B = basis_matrix(K)
    B.setflags(write=False)
    return B


@dataclass(frozen=True, eq=False)
class ModelParams:
    phi: float
    omega: float
    sigma: float
    p: float
    q: float
    alpha0: float
    alpha: float = 0.0
    beta: float = 0.0
    nu_alpha: np.ndarray | None = None
    nu_beta: np.ndarray | None = None
    zeta1: float = 0.0
    zeta2: float = 0.0

    def __post_init__(self):
        if not -1.0 < self.phi < 1.0:
            raise InvalidParameterError(f"phi must lie in (-1, 1), got {self.phi}")
        if not self.omega > 0:
            raise InvalidParameterError(f"omega must be positive, got {self.omega}")
        if not 0.0 < self.sigma < 1.0:
            raise InvalidParameterError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.p < 0 or self.q < 0 or self.p + self.q >= 1:
            raise InvalidParameterError(f"need p, q >= 0 and p + q < 1; got {self.p}, {self.q}")
        if (self.nu_alpha is None) != (self.nu_beta is None):
            raise InvalidParameterError("nu_alpha and nu_beta must be given together")
        if self.nu_alpha is not None:
            na = np.array(self.nu_alpha, dtype=float)
            nb = np.array(self.nu_beta, dtype=float)
            if na.ndim != 1 or na.shape != nb.shape or na.size < 4:
                raise InvalidParameterError("spline coefficient vectors must be 1-d, equal length >= 4")
            na.setflags(write=False)
            nb.setflags(write=False)
            object.__setattr__(self, "nu_alpha", na)
            object.__setattr__(self, "nu_beta", nb)
        values = [self.phi, self.omega, self.sigma, self.p, self.q, self.alpha0,
                  self.alpha, self.beta, self.zeta1, self.zeta2]
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("parameters must be finite")

    @property
    def variant(self) -> str:
        return BASELINE if self.nu_alpha is None else VARYING

    @property
    def K(self) -> int | None:
        return None if self.nu_alpha is None else self.nu_alpha.size

    @property
    def stationary_sd(self) -> float:
        return self.omega / np.sqrt(1.0 - self.phi**2)

    def alpha_t(self, t) -> np.ndarray:
        """prewindiff effect at minutes ``t`` (1-based)."""
        t = np.asarray(t)
        if self.nu_alpha is None:
            return np.full(t.shape, self.alpha, dtype=float)
        return minute_basis(self.K)[_minute_index(t)] @ self.nu_alpha

    def beta_t(self, t) -> np.ndarray:
        """vaepdiff effect on the transition into ``g_t``."""
        t = np.asarray(t)
        if self.nu_beta is None:
            return np.full(t.shape, self.beta, dtype=float)
        return minute_basis(self.K)[_minute_index(t)] @ self.nu_beta

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {
            "phi": self.phi, "omega": self.omega, "sigma": self.sigma,
            "p": self.p, "q": self.q, "alpha0": self.alpha0,
            "zeta1": self.zeta1, "zeta2": self.zeta2,
        }
        if self.nu_alpha is None:
            out["alpha"] = self.alpha
            out["beta"] = self.beta
        else:
            out["nu_alpha"] = [float(v) for v in self.nu_alpha]
            out["nu_beta"] = [float(v) for v in self.nu_beta]
        return {k: (float(v) if not isinstance(v, list) else v) for k, v in out.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _minute_index(t) -> np.ndarray:
    t = np.asarray(t)
    if np.any((t < 1) | (t > T_MAX)):
        raise DomainError(f"minutes must lie in 1..{T_MAX}")
    return t.astype(int) - 1


@dataclass(frozen=True, eq=False)
class MatchSeries:
    """Per-minute observations of one match (minute ``t`` at index ``t - 1``).

    ``y`` uses NaN for missing minutes.  ``scorediff`` and ``winprobteam``
    default to zeros when not supplied (they only enter the extended predictor).
    """

    match_id: str
    y: np.ndarray
    prewindiff: float
    vaepdiff: np.ndarray
    scorediff: np.ndarray | None = None
    winprobteam: np.ndarray | None = None
    true_state: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        T = y.size
        if y.ndim != 1 or T < 1:
            raise DomainError("y must be a non-empty 1-d series")
        if T > T_MAX:
            raise DomainError(f"series longer than {T_MAX} minutes")
        obs = y[~np.isnan(y)]
        if np.any((obs < 0) | (obs > 1)):
            raise DomainError("relative stakes must lie in [0, 1]")
        if not -1.0 <= self.prewindiff <= 1.0:
            raise DomainError(f"prewindiff must lie in [-1, 1], got {self.prewindiff}")
        vaep = np.array(self.vaepdiff, dtype=float)
        score = np.zeros(T) if self.scorediff is None else np.array(self.scorediff, dtype=float)
        wp = np.zeros(T) if self.winprobteam is None else np.array(self.winprobteam, dtype=float)
        for name, arr in (("vaepdiff", vaep), ("scorediff", score), ("winprobteam", wp)):
            if arr.shape != (T,):
                raise DomainError(f"{name} has length {arr.size}, expected {T}")
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} must be finite")
        if np.any((wp < 0) | (wp > 1)):
            raise DomainError("winprobteam must lie in [0, 1]")
        for name, arr in (("y", y), ("vaepdiff", vaep), ("scorediff", score), ("winprobteam", wp)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "prewindiff", float(self.prewindiff))
        if self.true_state is not None:
            object.__setattr__(self, "true_state", np.array(self.true_state, dtype=float))

    @property
    def T(self) -> int:
        return self.y.size

    @property
    def n_observed(self) -> int:
        return int(np.sum(~np.isnan(self.y)))


def linear_predictor(params: ModelParams, match: MatchSeries) -> np.ndarray:
    """Covariate part of ``logit(mu_t)`` for t = 1..T (everything except ``g_t``)."""
    t = np.arange(1, match.T + 1)
    return (
        params.alpha0
        + params.alpha_t(t) * match.prewindiff
        + params.zeta1 * match.scorediff
        + params.zeta2 * match.winprobteam
    )


def mean_predictor(params: ModelParams, match: MatchSeries, t: int, g: float) -> float:
    """Mean of the beta component at minute ``t`` given state ``g``."""
    if not 1 <= t <= match.T:
        raise DomainError(f"t must lie in 1..{match.T}, got {t}")
    eta = linear_predictor(params, match)[t - 1]
    return float(expit(eta + g))


def state_shift(params: ModelParams, match: MatchSeries) -> np.ndarray:
    """Covariate shift ``beta_t * vaepdiff_{t-1}`` of the transition into ``g_t``.

    Entry ``t - 1`` belongs to minute ``t``; the first entry is 0 because
    ``g_1`` comes from the stationary law.
    """
    shift = np.zeros(match.T)
    if match.T > 1:
        t = np.arange(2, match.T + 1)
        shift[1:] = params.beta_t(t) * match.vaepdiff[:-1]
    return shift


def _normal_pdf(x, mean, sd):
    z = (np.asarray(x) - mean) / sd
    return np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * sd)


def state_transition_density(params: ModelParams, g_next, g_prev, vaepdiff_prev: float, t: int):
    """Density of ``g_t = g_next`` given ``g_{t-1} = g_prev`` and ``vaepdiff_{t-1}``."""
    mean = params.phi * np.asarray(g_prev) + float(params.beta_t(t)) * vaepdiff_prev
    return _normal_pdf(g_next, mean, params.omega)


@dataclass(frozen=True)
class StateGrid:
    """``m`` equal intervals of [c0, cm] with midpoints ``c0 + (i - 1/2) h``."""

    c0: float
    cm: float
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise InvalidParameterError(f"grid needs m >= 2 intervals, got {self.m}")
        if not self.c0 < self.cm:
            raise InvalidParameterError("grid needs c0 < cm")

    @property
    def h(self) -> float:
        return (self.cm - self.c0) / self.m

    @property
    def midpoints(self) -> np.ndarray:
        return self.c0 + (np.arange(1, self.m + 1) - 0.5) * self.h


def build_grid(params: ModelParams, m: int = 100, span_sds: float = 5.0) -> StateGrid:
    """Symmetric grid covering ``span_sds`` stationary standard deviations."""
    if not -1.0 < params.phi < 1.0:
        raise InvalidParameterError("grid needs a stationary state process, |phi| < 1")
    if span_sds <= 0:
        raise InvalidParameterError("span_sds must be positive")
    r = span_sds * params.stationary_sd
    return StateGrid(-r, r, int(m))


def initial_distribution(params: ModelParams, grid: StateGrid) -> np.ndarray:
    """``delta_i = h f(c_i)`` with f the stationary N(0, omega^2 / (1 - phi^2)) density."""
    return grid.h * _normal_pdf(grid.midpoints, 0.0, params.stationary_sd)


def transition_matrix(params: ModelParams, grid: StateGrid, vaepdiff_prev: float, t: int) -> np.ndarray:
    """``gamma_ij = h f(c_j | c_i)`` for the transition into minute ``t``.

    Rows are not renormalised, so they sum to slightly less than one.
    """
    c = grid.midpoints
    return grid.h * state_transition_density(params, c[None, :], c[:, None], vaepdiff_prev, t)
