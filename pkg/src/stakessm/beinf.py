"""Beta-inflated (BEINF) distribution on [0, 1].

Point masses ``p`` at 0 and ``q`` at 1 plus a beta component with mean ``mu``
and scale ``sigma``.  The shape parameters are

    a = mu * (1 - sigma**2) / sigma**2
    b = (1 - mu) * (1 - sigma**2) / sigma**2

so ``sigma`` must lie in (0, 1).  The log-density is the primitive; the
density exponentiates it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln

from .exceptions import DomainError, InvalidParameterError


@dataclass(frozen=True)
class BeinfParams:
    mu: float
    sigma: float
    p: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        _check_params(self.mu, self.sigma, self.p, self.q)

    @property
    def shapes(self) -> tuple[float, float]:
        return shapes_from_mean_sd(self.mu, self.sigma)

    @property
    def mean(self) -> float:
        return beinf_mean(self.mu, self.p, self.q)


def _check_params(mu, sigma, p, q):
    mu = np.asarray(mu, dtype=float)
    if not np.all((mu > 0) & (mu < 1)):
        raise InvalidParameterError(f"mu must lie in (0, 1), got {mu}")
    if not 0 < sigma < 1:
        raise InvalidParameterError(f"sigma must lie in (0, 1), got {sigma}")
    # p + q == 1 is a degenerate two-point law; allowed for sampling.
    if p < 0 or q < 0 or p + q > 1:
        raise InvalidParameterError(f"need p >= 0, q >= 0, p + q <= 1; got p={p}, q={q}")


def shapes_from_mean_sd(mu, sigma):
    """Map (mean, scale) of the beta component to its shape parameters.

    Works elementwise on arrays of ``mu``.
    """
    mu_arr = np.asarray(mu, dtype=float)
    if not np.all((mu_arr > 0) & (mu_arr < 1)):
        raise InvalidParameterError(f"mu must lie in (0, 1), got {mu}")
    if not 0 < sigma < 1:
        raise InvalidParameterError(f"sigma must lie in (0, 1), got {sigma}")
    precision = (1.0 - sigma**2) / sigma**2
    a = mu_arr * precision
    b = (1.0 - mu_arr) * precision
    if np.ndim(mu) == 0:
        return float(a), float(b)
    return a, b


def beta_logpdf_interior(y, mu, precision):
    """Log of the regular beta density for 0 < y < 1 (no validation).

    ``mu`` broadcasts against ``y``; ``precision`` is ``a + b``.
    """
    a = mu * precision
    b = precision - a
    return (
        (a - 1.0) * np.log(y)
        + (b - 1.0) * np.log1p(-y)
        - gammaln(a)
        - gammaln(b)
        + gammaln(precision)
    )


def beinf_logpdf(y, mu, sigma, p=0.0, q=0.0):
    """Log-density of BEINF(mu, sigma, p, q) at ``y``, broadcasting ``y`` and ``mu``.

    Returns ``log p`` at 0, ``log q`` at 1 and ``log(1-p-q) + log h(y)`` inside.
    A zero mass gives ``-inf``.
    """
    _check_params(mu, sigma, p, q)
    y = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y)) or np.any((y < 0) | (y > 1)):
        raise DomainError("observations must lie in [0, 1]")
    y_b, mu_b = np.broadcast_arrays(y, np.asarray(mu, dtype=float))
    out = np.empty(y_b.shape)
    precision = (1.0 - sigma**2) / sigma**2
    with np.errstate(divide="ignore"):
        log_p, log_q = np.log(p), np.log(q)
        interior = (y_b > 0) & (y_b < 1)
        out[y_b == 0] = log_p
        out[y_b == 1] = log_q
        out[interior] = np.log1p(-(p + q)) + beta_logpdf_interior(
            y_b[interior], mu_b[interior], precision
        )
    if out.ndim == 0:
        return float(out)
    return out


def beinf_density(y, params: BeinfParams):
    """Density (mass at the boundary points) of ``params`` at ``y``."""
    return np.exp(beinf_logpdf(y, params.mu, params.sigma, params.p, params.q))


def beinf_mean(mu, p, q):
    return (1.0 - p - q) * np.asarray(mu) + q


def beinf_cdf(y, mu, sigma, p=0.0, q=0.0):
    """P(Y <= y).  Jumps by ``p`` at 0 and by ``q`` at 1."""
    y = np.asarray(y, dtype=float)
    a, b = shapes_from_mean_sd(mu, sigma)
    yc = np.clip(y, 0.0, 1.0)
    cont = betainc(a, b, yc)
    out = p + (1.0 - p - q) * cont
    out = np.where(y >= 1.0, 1.0, out)
    return np.where(y < 0.0, 0.0, out)


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def beinf_sample(params: BeinfParams, rng=None, size=None):
    """Draw from BEINF: 0 w.p. p, 1 w.p. q, otherwise a beta(a, b) variate.

    ``rng`` is a seed or a ``numpy.random.Generator``; a seed makes the draw
    reproducible.
    """
    gen = _as_generator(rng)
    return sample_beinf_array(gen, params.mu, params.sigma, params.p, params.q, size)


def sample_beinf_array(gen: np.random.Generator, mu, sigma, p, q, size=None):
    """Vectorised sampler; ``mu`` may be an array broadcast to ``size``."""
    mu = np.asarray(mu, dtype=float)
    if size is None:
        size = mu.shape
    mu = np.broadcast_to(mu, size)
    a, b = shapes_from_mean_sd(mu, sigma) if mu.ndim else shapes_from_mean_sd(float(mu), sigma)
    u = gen.random(size)
    draws = gen.beta(a, b, size)
    # a beta variate must stay strictly inside (0, 1)
    draws = np.clip(draws, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    draws = np.where(u < p, 0.0, draws)
    draws = np.where(u >= 1.0 - q, 1.0, draws)
    if np.ndim(draws) == 0:
        return float(draws)
    return draws
