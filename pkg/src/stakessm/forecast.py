"""One-step-ahead predictive distributions, sampling and outlier flags.

Given the filtered state distribution at minute ``t``, the state predictive
for minute ``t + 1`` is one transition step (no observation update); the
predictive law of ``y_{t+1}`` is the grid-weighted mixture of BEINF laws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, expit

from .beinf import sample_beinf_array
from .exceptions import ConfigurationError, DomainError
from .likelihood import forward
from .model import MatchSeries, ModelParams, StateGrid, linear_predictor, transition_matrix

_MU_EPS = 1e-15


@dataclass
class Forecast:
    """Predictive distribution of ``y`` at minute ``t_target``."""

    t_target: int
    state_predictive: np.ndarray
    mu: np.ndarray
    sigma: float
    p: float
    q: float
    quantiles: dict = field(default_factory=dict)
    sample: np.ndarray | None = None

    @property
    def precision(self) -> float:
        return 1.0 / self.sigma**2 - 1.0

    @property
    def mean(self) -> float:
        w = self.state_predictive
        return float(w @ ((1.0 - self.p - self.q) * self.mu + self.q))

    def _interior_cdf(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        k = self.precision
        a = self.mu * k
        b = (1.0 - self.mu) * k
        return betainc(a[None, :], b[None, :], y[:, None]) @ self.state_predictive

    def cdf(self, y):
        """``P(Y <= y)`` including both point masses."""
        y = np.asarray(y, dtype=float)
        flat = np.atleast_1d(y)
        out = np.where(flat >= 1.0, 1.0, 0.0)
        inside = (flat > 0.0) & (flat < 1.0)
        if inside.any():
            out[inside] = self.p + (1.0 - self.p - self.q) * self._interior_cdf(flat[inside])
        out[flat == 0.0] = self.p
        return float(out[0]) if y.ndim == 0 else out

    def cdf_left(self, y):
        """``P(Y < y)``."""
        y = np.asarray(y, dtype=float)
        flat = np.atleast_1d(y)
        out = np.atleast_1d(np.asarray(self.cdf(flat), dtype=float)).copy()
        out[flat == 0.0] = 0.0
        out[flat == 1.0] = 1.0 - self.q
        return float(out[0]) if y.ndim == 0 else out

    def quantile(self, u: float) -> float:
        """``inf{y : F(y) >= u}``; the masses at 0 and 1 are treated exactly."""
        if not 0.0 <= u <= 1.0:
            raise DomainError(f"quantile level must lie in [0, 1], got {u}")
        if u <= self.p:
            return 0.0
        if u > 1.0 - self.q:
            return 1.0
        scale = 1.0 - self.p - self.q
        target = (u - self.p) / scale
        if target >= 1.0:
            return 1.0
        return float(brentq(lambda y: self._interior_cdf(y)[0] - target, 0.0, 1.0, xtol=1e-14, rtol=1e-15))

    def exceeds(self, y: float, u: float) -> bool:
        """``y > quantile(u)``, decided without root finding."""
        if np.isnan(y):
            return False
        if y >= 1.0:
            return u < 1.0 - self.q
        if y <= 0.0:
            return False
        return bool(self.cdf(y) > u)

    def below(self, y: float, u: float) -> bool:
        """``y < quantile(u)``."""
        if np.isnan(y):
            return False
        if y <= 0.0:
            return u > self.p
        if y >= 1.0:
            return False
        return bool(self.cdf(y) < u)

    def pit(self, y: float, rng: np.random.Generator) -> float:
        """Randomised probability integral transform (uniform under the model)."""
        lo, hi = self.cdf_left(y), self.cdf(y)
        return float(lo + rng.random() * (hi - lo))


def _cell_means(params: ModelParams, match: MatchSeries, grid: StateGrid, t_target: int) -> np.ndarray:
    eta = linear_predictor(params, match)[t_target - 1]
    return np.clip(expit(eta + grid.midpoints), _MU_EPS, 1.0 - _MU_EPS)


def predict_state(filtered_row: np.ndarray, params: ModelParams, grid: StateGrid,
                  vaepdiff_prev: float, t_target: int) -> np.ndarray:
    """One transition step from the filtered row, normalised to sum to one."""
    pred = np.asarray(filtered_row, dtype=float) @ transition_matrix(params, grid, vaepdiff_prev, t_target)
    total = pred.sum()
    if not total > 0:
        raise DomainError("state predictive has no mass on the grid")
    return pred / total


def _build(match, params, grid, filtered, t, quantiles) -> Forecast:
    t_target = t + 1
    w = predict_state(filtered[t - 1], params, grid, match.vaepdiff[t - 1], t_target)
    # covariates at t_target come from the full match
    fc = Forecast(t_target, w, _cell_means(params, match, grid, t_target), params.sigma, params.p, params.q)
    fc.quantiles = {float(u): fc.quantile(u) for u in quantiles}
    return fc


def one_step_ahead(match: MatchSeries, params: ModelParams, grid: StateGrid, t: int,
                   quantiles=(0.005, 0.995)) -> Forecast:
    """Predictive distribution of ``y_{t+1}`` given the data through minute ``t``."""
    if not 1 <= t < match.T:
        raise DomainError(f"t must lie in 1..{match.T - 1}, got {t}")
    # only minutes 1..t enter the filter
    prefix = MatchSeries(match.match_id, match.y[:t], match.prewindiff, match.vaepdiff[:t],
                         match.scorediff[:t], match.winprobteam[:t])
    res = forward(prefix, params, grid)
    if not np.isfinite(res.log_likelihood):
        raise DomainError("forward filter failed for this match")
    return _build(match, params, grid, res.filtered_state, t, quantiles)


def forecast_path(match: MatchSeries, params: ModelParams, grid: StateGrid, quantiles=()) -> list[Forecast]:
    """Forecasts for minutes 2..T, each conditioning on all earlier minutes."""
    res = forward(match, params, grid)
    if not np.isfinite(res.log_likelihood):
        raise DomainError("forward filter failed for this match")
    return [_build(match, params, grid, res.filtered_state, t, quantiles) for t in range(1, match.T)]


def flag_outliers(match: MatchSeries, params: ModelParams, grid: StateGrid, quantile: float = 0.99,
                  two_sided: bool = False) -> list[int]:
    """Minutes whose observation lies above the predictive ``quantile``.

    With ``two_sided`` the lower tail at ``1 - quantile`` is flagged as well.
    ``quantile = 1`` flags nothing.  An observation of probability zero under
    the model (``y = 1`` with ``q = 0``) makes the filter fail with
    :class:`DomainError`; :meth:`Forecast.exceeds` still reports it as above
    every quantile.
    """
    if not 0.0 < quantile <= 1.0:
        raise ConfigurationError(f"quantile must lie in (0, 1], got {quantile}")
    flagged = []
    for fc in forecast_path(match, params, grid):
        y = match.y[fc.t_target - 1]
        if fc.exceeds(y, quantile) or (two_sided and fc.below(y, 1.0 - quantile)):
            flagged.append(fc.t_target)
    return flagged


def predictive_sample(forecast: Forecast, n_draws: int, seed=None) -> np.ndarray:
    """Draw a grid cell from the state predictive, then BEINF at that cell."""
    if n_draws < 1:
        raise ConfigurationError("n_draws must be >= 1")
    rng = np.random.default_rng(seed)
    cells = rng.choice(forecast.mu.size, size=n_draws, p=forecast.state_predictive)
    draws = sample_beinf_array(rng, forecast.mu[cells], forecast.sigma, forecast.p, forecast.q, size=n_draws)
    forecast.sample = draws
    return draws


FORECAST_COLUMNS = ("match_id", "minute", "observed", "predicted_mean")


def forecast_rows(match: MatchSeries, params: ModelParams, grid: StateGrid, quantiles=(0.99,),
                  flag_quantile: float = 0.99, two_sided: bool = False) -> list[dict]:
    """Per-minute rows (minute, observed, mean, quantiles, flag) for export."""
    rows = []
    for fc in forecast_path(match, params, grid, quantiles):
        y = match.y[fc.t_target - 1]
        flag = fc.exceeds(y, flag_quantile) or (two_sided and fc.below(y, 1.0 - flag_quantile))
        row = {"match_id": match.match_id, "minute": fc.t_target,
               "observed": "" if np.isnan(y) else float(y), "predicted_mean": fc.mean}
        for u, v in fc.quantiles.items():
            row[quantile_column(u)] = v
        row["flag"] = int(flag)
        rows.append(row)
    return rows


def quantile_column(u: float) -> str:
    return f"q{u:g}"


def write_forecast_csv(path, rows: list[dict], quantiles, header_lines=()):
    fields = list(FORECAST_COLUMNS) + [quantile_column(u) for u in quantiles] + ["flag"]
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
