"""Synthetic matches generated from the model.

Covariates follow simple generators matched to target marginal moments:
prewindiff is a clipped normal, vaepdiff is i.i.d. normal, goals arrive as
per-minute Bernoulli events and the in-game win probability is the Skellam
probability of the home side finishing ahead given the current score and the
remaining scoring rates.  Bookmaker odds carry a proportional margin.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import skellam

from .beinf import sample_beinf_array
from .exceptions import ConfigurationError
from .model import MatchSeries, ModelParams
from .splines import T_MAX

logger = logging.getLogger(__name__)

# Baseline estimates used as generative truth.
BASELINE_TRUTH = dict(phi=0.968, omega=0.249, sigma=0.300, alpha0=-0.195, alpha=2.395, beta=0.600)
DEFAULT_P = 0.03
DEFAULT_Q = 0.03


def baseline_truth(p: float = DEFAULT_P, q: float = DEFAULT_Q) -> ModelParams:
    return ModelParams(p=p, q=q, **BASELINE_TRUTH)


@dataclass(frozen=True)
class CovariateSettings:
    prewin_mean: float = 0.139
    prewin_sd: float = 0.317
    prewin_clip: float = 0.95
    vaep_mean: float = 0.004
    vaep_sd: float = 0.161
    goals_per_match: float = 2.8
    margin: float = 0.05
    stake_log_mean: float = 7.0
    stake_log_sd: float = 1.0
    missing_rate: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    n_matches: int
    params: ModelParams
    T: int = T_MAX
    n_minutes: int = 90
    seed: int = 0
    covariates: CovariateSettings = field(default_factory=CovariateSettings)

    def __post_init__(self):
        if self.n_matches < 1:
            raise ConfigurationError("n_matches must be >= 1")
        if not 1 <= self.T <= T_MAX:
            raise ConfigurationError(f"T must lie in 1..{T_MAX}")
        if self.n_minutes < self.T:
            raise ConfigurationError("n_minutes must be >= T")


@dataclass
class SimulatedMatch:
    """Full simulated match; ``series`` is the model-ready view truncated at ``T``.

    Minute-indexed arrays have length ``n_minutes`` (minute ``t`` at ``t - 1``).
    ``odds`` has one extra leading row with the pre-game odds (home, away, draw).
    """

    match_id: str
    series: MatchSeries
    prewindiff: float
    state: np.ndarray
    y: np.ndarray
    vaepdiff: np.ndarray
    scorediff: np.ndarray
    winprob: np.ndarray
    odds: np.ndarray
    stakes: np.ndarray

    @property
    def final_scorediff(self) -> int:
        return int(self.scorediff[-1])

    def records(self) -> list[dict]:
        """Raw per-minute rows in the ingest CSV layout (minute 0 = pre-game odds)."""
        rows = [dict(match_id=self.match_id, minute=0, stake_home="", stake_away="",
                     odds_home=self.odds[0, 0], odds_away=self.odds[0, 1], odds_draw=self.odds[0, 2],
                     vaepdiff="", scorediff=0, winprob_home="", sim_state="")]
        for t in range(1, self.y.size + 1):
            rows.append(dict(
                match_id=self.match_id, minute=t,
                stake_home=self.stakes[t - 1, 0], stake_away=self.stakes[t - 1, 1],
                odds_home=self.odds[t, 0], odds_away=self.odds[t, 1], odds_draw=self.odds[t, 2],
                vaepdiff=self.vaepdiff[t - 1], scorediff=int(self.scorediff[t - 1]),
                winprob_home=self.winprob[t - 1], sim_state=self.state[t - 1],
            ))
        return rows


def match_rng(seed: int, match_index: int) -> np.random.Generator:
    """Independent stream per match, derived by seed-sequence splitting."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(match_index,)))


def pregame_probabilities(prewindiff: float) -> np.ndarray:
    """(home, away, draw) probabilities whose home-away difference is ``prewindiff``."""
    draw = 0.27 * (1.0 - abs(prewindiff))
    home = 0.5 * (1.0 - draw + prewindiff)
    return np.array([home, 1.0 - draw - home, draw])


def odds_from_probabilities(probs: np.ndarray, margin: float) -> np.ndarray:
    """Decimal odds with the payout shortened by ``margin``; always > 1."""
    probs = np.clip(np.asarray(probs, dtype=float), 1e-3, None)
    probs = probs / probs.sum(axis=-1, keepdims=True)
    return 1.0 + (1.0 / probs - 1.0) * (1.0 - margin)


def ingame_probabilities(scorediff, remaining, rate_home, rate_away) -> np.ndarray:
    """(home, away, draw) final-outcome probabilities from a Skellam remainder."""
    scorediff = np.asarray(scorediff, dtype=float)
    remaining = np.asarray(remaining, dtype=float)
    out = np.empty(scorediff.shape + (3,))
    done = remaining <= 0
    mu1 = np.where(done, 1.0, rate_home * remaining)
    mu2 = np.where(done, 1.0, rate_away * remaining)
    home = skellam.sf(-scorediff, mu1, mu2)
    draw = skellam.pmf(-scorediff, mu1, mu2)
    out[..., 0] = np.where(done, (scorediff > 0).astype(float), home)
    out[..., 2] = np.where(done, (scorediff == 0).astype(float), draw)
    out[..., 1] = np.clip(1.0 - out[..., 0] - out[..., 2], 0.0, 1.0)
    return out


def simulate_match(config: SimConfig, match_index: int) -> SimulatedMatch:
    """Generate one match: covariates, latent sentiment path and stakes."""
    params, cov = config.params, config.covariates
    rng = match_rng(config.seed, match_index)
    n = config.n_minutes
    minutes = np.arange(1, n + 1)
    effect_minutes = np.minimum(minutes, T_MAX)

    prewin = float(np.clip(rng.normal(cov.prewin_mean, cov.prewin_sd), -cov.prewin_clip, cov.prewin_clip))
    vaep = rng.normal(cov.vaep_mean, cov.vaep_sd, n)

    rate = cov.goals_per_match / 90.0
    home_share = np.clip(0.5 + 0.5 * prewin, 0.05, 0.95)
    rate_h, rate_a = rate * home_share, rate * (1.0 - home_share)
    goals_h = rng.random(n) < rate_h
    goals_a = rng.random(n) < rate_a
    scorediff = np.cumsum(goals_h.astype(int) - goals_a.astype(int))

    probs = ingame_probabilities(scorediff, n - minutes, rate_h, rate_a)
    odds = np.empty((n + 1, 3))
    odds[0] = odds_from_probabilities(pregame_probabilities(prewin), cov.margin)
    odds[1:] = odds_from_probabilities(probs, cov.margin)
    inv = 1.0 / odds[1:]
    winprob = inv[:, 0] / inv.sum(axis=1)

    g = np.empty(n)
    shocks = rng.standard_normal(n)
    g[0] = params.stationary_sd * shocks[0]
    beta_t = params.beta_t(effect_minutes)
    for t in range(1, n):
        g[t] = params.phi * g[t - 1] + beta_t[t] * vaep[t - 1] + params.omega * shocks[t]

    eta = (params.alpha0 + params.alpha_t(effect_minutes) * prewin
           + params.zeta1 * scorediff + params.zeta2 * winprob)
    mu = expit(eta + g)
    y = sample_beinf_array(rng, mu, params.sigma, params.p, params.q, size=n)

    totals = rng.lognormal(cov.stake_log_mean, cov.stake_log_sd, n)
    stakes = np.column_stack([y * totals, (1.0 - y) * totals])
    if cov.missing_rate > 0:
        missing = rng.random(n) < cov.missing_rate
        stakes[missing] = 0.0
        y = np.where(missing, np.nan, y)

    T = config.T
    match_id = f"sim{match_index:04d}"
    series = MatchSeries(match_id, y[:T], prewin, vaep[:T], scorediff[:T], winprob[:T], true_state=g[:T])
    return SimulatedMatch(match_id, series, prewin, g, y, vaep, scorediff, winprob, odds, stakes)


def simulate_dataset(config: SimConfig) -> list[SimulatedMatch]:
    return [simulate_match(config, i) for i in range(config.n_matches)]


def simulate_series(config: SimConfig) -> list[MatchSeries]:
    return [sim.series for sim in simulate_dataset(config)]


@dataclass
class RecoveryReport:
    truth: dict
    estimates: list[dict]
    std_errors: list[dict]
    covered: list[dict]
    failures: list[str]

    def summary(self) -> dict:
        out = {}
        for name, true in self.truth.items():
            est = np.array([e[name] for e in self.estimates])
            cov = [c[name] for c in self.covered if c.get(name) is not None]
            out[name] = {
                "truth": true,
                "bias": float(est.mean() - true) if est.size else float("nan"),
                "empirical_se": float(est.std(ddof=1)) if est.size > 1 else float("nan"),
                "mean_se": float(np.mean([s[name] for s in self.std_errors])) if est.size else float("nan"),
                "coverage": float(np.mean(cov)) if cov else float("nan"),
            }
        return out


def recovery_study(config: SimConfig, n_replications: int, variant: str = "baseline",
                   m: int = 100, span_sds: float = 5.0, **fit_kwargs) -> RecoveryReport:
    """Fit the model to ``n_replications`` fresh datasets and collect estimates."""
    from .estimation import GridConfig, fit, scalar_names

    if n_replications < 1:
        raise ConfigurationError("n_replications must be >= 1")
    names = scalar_names(variant)
    truth = {k: v for k, v in config.params.to_dict().items() if k in names}
    estimates, ses, covered, failures = [], [], [], []
    for rep in range(n_replications):
        cfg = SimConfig(config.n_matches, config.params, config.T, config.n_minutes,
                        seed=config.seed + 1009 * rep, covariates=config.covariates)
        try:
            res = fit(simulate_series(cfg), variant=variant, grid_config=GridConfig(m, span_sds), **fit_kwargs)
        except Exception as exc:  # recorded, not fatal
            logger.warning("replication %d failed: %s", rep, exc)
            failures.append(f"{rep}: {exc}")
            continue
        if res.status != "converged":
            failures.append(f"{rep}: {res.status}")
        est = res.params_hat.to_dict()
        estimates.append({k: est[k] for k in truth})
        ses.append({k: res.std_errors.get(k, float("nan")) for k in truth})
        covered.append({
            k: (res.ci_95[k][0] <= truth[k] <= res.ci_95[k][1]) if k in res.ci_95 else None for k in truth
        })
    return RecoveryReport(truth, estimates, ses, covered, failures)
