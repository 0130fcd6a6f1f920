"""Backtest of the threshold strategy: back the home side when vaepdiff is high.

Only matches level at minute 45 are eligible.  Within each minute window,
every minute whose vaepdiff exceeds the threshold places one unit on the home
win at that minute's decimal odds (or only the first such minute, if
configured).  Bets settle on the final result; a draw loses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import group_by_match, _num
from .exceptions import ConfigurationError, DataError

logger = logging.getLogger(__name__)

NO_BET = "no bet"
DEFAULT_THRESHOLDS = (0.02, 0.03, 0.05)
DEFAULT_WINDOWS = ((45, 60), (60, 75), (75, None))


@dataclass(frozen=True)
class StrategyConfig:
    """Windows are half-open ``[start, stop)``; ``stop=None`` runs to the final minute."""

    thresholds: tuple = DEFAULT_THRESHOLDS
    windows: tuple = DEFAULT_WINDOWS
    stake: float = 1.0
    eligibility_minute: int = 45
    first_crossing: bool = False

    def __post_init__(self):
        if not self.thresholds or any(t <= 0 for t in self.thresholds):
            raise ConfigurationError("thresholds must be positive")
        if self.stake <= 0:
            raise ConfigurationError("stake must be positive")
        spans = sorted((a, math.inf if b is None else b) for a, b in self.windows)
        for (a, b) in spans:
            if not a < b:
                raise ConfigurationError(f"empty window [{a}, {b})")
        for (_, b1), (a2, _) in zip(spans, spans[1:]):
            if a2 < b1:
                raise ConfigurationError("windows must be disjoint")


def window_label(window) -> str:
    a, b = window
    return f"{a}+" if b is None else f"{a}-{b - 1}"


@dataclass
class MatchPath:
    """In-game path needed for settlement: minutes 1..n with home odds."""

    match_id: str
    minutes: np.ndarray
    vaepdiff: np.ndarray
    scorediff: np.ndarray
    odds_home: np.ndarray

    @property
    def final_scorediff(self) -> float:
        return float(self.scorediff[-1])

    def scorediff_at(self, minute: int) -> float:
        idx = np.flatnonzero(self.minutes <= minute)
        return float(self.scorediff[idx[-1]]) if idx.size else 0.0


def match_paths(records) -> list[MatchPath]:
    """Per-match paths from raw records (minute 0 rows are ignored)."""
    paths = []
    for mid, rows in group_by_match(records).items():
        items = []
        for r in rows:
            minute = _num(r.get("minute"), "minute", r)
            if math.isnan(minute) or minute < 1:
                continue
            items.append((int(minute), r))
        items.sort(key=lambda it: it[0])
        if not items:
            raise DataError(f"match {mid!r}: no in-game minutes")
        minutes = np.array([t for t, _ in items])
        if np.any(np.diff(minutes) == 0):
            raise DataError(f"match {mid!r}: duplicate minutes")
        vaep = np.array([_num(r.get("vaepdiff"), "vaepdiff", r) for _, r in items])
        odds = np.array([_num(r.get("odds_home"), "odds_home", r) for _, r in items])
        score = np.array([_num(r.get("scorediff"), "scorediff", r) for _, r in items])
        last = 0.0
        for i, s in enumerate(score):
            last = last if math.isnan(s) else s
            score[i] = last
        paths.append(MatchPath(mid, minutes, vaep, score, odds))
    return paths


@dataclass
class Cell:
    n_bets: int = 0
    staked: float = 0.0
    payout: float = 0.0
    skipped: int = 0

    @property
    def ret(self):
        """Net return per unit staked, or ``None`` when no bet was placed."""
        if self.n_bets == 0:
            return None
        return (self.payout - self.staked) / self.staked

    def add(self, other: "Cell"):
        self.n_bets += other.n_bets
        self.staked += other.staked
        self.payout += other.payout
        self.skipped += other.skipped


@dataclass
class BacktestResult:
    config: StrategyConfig
    cells: dict = field(default_factory=dict)  # (window, threshold) -> Cell
    eligible: list = field(default_factory=list)

    def table(self) -> list[list]:
        """Rows per window, columns per threshold; ``None`` marks no bets."""
        return [[self.cells[(w, th)].ret for th in self.config.thresholds] for w in self.config.windows]

    def rows(self) -> list[dict]:
        out = []
        for w in self.config.windows:
            row = {"window": window_label(w)}
            for th in self.config.thresholds:
                ret = self.cells[(w, th)].ret
                row[f"{th:g}"] = NO_BET if ret is None else ret
            out.append(row)
        return out

    def count_rows(self) -> list[dict]:
        out = []
        for w in self.config.windows:
            for th in self.config.thresholds:
                c = self.cells[(w, th)]
                out.append({"window": window_label(w), "threshold": th, "n_bets": c.n_bets,
                            "staked": c.staked, "payout": c.payout, "skipped": c.skipped})
        return out


def _in_window(minutes, window):
    a, b = window
    return (minutes >= a) & (minutes < (math.inf if b is None else b))


def backtest_match(path: MatchPath, config: StrategyConfig) -> dict:
    """Cells for one match (all empty when the match is not eligible)."""
    cells = {(w, th): Cell() for w in config.windows for th in config.thresholds}
    if path.scorediff_at(config.eligibility_minute) != 0:
        return cells
    home_won = path.final_scorediff > 0
    for w in config.windows:
        inside = _in_window(path.minutes, w)
        for th in config.thresholds:
            cell = cells[(w, th)]
            for i in np.flatnonzero(inside & (path.vaepdiff > th)):
                odds = path.odds_home[i]
                if not (np.isfinite(odds) and odds > 1.0):
                    logger.warning("match %s minute %d: no home odds, bet skipped",
                                   path.match_id, path.minutes[i])
                    cell.skipped += 1
                    continue
                cell.n_bets += 1
                cell.staked += config.stake
                cell.payout += config.stake * odds if home_won else 0.0
                if config.first_crossing:
                    break
    return cells


def backtest(data, config: StrategyConfig | None = None) -> BacktestResult:
    """Returns table over all matches; ``data`` is raw records or :class:`MatchPath` objects."""
    config = config or StrategyConfig()
    data = list(data)
    paths = data if data and all(isinstance(d, MatchPath) for d in data) else match_paths(data)
    result = BacktestResult(config, {(w, th): Cell() for w in config.windows for th in config.thresholds})
    for path in paths:
        if path.scorediff_at(config.eligibility_minute) == 0:
            result.eligible.append(path.match_id)
        for key, cell in backtest_match(path, config).items():
            result.cells[key].add(cell)
    return result
