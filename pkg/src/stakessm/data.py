"""Raw per-minute betting records to model-ready series, plus diagnostics.

Raw CSV layout (header required, extra columns ignored)::

    match_id, minute, stake_home, stake_away, odds_home, odds_away,
    odds_draw, vaepdiff, scorediff, winprob_home

Minute 0 carries the pre-game odds.  Lines starting with ``#`` are comments
(provenance headers).  Processed files repeat the raw columns for minutes
1..T and append ``relativestake``, ``prewindiff`` and ``winprobteam``; they
can be ingested again and produce the same output.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError
from .model import MatchSeries
from .splines import T_MAX

logger = logging.getLogger(__name__)

RAW_COLUMNS = ("match_id", "minute", "stake_home", "stake_away", "odds_home", "odds_away",
               "odds_draw", "vaepdiff", "scorediff", "winprob_home")
DERIVED_COLUMNS = ("relativestake", "prewindiff", "winprobteam")
TRUTH_COLUMN = "sim_state"


def relative_stakes(stake_home, stake_away):
    """Home share of the stakes; NaN when nothing was staked."""
    home = np.asarray(stake_home, dtype=float)
    away = np.asarray(stake_away, dtype=float)
    if np.any(home < 0) or np.any(away < 0):
        raise DataError("stakes must be non-negative")
    total = home + away
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, home / np.where(total > 0, total, 1.0), np.nan)
    return float(out) if out.ndim == 0 else out


def implied_probability(odds_home: float, odds_away: float, odds_draw: float) -> tuple[float, float, float]:
    """Inverse decimal odds normalised to sum to one (proportional overround removal)."""
    odds = np.array([odds_home, odds_away, odds_draw], dtype=float)
    if not np.all(np.isfinite(odds)) or np.any(odds <= 1.0):
        raise DataError(f"decimal odds must exceed 1, got {tuple(odds)}")
    inv = 1.0 / odds
    probs = inv / inv.sum()
    return float(probs[0]), float(probs[1]), float(probs[2])


def prewindiff_from_odds(odds_home: float, odds_away: float, odds_draw: float) -> float:
    ph, pa, _ = implied_probability(odds_home, odds_away, odds_draw)
    return ph - pa


def _num(text, what: str, row) -> float:
    """Parse an optional numeric field; empty means missing (NaN)."""
    if text is None:
        return math.nan
    text = str(text).strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(f"match {row.get('match_id')!r} minute {row.get('minute')!r}: "
                        f"{what} is not a number: {text!r}") from None


def read_records(path) -> list[dict]:
    """Rows of a raw or processed CSV as dicts of strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        reader = csv.DictReader(lines)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [c for c in RAW_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing column(s): {', '.join(missing)}")
        return list(reader)


def group_by_match(records) -> dict[str, list[dict]]:
    """Records per match id, in order of first appearance."""
    groups: dict[str, list[dict]] = {}
    for row in records:
        groups.setdefault(str(row["match_id"]), []).append(row)
    return groups


@dataclass
class ProcessedMatch:
    series: MatchSeries
    rows: list[dict] = field(repr=False)


def _minute(row) -> int:
    value = _num(row.get("minute"), "minute", row)
    if not math.isfinite(value) or value != int(value) or value < 0:
        raise DataError(f"match {row.get('match_id')!r}: invalid minute {row.get('minute')!r}")
    return int(value)


def _odds(row):
    vals = [_num(row.get(k), k, row) for k in ("odds_home", "odds_away", "odds_draw")]
    return None if any(math.isnan(v) for v in vals) else vals


def process_match(records, t_max: int = T_MAX) -> ProcessedMatch:
    """Build the model-ready series for one match.

    Minutes after ``t_max`` are dropped; minutes without stakes become missing
    observations.  Missing vaepdiff counts as 0 and missing scorediff is
    carried forward.  The in-game win probability comes from that minute's
    odds, else from ``winprob_home``, else from the previous minute.
    """
    records = list(records)
    if not records:
        raise DataError("no records for match")
    match_id = str(records[0]["match_id"])
    by_minute = {}
    for row in records:
        t = _minute(row)
        if t in by_minute:
            raise DataError(f"match {match_id!r}: duplicate minute {t}")
        by_minute[t] = row

    prewin_col = [_num(r.get("prewindiff"), "prewindiff", r) for r in records]
    prewin_col = [v for v in prewin_col if math.isfinite(v)]
    if 0 in by_minute and _odds(by_minute[0]) is not None:
        pre_probs = implied_probability(*_odds(by_minute[0]))
        prewin = pre_probs[0] - pre_probs[1]
        last_wp = pre_probs[0]
    elif prewin_col:
        prewin = prewin_col[0]
        last_wp = math.nan
    else:
        raise DataError(f"match {match_id!r}: pre-game odds (minute 0) missing")

    minutes = [t for t in by_minute if t >= 1]
    if not minutes:
        raise DataError(f"match {match_id!r}: no in-game minutes")
    T = min(max(minutes), t_max)
    y = np.full(T, np.nan)
    vaep = np.zeros(T)
    score = np.zeros(T)
    wp = np.zeros(T)
    truth = np.full(T, np.nan)
    has_truth = False
    last_score = 0.0
    rows = []
    for t in range(1, T + 1):
        row = by_minute.get(t, {"match_id": match_id, "minute": str(t)})
        sh = _num(row.get("stake_home"), "stake_home", row)
        sa = _num(row.get("stake_away"), "stake_away", row)
        if (not math.isnan(sh) and sh < 0) or (not math.isnan(sa) and sa < 0):
            raise DataError(f"match {match_id!r} minute {t}: negative stake")
        if not (math.isnan(sh) and math.isnan(sa)):
            y[t - 1] = relative_stakes(0.0 if math.isnan(sh) else sh, 0.0 if math.isnan(sa) else sa)
        v = _num(row.get("vaepdiff"), "vaepdiff", row)
        vaep[t - 1] = 0.0 if math.isnan(v) else v
        s = _num(row.get("scorediff"), "scorediff", row)
        last_score = last_score if math.isnan(s) else s
        score[t - 1] = last_score
        odds = _odds(row)
        derived_wp = _num(row.get("winprobteam"), "winprobteam", row)
        if odds is not None:
            last_wp = implied_probability(*odds)[0]
        elif math.isfinite(derived_wp):
            last_wp = derived_wp
        else:
            col = _num(row.get("winprob_home"), "winprob_home", row)
            if math.isfinite(col):
                last_wp = col
        if math.isnan(last_wp):
            raise DataError(f"match {match_id!r} minute {t}: no win probability available")
        wp[t - 1] = last_wp
        st = _num(row.get(TRUTH_COLUMN), TRUTH_COLUMN, row)
        if math.isfinite(st):
            truth[t - 1] = st
            has_truth = True
        out = {c: row.get(c, "") for c in RAW_COLUMNS}
        out["match_id"], out["minute"] = match_id, t
        out["relativestake"] = y[t - 1]
        out["prewindiff"] = prewin
        out["winprobteam"] = wp[t - 1]
        if has_truth or TRUTH_COLUMN in row:
            out[TRUTH_COLUMN] = row.get(TRUTH_COLUMN, "")
        rows.append(out)
    if not -1.0 <= prewin <= 1.0:
        raise DataError(f"match {match_id!r}: prewindiff {prewin} outside [-1, 1]")
    series = MatchSeries(match_id, y, prewin, vaep, score, wp, true_state=truth if has_truth else None)
    return ProcessedMatch(series, rows)


def build_match_series(records, t_max: int = T_MAX) -> MatchSeries:
    return process_match(records, t_max).series


def ingest(path, t_max: int = T_MAX) -> list[ProcessedMatch]:
    return [process_match(rows, t_max) for rows in group_by_match(read_records(path)).values()]


def load_series(path, t_max: int = T_MAX) -> list[MatchSeries]:
    return [pm.series for pm in ingest(path, t_max)]


def format_value(v) -> str:
    """Canonical text for CSV cells: shortest round-trip floats, empty for missing."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    text = str(v).strip()
    try:
        return format_value(float(text)) if text else ""
    except ValueError:
        return text


def write_rows(path, rows: list[dict], columns, header_lines=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c, "")) for c in columns])


def write_processed(path, processed: list[ProcessedMatch], header_lines=()):
    columns = list(RAW_COLUMNS) + list(DERIVED_COLUMNS)
    if any(TRUTH_COLUMN in r for pm in processed for r in pm.rows):
        columns.append(TRUTH_COLUMN)
    write_rows(path, [r for pm in processed for r in pm.rows], columns, header_lines)


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"n": 0, "mean": math.nan, "sd": math.nan, "min": math.nan, "max": math.nan}
    return {"n": int(v.size), "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "min": float(v.min()), "max": float(v.max())}


def descriptives(matches) -> dict[str, dict]:
    """n, mean, sd, min and max of relative stakes, prewindiff and vaepdiff.

    prewindiff is summarised with one value per match.
    """
    matches = list(matches)
    if not matches:
        raise DataError("descriptives need at least one match")
    return {
        "relativestake": _summary(np.concatenate([m.y for m in matches])),
        "prewindiff": _summary([m.prewindiff for m in matches]),
        "vaepdiff": _summary(np.concatenate([m.vaepdiff for m in matches])),
    }


def descriptives_rows(table: dict) -> list[dict]:
    return [{"variable": k, **v} for k, v in table.items()]


@dataclass
class CrossCorrelation:
    max_lag: int
    per_match: dict
    mean: np.ndarray
    skipped: list

    def rows(self) -> list[dict]:
        out = []
        for mid, vals in self.per_match.items():
            out += [{"match_id": mid, "lag": k, "value": float(v)} for k, v in enumerate(vals)]
        out += [{"match_id": "mean", "lag": k, "value": float(v)} for k, v in enumerate(self.mean)]
        return out


def _pearson(x, y) -> float:
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2:
        return math.nan
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc / den) if den > 0 else math.nan


def first_goal_segment(match: MatchSeries) -> int:
    """Number of leading minutes before the first goal."""
    nonzero = np.flatnonzero(match.scorediff != 0)
    return int(nonzero[0]) if nonzero.size else match.T


def cross_correlation(matches, max_lag: int = 20) -> CrossCorrelation:
    """Correlation of vaepdiff at ``t`` with relative stakes at ``t + k``, k = 0..max_lag.

    Each match uses only the minutes before its first goal; segments shorter
    than ``max_lag + 2`` are skipped with a notice.
    """
    if max_lag < 1:
        raise DataError("max_lag must be >= 1")
    per_match, skipped = {}, []
    for m in matches:
        n = first_goal_segment(m)
        if n < max_lag + 2:
            skipped.append(m.match_id)
            logger.info("match %s skipped: %d minutes before the first goal", m.match_id, n)
            continue
        x, y = m.vaepdiff[:n], m.y[:n]
        per_match[m.match_id] = np.array([_pearson(x[: n - k], y[k:]) for k in range(max_lag + 1)])
    if per_match:
        stacked = np.vstack(list(per_match.values()))
        with np.errstate(invalid="ignore"):
            mean = np.array([np.nanmean(c) if np.isfinite(c).any() else math.nan for c in stacked.T])
    else:
        mean = np.full(max_lag + 1, math.nan)
    return CrossCorrelation(max_lag, per_match, mean, skipped)
