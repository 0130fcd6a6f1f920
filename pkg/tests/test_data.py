import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stakessm.data import (
    RAW_COLUMNS,
    TRUTH_COLUMN,
    build_match_series,
    cross_correlation,
    descriptives,
    format_value,
    implied_probability,
    ingest,
    prewindiff_from_odds,
    read_records,
    relative_stakes,
    write_processed,
    write_rows,
)
from stakessm.exceptions import DataError
from stakessm.model import MatchSeries
from stakessm.simulate import SimConfig, simulate_dataset


def raw_rows(n_minutes=5, match_id="a", pregame=True, **overrides):
    rows = []
    if pregame:
        rows.append(dict(match_id=match_id, minute=0, odds_home=2.0, odds_away=3.0, odds_draw=3.6))
    for t in range(1, n_minutes + 1):
        row = dict(match_id=match_id, minute=t, stake_home=30, stake_away=70, odds_home=2.0,
                   odds_away=3.0, odds_draw=3.6, vaepdiff=0.1, scorediff=0, winprob_home="")
        row.update(overrides)
        rows.append({k: str(v) for k, v in row.items()})
    return rows


def write_raw(path, sims):
    rows = [r for s in sims for r in s.records()]
    write_rows(path, rows, list(RAW_COLUMNS) + [TRUTH_COLUMN])


class TestTransforms:
    def test_relative_stakes(self):
        assert relative_stakes(30, 70) == pytest.approx(0.3)
        assert math.isnan(relative_stakes(0, 0))
        assert relative_stakes(5, 0) == 1.0
        with pytest.raises(DataError):
            relative_stakes(-1, 2)

    @given(st.floats(0, 1e6), st.floats(0, 1e6))
    def test_shares_sum_to_one(self, h, a):
        if h + a > 0:
            assert relative_stakes(h, a) + relative_stakes(a, h) == pytest.approx(1.0)

    def test_implied_probability(self):
        np.testing.assert_allclose(implied_probability(2.0, 3.0, 3.6), (0.45, 0.30, 0.25))
        assert prewindiff_from_odds(2.0, 3.0, 3.6) == pytest.approx(0.15)
        fair = implied_probability(1 / 0.5, 1 / 0.3, 1 / 0.2)
        np.testing.assert_allclose(fair, (0.5, 0.3, 0.2))
        assert prewindiff_from_odds(2.7, 2.7, 3.1) == 0.0
        with pytest.raises(DataError):
            implied_probability(1.0, 2.0, 3.0)


class TestBuildSeries:
    def test_truncation(self):
        series = build_match_series(raw_rows(93))
        assert series.T == 85
        assert series.y[0] == pytest.approx(0.3)
        assert series.prewindiff == pytest.approx(0.15)
        assert series.winprobteam[0] == pytest.approx(0.45)

    def test_missing_minute(self):
        rows = [r for r in raw_rows(6) if r["minute"] != "3"]
        series = build_match_series(rows)
        assert math.isnan(series.y[2]) and series.vaepdiff[2] == 0.0
        assert series.winprobteam[2] == pytest.approx(0.45)

    def test_zero_stakes_missing(self):
        series = build_match_series(raw_rows(3, stake_home=0, stake_away=0))
        assert np.all(np.isnan(series.y))

    def test_duplicate_minute(self):
        rows = raw_rows(4)
        with pytest.raises(DataError, match="duplicate"):
            build_match_series(rows + [rows[2]])

    def test_missing_pregame(self):
        with pytest.raises(DataError, match="pre-game"):
            build_match_series(raw_rows(4, pregame=False))

    def test_bad_number(self):
        with pytest.raises(DataError, match="vaepdiff"):
            build_match_series(raw_rows(3, vaepdiff="abc"))

    def test_score_carried_forward(self):
        rows = raw_rows(4)
        rows[2]["scorediff"] = "1"
        rows[3]["scorediff"] = ""
        series = build_match_series(rows)
        np.testing.assert_array_equal(series.scorediff, [0, 1, 1, 0])


class TestFiles:
    def test_season_ingest(self, tmp_path, truth):
        path = tmp_path / "raw.csv"
        write_raw(path, simulate_dataset(SimConfig(306, truth, seed=1)))
        processed = ingest(path)
        assert len(processed) == 306
        assert sum(pm.series.T for pm in processed) == 26_010

    def test_idempotent(self, tmp_path, truth):
        raw = tmp_path / "raw.csv"
        write_raw(raw, simulate_dataset(SimConfig(3, truth, seed=2)))
        once, twice = tmp_path / "p1.csv", tmp_path / "p2.csv"
        write_processed(once, ingest(raw))
        write_processed(twice, ingest(once))
        assert once.read_bytes() == twice.read_bytes()
        for a, b in zip(ingest(raw), ingest(twice)):
            np.testing.assert_array_equal(a.series.y, b.series.y)
            np.testing.assert_array_equal(a.series.true_state, b.series.true_state)
            assert a.series.prewindiff == b.series.prewindiff

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("match_id,minute,stake_home\na,1,3\n")
        with pytest.raises(DataError, match="stake_away"):
            read_records(path)

    def test_format_value(self):
        assert format_value(3.0) == "3"
        assert format_value(0.1) == "0.1"
        assert format_value(float("nan")) == ""
        assert format_value(" 2.50 ") == "2.5"
        assert format_value("abc") == "abc"


class TestDescriptives:
    def test_constant(self):
        m = MatchSeries("c", np.full(5, 0.4), 0.2, np.full(5, 0.1))
        table = descriptives([m])
        assert table["relativestake"]["sd"] == 0.0
        assert table["prewindiff"]["n"] == 1

    def test_prewindiff_one_per_match(self):
        a = MatchSeries("a", np.full(10, 0.5), 0.5, np.zeros(10))
        b = MatchSeries("b", np.full(2, 0.5), -0.5, np.zeros(2))
        sd = descriptives([a, b])["prewindiff"]["sd"]
        replicated = np.std(np.r_[np.full(10, 0.5), np.full(2, -0.5)], ddof=1)
        assert sd == pytest.approx(np.std([0.5, -0.5], ddof=1))
        assert sd != pytest.approx(replicated)

    def test_simulated_vaep(self, truth):
        sims = simulate_dataset(SimConfig(306, truth, seed=4))
        v = descriptives([s.series for s in sims])["vaepdiff"]
        assert v["mean"] == pytest.approx(0.004, abs=0.003)
        assert v["sd"] == pytest.approx(0.161, rel=0.02)

    def test_empty(self):
        with pytest.raises(DataError):
            descriptives([])


class TestCrossCorrelation:
    def test_lag_one_copy(self, rng):
        v = rng.normal(size=60)
        y = np.empty(60)
        y[1:] = 0.5 + 0.1 * (v[:-1] - v.mean()) / v.std()
        y[0] = 0.5
        cc = cross_correlation([MatchSeries("x", np.clip(y, 0, 1), 0.0, v)], max_lag=5)
        assert cc.per_match["x"][1] == pytest.approx(1.0, abs=1e-3)

    def test_white_noise_band(self, rng):
        T = 85
        matches = [MatchSeries(f"m{i}", rng.random(T), 0.0, rng.normal(size=T)) for i in range(40)]
        cc = cross_correlation(matches, 20)
        vals = np.concatenate(list(cc.per_match.values()))
        inside = np.mean(np.abs(vals) <= 2 / np.sqrt(T - 10))
        assert inside > 0.9

    def test_truncated_at_first_goal(self, rng):
        score = np.zeros(40)
        score[10:] = 1
        m = MatchSeries("g", rng.random(40), 0.0, rng.normal(size=40), score)
        cc = cross_correlation([m], 20)
        assert cc.skipped == ["g"] and not cc.per_match

    def test_bad_lag(self):
        with pytest.raises(DataError):
            cross_correlation([], 0)

    def test_rows(self, rng):
        m = MatchSeries("r", rng.random(30), 0.0, rng.normal(size=30))
        rows = cross_correlation([m], 3).rows()
        assert [r["match_id"] for r in rows] == ["r"] * 4 + ["mean"] * 4
