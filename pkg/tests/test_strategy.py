import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stakessm.exceptions import ConfigurationError
from stakessm.strategy import (
    NO_BET,
    MatchPath,
    StrategyConfig,
    backtest,
    backtest_match,
    window_label,
)


def path(vaep, score=None, odds=None, final=1, match_id="m"):
    n = len(vaep)
    minutes = np.arange(1, n + 1)
    score = np.zeros(n) if score is None else np.array(score, float)
    score[-1] = final
    odds = np.full(n, 2.0) if odds is None else np.asarray(odds, float)
    return MatchPath(match_id, minutes, np.asarray(vaep, float), score, odds)


def random_path(rng, match_id="r"):
    n = 90
    score = np.cumsum(rng.random(n) < 0.02) - np.cumsum(rng.random(n) < 0.02)
    return MatchPath(match_id, np.arange(1, n + 1), rng.normal(0, 0.05, n), score.astype(float),
                     rng.uniform(1.2, 6.0, n))


class TestBacktest:
    def test_single_bet(self):
        vaep = np.zeros(90)
        vaep[49] = 0.1
        odds = np.full(90, 3.0)
        odds[49] = 2.5
        res = backtest([path(vaep, odds=odds)], StrategyConfig(thresholds=(0.05,)))
        assert res.table()[0][0] == pytest.approx(1.5)

    def test_no_bet_marker(self):
        res = backtest([path(np.zeros(90))])
        assert all(v is None for row in res.table() for v in row)
        assert all(row[k] == NO_BET for row in res.rows() for k in row if k != "window")

    def test_constant_odds_home_wins(self, rng):
        paths = [path(rng.normal(0, 0.05, 90), match_id=str(i)) for i in range(10)]
        for row in backtest(paths).table():
            for v in row:
                assert v is None or v == pytest.approx(1.0)

    def test_draw_loses(self):
        res = backtest([path(np.full(90, 0.1), final=0)], StrategyConfig(thresholds=(0.05,)))
        assert res.table()[0][0] == -1.0

    def test_ineligible(self):
        score = np.zeros(90)
        score[30:] = 1
        res = backtest([path(np.full(90, 0.1), score=score)])
        assert res.eligible == []
        assert all(v is None for row in res.table() for v in row)

    def test_first_crossing(self):
        p = path(np.full(90, 0.1))
        res = backtest([p], StrategyConfig(thresholds=(0.05,), first_crossing=True))
        assert [c.n_bets for c in res.cells.values()] == [1, 1, 1]

    def test_missing_odds_skipped(self, caplog):
        odds = np.full(90, 2.0)
        odds[50] = np.nan
        with caplog.at_level(logging.WARNING):
            res = backtest([path(np.full(90, 0.1), odds=odds)], StrategyConfig(thresholds=(0.05,)))
        cell = res.cells[((45, 60), 0.05)]
        assert cell.skipped == 1 and cell.n_bets == 14
        assert "bet skipped" in caplog.text

    def test_raw_records(self, truth):
        from stakessm.simulate import SimConfig, simulate_dataset

        sims = simulate_dataset(SimConfig(12, truth, seed=3))
        records = [{k: str(v) for k, v in r.items()} for s in sims for r in s.records()]
        res = backtest(records)
        assert set(res.eligible) <= {s.match_id for s in sims}


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_bounds_and_monotone(self, seed):
        rng = np.random.default_rng(seed)
        paths = [random_path(rng, str(i)) for i in range(6)]
        cfg = StrategyConfig(thresholds=(0.01, 0.03, 0.06))
        res = backtest(paths, cfg)
        for w in cfg.windows:
            counts = [res.cells[(w, th)].n_bets for th in cfg.thresholds]
            assert counts == sorted(counts, reverse=True)
        assert all(v is None or v >= -1 for row in res.table() for v in row)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_additive(self, seed):
        rng = np.random.default_rng(seed)
        paths = [random_path(rng, str(i)) for i in range(5)]
        total = backtest(paths)
        for key, cell in total.cells.items():
            parts = [backtest_match(p, total.config)[key] for p in paths]
            assert cell.staked == pytest.approx(sum(c.staked for c in parts))
            assert cell.payout == pytest.approx(sum(c.payout for c in parts))

    def test_order_independent(self, rng):
        paths = [random_path(rng, str(i)) for i in range(8)]
        a = backtest(paths).count_rows()
        b = backtest(paths[::-1]).count_rows()
        for ra, rb in zip(a, b):
            assert ra["staked"] == rb["staked"]
            assert ra["payout"] == pytest.approx(rb["payout"], rel=1e-14)


class TestConfig:
    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            StrategyConfig(thresholds=(0.0,))
        with pytest.raises(ConfigurationError):
            StrategyConfig(windows=((45, 60), (55, 70)))
        with pytest.raises(ConfigurationError):
            StrategyConfig(windows=((60, 60),))

    def test_labels(self):
        assert window_label((45, 60)) == "45-59"
        assert window_label((75, None)) == "75+"
