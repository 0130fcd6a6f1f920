import numpy as np
import pytest

from stakessm.exceptions import ConfigurationError
from stakessm.likelihood import forward
from stakessm.model import build_grid
from stakessm.simulate import (
    CovariateSettings,
    SimConfig,
    baseline_truth,
    odds_from_probabilities,
    recovery_study,
    simulate_dataset,
    simulate_match,
)


class TestSimulate:
    def test_deterministic(self, truth):
        a = simulate_match(SimConfig(3, truth, seed=4), 2)
        b = simulate_match(SimConfig(9, truth, seed=4), 2)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.state, b.state)
        c = simulate_match(SimConfig(3, truth, seed=5), 2)
        assert not np.array_equal(a.y, c.y)

    def test_shapes_and_ranges(self, truth):
        sim = simulate_match(SimConfig(1, truth, seed=1), 0)
        assert sim.series.T == 85 and sim.y.size == 90
        assert sim.odds.shape == (91, 3)
        assert np.all((sim.y >= 0) & (sim.y <= 1))
        assert np.all(sim.odds > 1)
        assert sim.series.true_state.size == 85
        assert len(sim.records()) == 91

    def test_vaep_moments(self, truth):
        sims = simulate_dataset(SimConfig(200, truth, seed=3))
        v = np.concatenate([s.vaepdiff for s in sims])
        assert v.mean() == pytest.approx(0.004, abs=4 * 0.161 / np.sqrt(v.size))
        assert v.std() == pytest.approx(0.161, rel=0.02)

    def test_boundary_frequencies(self, truth):
        y = np.concatenate([s.y for s in simulate_dataset(SimConfig(100, truth, seed=8))])
        se = np.sqrt(0.03 * 0.97 / y.size)
        assert np.mean(y == 0) == pytest.approx(0.03, abs=4 * se)
        assert np.mean(y == 1) == pytest.approx(0.03, abs=4 * se)

    def test_small_omega_limit(self, truth):
        params = truth.replace(omega=1e-9)
        sim = simulate_match(SimConfig(1, params, seed=2), 0)
        g = np.zeros(sim.state.size)
        for t in range(1, g.size):
            g[t] = params.phi * g[t - 1] + params.beta * sim.vaepdiff[t - 1]
        np.testing.assert_allclose(sim.state, g, atol=1e-6)

    def test_filter_tracks_state(self, truth):
        m = 60
        hits = []
        for sim in simulate_dataset(SimConfig(5, truth, seed=21)):
            grid = build_grid(truth, m)
            res = forward(sim.series, truth, grid)
            cell = np.clip(((sim.series.true_state - grid.c0) / grid.h).astype(int), 0, m - 1)
            hits.append(res.filtered_state[np.arange(cell.size), cell])
        assert np.mean(np.concatenate(hits)) > 1.0 / m

    def test_missing_rate(self, truth):
        cfg = SimConfig(20, truth, seed=6, covariates=CovariateSettings(missing_rate=0.2))
        y = np.concatenate([s.y for s in simulate_dataset(cfg)])
        assert 0.15 < np.mean(np.isnan(y)) < 0.25

    def test_odds_margin(self):
        probs = np.array([0.5, 0.3, 0.2])
        odds = odds_from_probabilities(probs, 0.05)
        np.testing.assert_allclose(odds, 1 + (1 / probs - 1) * 0.95)
        assert np.all(odds > 1) and np.sum(1 / odds) > 1

    def test_invalid_config(self, truth):
        with pytest.raises(ConfigurationError):
            SimConfig(0, truth)
        with pytest.raises(ConfigurationError):
            SimConfig(1, truth, T=86)
        with pytest.raises(ConfigurationError):
            recovery_study(SimConfig(2, truth), 0)


def test_recovery_study_smoke():
    report = recovery_study(SimConfig(8, baseline_truth(), seed=2), 1, m=100)
    summary = report.summary()
    assert set(summary) == {"phi", "omega", "sigma", "p", "q", "alpha0", "alpha", "beta"}
    assert len(report.estimates) == 1
