import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from stakessm.beinf import (
    BeinfParams,
    beinf_cdf,
    beinf_density,
    beinf_logpdf,
    beinf_mean,
    beinf_sample,
    shapes_from_mean_sd,
)
from stakessm.exceptions import DomainError, InvalidParameterError

unit = st.floats(0.01, 0.99)


class TestShapes:
    def test_uniform(self):
        a, b = shapes_from_mean_sd(0.5, math.sqrt(1 / 3))
        assert a == pytest.approx(1.0, abs=1e-14)
        assert b == pytest.approx(1.0, abs=1e-14)

    def test_hand_substitution(self):
        a, b = shapes_from_mean_sd(0.25, 0.5)
        assert a == pytest.approx(0.75, abs=1e-14)
        assert b == pytest.approx(2.25, abs=1e-14)

    def test_mean_recovered(self):
        a, b = shapes_from_mean_sd(0.493, 0.300)
        assert abs(a / (a + b) - 0.493) < 1e-12

    @given(unit, unit)
    def test_round_trip(self, mu, sigma):
        a, b = shapes_from_mean_sd(mu, sigma)
        assert a > 0 and b > 0
        assert abs(a / (a + b) - mu) < 1e-10
        # sigma is the scale with sigma^2 = 1 / (a + b + 1)
        assert abs(math.sqrt(1.0 / (a + b + 1.0)) - sigma) < 1e-10
        sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)))
        assert abs(sd - sigma * math.sqrt(mu * (1 - mu))) < 1e-10

    @pytest.mark.parametrize("mu,sigma", [(0.0, 0.3), (1.0, 0.3), (0.5, 0.0), (0.5, 1.0), (-0.1, 0.2)])
    def test_domain(self, mu, sigma):
        with pytest.raises(InvalidParameterError):
            shapes_from_mean_sd(mu, sigma)

    def test_vectorised(self):
        a, b = shapes_from_mean_sd(np.array([0.2, 0.8]), 0.5)
        np.testing.assert_allclose(a, [0.6, 2.4])
        np.testing.assert_allclose(b, [2.4, 0.6])


class TestDensity:
    def test_point_masses(self):
        params = BeinfParams(0.4, 0.3, 0.1, 0.2)
        assert beinf_density(0.0, params) == pytest.approx(0.1, abs=1e-15)
        assert beinf_density(1.0, params) == pytest.approx(0.2, abs=1e-15)

    def test_uniform_interior(self):
        assert beinf_density(0.3, BeinfParams(0.5, math.sqrt(1 / 3))) == pytest.approx(1.0, abs=1e-12)

    def test_against_quadrature_normaliser(self):
        a, b = shapes_from_mean_sd(0.493, 0.300)
        kernel = lambda y: y ** (a - 1) * (1 - y) ** (b - 1)  # noqa: E731
        norm, _ = integrate.quad(kernel, 0, 1, epsabs=1e-14, epsrel=1e-13)
        oracle = kernel(0.5) / norm
        assert abs(beinf_density(0.5, BeinfParams(0.493, 0.300)) - oracle) < 1e-10

    def test_matches_scipy(self):
        y = np.linspace(0.01, 0.99, 25)
        a, b = shapes_from_mean_sd(0.3, 0.4)
        np.testing.assert_allclose(
            beinf_logpdf(y, 0.3, 0.4, 0.05, 0.1), np.log(0.85) + stats.beta.logpdf(y, a, b), rtol=1e-12
        )

    def test_zero_mass_gives_minus_inf(self):
        assert beinf_logpdf(0.0, 0.5, 0.3, 0.0, 0.1) == -np.inf

    @pytest.mark.parametrize("y", [-0.01, 1.01, np.nan])
    def test_outside_support(self, y):
        with pytest.raises(DomainError):
            beinf_logpdf(y, 0.5, 0.3)

    def test_invalid_masses(self):
        with pytest.raises(InvalidParameterError):
            BeinfParams(0.5, 0.3, 0.7, 0.5)
        with pytest.raises(InvalidParameterError):
            BeinfParams(0.5, 0.3, -0.1, 0.0)

    @settings(max_examples=40, deadline=None)
    @given(unit, st.floats(0.05, 0.95), st.floats(0, 0.45), st.floats(0, 0.45))
    def test_total_probability(self, mu, sigma, p, q):
        a, b = shapes_from_mean_sd(mu, sigma)
        # integrate the continuous part through the beta CDF to avoid endpoint singularities
        cont = (1 - p - q) * (stats.beta.cdf(1.0, a, b) - stats.beta.cdf(0.0, a, b))
        assert abs(p + q + cont - 1.0) < 1e-8

    def test_nonnegative(self):
        y = np.linspace(0, 1, 101)
        assert np.all(beinf_density(y, BeinfParams(0.2, 0.7, 0.0, 0.3)) >= 0)

    def test_cdf_jumps(self):
        assert beinf_cdf(0.0, 0.5, 0.3, 0.1, 0.2) == pytest.approx(0.1)
        assert beinf_cdf(1.0, 0.5, 0.3, 0.1, 0.2) == pytest.approx(1.0)
        assert beinf_cdf(np.nextafter(1.0, 0.0), 0.5, 0.3, 0.1, 0.2) == pytest.approx(0.8)

    def test_mean(self):
        assert beinf_mean(0.4, 0.1, 0.2) == pytest.approx(0.7 * 0.4 + 0.2)
        assert BeinfParams(0.4, 0.3, 0.1, 0.2).mean == pytest.approx(0.48)


class TestSampling:
    def test_all_zero(self):
        draws = beinf_sample(BeinfParams(0.5, 0.3, 1.0, 0.0), 1, size=1000)
        assert np.all(draws == 0.0)

    def test_all_one(self):
        draws = beinf_sample(BeinfParams(0.5, 0.3, 0.0, 1.0), 1, size=1000)
        assert np.all(draws == 1.0)

    def test_uniform_mean(self):
        draws = beinf_sample(BeinfParams(0.5, math.sqrt(1 / 3)), 7, size=100_000)
        assert abs(draws.mean() - 0.5) < 0.005

    def test_deterministic(self):
        params = BeinfParams(0.3, 0.2, 0.1, 0.1)
        np.testing.assert_array_equal(beinf_sample(params, 3, size=50), beinf_sample(params, 3, size=50))

    def test_scalar_draw(self):
        assert isinstance(beinf_sample(BeinfParams(0.3, 0.2), 0), float)

    def test_matches_density(self):
        params = BeinfParams(0.35, 0.4, 0.05, 0.08)
        n = 40_000
        draws = beinf_sample(params, 99, size=n)
        n0, n1 = int(np.sum(draws == 0)), int(np.sum(draws == 1))
        assert stats.binomtest(n0, n, params.p).pvalue > 1e-3
        assert stats.binomtest(n1, n, params.q).pvalue > 1e-3
        inside = draws[(draws > 0) & (draws < 1)]
        a, b = params.shapes
        assert stats.kstest(inside, stats.beta(a, b).cdf).pvalue > 1e-3
