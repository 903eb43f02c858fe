import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from onebit.bounds import (DensityTable, analytic_noiseless_bound, correlation_upper_bound,
                           density_sy, density_table, fisher_info, separability_threshold,
                           stam_gap, threshold_psi)
from onebit.errors import DomainError
from onebit.system import ls_closed_form

from oracles import (FISHER_EPS01_SIGMA1, FISHER_NOISELESS_SIGMA1,
                     FISHER_NOISELESS_SIGMA_HALF, mc_threshold)

EPSILONS = [0.0, 0.1, 0.25, 0.5]


class TestSYDensity:
    def test_information_free_channel_is_gaussian(self):
        z = np.linspace(-4, 4, 33)
        assert_allclose(density_sy(0.5)(z), stats.norm.pdf(z), rtol=1e-14)

    def test_noiseless_values(self):
        assert_allclose(density_sy(0.0)(1.0), 0.48394, rtol=1e-4)
        assert density_sy(0.0)(-1.0) == 0.0

    @pytest.mark.parametrize("eps", EPSILONS)
    def test_unit_mass_and_cdf(self, eps):
        d = density_sy(eps)
        mass, _ = integrate.quad(d.pdf, -np.inf, 0.0)
        mass += integrate.quad(d.pdf, 0.0, np.inf)[0]
        assert_allclose(mass, 1.0, rtol=1e-10)
        assert_allclose(d.cdf(0.0), eps, atol=1e-15)
        assert_allclose(d.cdf(40.0), 1.0, rtol=1e-14)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(DomainError):
            density_sy(0.6)


class TestDensityTable:
    @pytest.mark.parametrize("sigma", [0.05, 0.5, 1.0, 10.0])
    @pytest.mark.parametrize("eps", EPSILONS)
    def test_invariants(self, sigma, eps):
        t = density_table(sigma, eps)
        assert np.all(t.p >= 1e-300)
        assert abs(t.mass() - 1.0) <= 1e-4
        inner = slice(2, -2)
        fd = np.gradient(t.p, t.grid)
        assert np.max(np.abs(t.dp[inner] - fd[inner])) <= 1e-4 * max(1.0, 1.0 / sigma ** 2)

    def test_default_grid(self):
        t = density_table(1.0, 0.1)
        assert len(t.grid) >= 8192
        assert_allclose([t.grid[0], t.grid[-1]], [-16.0, 16.0])

    def test_csv_round_trip(self, tmp_path):
        t = density_table(0.7, 0.25, n_grid=257)
        t.to_csv(tmp_path / "d.csv")
        back = DensityTable.from_csv(tmp_path / "d.csv")
        for name in ("grid", "p", "dp"):
            np.testing.assert_array_equal(getattr(back, name), getattr(t, name))

    def test_quadrature_matches_closed_form(self):
        a = density_table(0.8, 0.1, n_grid=401, method="closed_form")
        b = density_table(0.8, 0.1, n_grid=401, method="quadrature")
        assert_allclose(b.p, a.p, atol=1e-10)
        assert_allclose(b.dp, a.dp, atol=1e-10)

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            density_table(0.0, 0.1)
        with pytest.raises(DomainError):
            density_table(1.0, 0.1, method="fft")


class TestFisherInfo:
    def test_gaussian_case(self):
        assert_allclose(fisher_info(1.0, 0.5), 0.5, atol=1e-4)

    @pytest.mark.parametrize("sigma", [0.1, 0.7, 3.0])
    def test_gaussian_case_grid(self, sigma):
        assert_allclose(fisher_info(sigma, 0.5), 1 / (1 + sigma ** 2), rtol=1e-6)

    @pytest.mark.parametrize("eps", EPSILONS)
    def test_large_sigma_below_gaussian(self, eps):
        assert fisher_info(10.0, eps) <= 0.01 + 1e-4

    def test_noiseless_half(self):
        v = fisher_info(0.5, 0.0)
        assert 0 < 0.25 * v < 1

    def test_high_precision_values(self):
        assert_allclose(fisher_info(1.0, 0.0), FISHER_NOISELESS_SIGMA1, rtol=1e-7)
        assert_allclose(fisher_info(0.5, 0.0), FISHER_NOISELESS_SIGMA_HALF, rtol=1e-7)
        assert_allclose(fisher_info(1.0, 0.1), FISHER_EPS01_SIGMA1, rtol=1e-7)

    def test_quadrature_route(self):
        assert_allclose(fisher_info(1.0, 0.0, method="quadrature", n_grid=2049),
                        FISHER_NOISELESS_SIGMA1, rtol=1e-5)

    @pytest.mark.parametrize("c", [0.3, 2.0, 7.0])
    def test_scale_identity(self, c):
        for sigma, eps in [(0.4, 0.0), (1.0, 0.1), (2.5, 0.25)]:
            scaled = density_table(sigma, eps, scale=c).fisher()
            assert_allclose(scaled, fisher_info(sigma, eps) / c ** 2, rtol=1e-4)

    @pytest.mark.parametrize("eps", EPSILONS)
    def test_ratio_is_increasing_and_below_one(self, eps):
        sig = np.logspace(-2, 2, 41)
        h = np.array([s * s * fisher_info(s, eps) for s in sig])
        assert np.all(np.diff(h) > 0)
        assert np.all((h >= 0) & (h < 1))

    def test_more_noise_means_less_information(self):
        vals = [fisher_info(0.8, e) for e in EPSILONS]
        assert np.all(np.diff(vals) < 0)

    def test_noiseless_stam_inequality_audit(self):
        # the audit finds I(G + |S|) above 2/3: the inequality fails at sigma = 1
        assert_allclose(stam_gap(1.0), FISHER_NOISELESS_SIGMA1 - 2 / 3, rtol=1e-6)
        gaps = stam_gap(np.array([0.3, 1.0, 3.0]))
        assert gaps.shape == (3,) and np.all(gaps > 0)


class TestCorrelationBound:
    def test_gaussian_example(self):
        b = correlation_upper_bound(2.0, 0.5)
        assert_allclose([b.sigma_min ** 2, b.corr_upper], [1.0, math.sqrt(0.5)], rtol=1e-6)
        assert b.method == "numeric"

    @pytest.mark.parametrize("delta", [1.5, 2.0, 4.0, 8.0])
    def test_gaussian_closed_form(self, delta):
        assert_allclose(correlation_upper_bound(delta, 0.5).corr_upper,
                        math.sqrt((delta - 1) / delta), atol=1e-6)

    def test_dominates_least_squares(self):
        assert correlation_upper_bound(4.0, 0.0).corr_upper >= ls_closed_form(4.0, 0.0).correlation

    @given(delta=st.floats(1.05, 40.0), eps=st.sampled_from([0.0, 0.1, 0.3]))
    @settings(max_examples=15)
    def test_dominates_least_squares_everywhere(self, delta, eps):
        assert correlation_upper_bound(delta, eps).corr_upper >= ls_closed_form(delta, eps).correlation - 1e-9

    def test_vanishes_near_one(self):
        b = correlation_upper_bound(1.0001, 0.1)
        assert b.sigma_min > 10 and b.corr_upper < 0.1

    def test_in_unit_interval_and_ordered(self):
        vals = [correlation_upper_bound(d, 0.1).corr_upper for d in (1.5, 2, 4, 8, 16)]
        assert all(0 < v < 1 for v in vals)
        assert np.all(np.diff(vals) > 0)

    def test_rejects_small_delta(self):
        with pytest.raises(DomainError):
            correlation_upper_bound(1.0, 0.1)


class TestAnalyticBound:
    def test_examples(self):
        assert_allclose(analytic_noiseless_bound(2.0).corr_upper, 0.81650, rtol=1e-5)
        assert_allclose(analytic_noiseless_bound(3.0).sigma_min ** 2, 0.25)
        assert analytic_noiseless_bound(3.0).method == "analytic_noiseless"

    @pytest.mark.parametrize("delta", [1.5, 2.0, 4.0, 8.0])
    def test_does_not_exclude_least_squares(self, delta):
        assert (math.pi / 2 - 1) / (delta - 1) >= analytic_noiseless_bound(delta).sigma_min ** 2

    def test_rejects_small_delta(self):
        with pytest.raises(DomainError):
            analytic_noiseless_bound(0.9)


class TestSeparabilityThreshold:
    def test_information_free_channel(self, engine):
        assert_allclose(separability_threshold(0.5, engine), 2.0, atol=1e-3)

    def test_noiseless_sentinel(self, engine):
        assert separability_threshold(0.0, engine) == math.inf

    def test_monte_carlo_oracle(self, engine):
        ref, _ = mc_threshold(0.1)
        val = separability_threshold(0.1, engine)
        assert 2 < val < math.inf
        assert_allclose(val, ref, rtol=1e-2)

    def test_decreasing_in_noise(self, engine):
        eps = np.arange(0.05, 0.501, 0.05)
        vals = [separability_threshold(e, engine) for e in eps]
        assert np.all(np.diff(vals) < 0)

    def test_psi_closed_inner_integral(self, engine):
        # at c = 0 the data carry no signal and psi = E[G_-^2] = 1/2
        assert_allclose(threshold_psi(0.0, 0.2, engine), 0.5, rtol=1e-12)

    def test_minimiser(self, engine):
        val, c = separability_threshold(0.25, engine, return_minimizer=True)
        eps = 1e-3
        assert threshold_psi(c, 0.25, engine) <= min(threshold_psi(c - eps, 0.25, engine),
                                                     threshold_psi(c + eps, 0.25, engine))
        assert_allclose(val, 1 / threshold_psi(c, 0.25, engine))
