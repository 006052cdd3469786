import math

import numpy as np
import pytest
from scipy.integrate import quad

from fmrg.dynamics import rk4_integrate
from fmrg.flowmap import NumericFlowMap
from fmrg.targets import (AuxiliaryCoefficients, DegenerateGaussianTarget, GaussianMixtureTarget,
                          GaussianTarget, gaussian_log_density, sample_target,
                          tilt_closed_form_gaussian, tilt_closed_form_gmm)


class TestAuxiliaryCoefficients:
    def test_endpoints(self):
        c = AuxiliaryCoefficients(1.7)
        assert c.C(0.0) == 1.0
        assert c.C(1.0) == pytest.approx(1.7**2)
        assert c.M(1.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("sigma1", [0.3, 1.0, 2.5])
    @pytest.mark.parametrize("t", [0.0, 0.2, 0.5, 0.9, 0.999])
    def test_integral_matches_quadrature(self, sigma1, t):
        c = AuxiliaryCoefficients(sigma1)
        ref, _ = quad(lambda s: 1.0 / c.C(s), t, 1.0, epsabs=1e-14, epsrel=1e-13)
        assert c.integral_inv_C(t) == pytest.approx(ref, abs=1e-10)

    def test_integral_vanishes_at_one(self):
        assert AuxiliaryCoefficients(0.8).integral_inv_C(1.0) == 0.0

    def test_full_integral_unit_sigma(self):
        assert AuxiliaryCoefficients(1.0).integral_inv_C(0.0) == pytest.approx(math.pi / 2, abs=1e-15)


class TestGaussianVelocity:
    def test_unit_sigma_midpoint(self):
        b = GaussianTarget([0.7], 1.0).velocity()
        assert b(0.5, np.array([5.0]))[0] == pytest.approx(0.7)

    def test_terminal_on_mean(self):
        b = GaussianTarget([1.2], 0.4).velocity()
        assert b(1.0, np.array([1.2]))[0] == pytest.approx(1.2)

    @pytest.mark.parametrize("t", [0.0, 0.3, 0.8, 1.0])
    def test_on_mean_trajectory(self, t):
        b = GaussianTarget([0.5, -1.0], 1.9).velocity()
        np.testing.assert_allclose(b(t, t * np.array([0.5, -1.0])), [0.5, -1.0], atol=1e-15)

    @pytest.mark.parametrize("sigma1", [0.5, 1.0, 2.0])
    def test_pushforward_moments(self, sigma1):
        b = GaussianTarget([0.3], sigma1).velocity()
        x0 = np.random.default_rng(3).standard_normal((100_000, 1))
        x1 = rk4_integrate(b, 0.0, 1.0, x0, 1000)
        assert abs(x1.mean() - 0.3) < 0.02
        assert abs(x1.var() / sigma1**2 - 1) < 0.02


GMM2 = GaussianMixtureTarget([0.25, 0.75], [[-1.0, 0.5], [1.5, 0.0]],
                             [[[0.4, 0.1], [0.1, 0.3]], [[0.6, -0.2], [-0.2, 0.5]]])


class TestMixtureVelocity:
    def test_single_component_matches_gaussian(self):
        g = GaussianTarget([0.4, -0.2], 1.3)
        m = GaussianMixtureTarget([1.0], [[0.4, -0.2]], [np.eye(2) * 1.3**2])
        rng = np.random.default_rng(4)
        for t in np.linspace(0.0, 1.0, 11):
            x = rng.normal(size=(5, 2))
            np.testing.assert_allclose(m.velocity()(t, x), g.velocity()(t, x), atol=1e-12)

    @pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 0.9, 1.0])
    def test_symmetric_pair_vanishes_at_origin(self, t):
        m = GaussianMixtureTarget([0.5, 0.5], [[-2.0, 1.0], [2.0, -1.0]], [np.eye(2) * 0.3] * 2)
        np.testing.assert_allclose(m.velocity()(t, np.zeros(2)), 0.0, atol=1e-14)

    def test_endpoint_limits(self):
        b = GMM2.velocity()
        x = np.array([0.3, -0.7])
        # at t = 0 every component sees the same noise law, so b = E[x1] - x
        np.testing.assert_allclose(b(0.0, x), GMM2.weights @ GMM2.means - x, atol=1e-14)
        np.testing.assert_allclose(b(1.0, x), x, atol=1e-12)

    def test_monte_carlo_conditional_velocity(self):
        # E[x1 - x0 | I_t = x] by kernel conditioning on 1e7 simulated interpolant pairs
        T = GaussianMixtureTarget([0.3, 0.7], [-1.5, 1.0], [0.25, 0.5])
        t, x, h = 0.5, 0.3, 0.01
        rng = np.random.default_rng(5)
        sums, sq, cnt = 0.0, 0.0, 0
        for _ in range(10):
            n = 1_000_000
            comp = rng.uniform(size=n) < 0.3
            x1 = np.where(comp, -1.5 + 0.5 * rng.standard_normal(n),
                          1.0 + np.sqrt(0.5) * rng.standard_normal(n))
            x0 = rng.standard_normal(n)
            sel = np.abs((1 - t) * x0 + t * x1 - x) < h
            d = (x1 - x0)[sel]
            sums += d.sum()
            sq += (d * d).sum()
            cnt += sel.sum()
        mean = sums / cnt
        se = math.sqrt((sq / cnt - mean**2) / cnt)
        assert abs(T.velocity()(t, np.array([x]))[0] - mean) < 3 * se

    def test_pushforward_mode_proportions(self):
        T = GaussianMixtureTarget([0.3, 0.7], [-3.0, 3.0], [0.2, 0.2])
        fmap = NumericFlowMap(T.velocity(), 200)
        x1 = fmap.eval(0.0, 1.0, np.random.default_rng(6).standard_normal((20_000, 1)))[:, 0]
        left = x1 < 0
        assert abs(left.mean() - 0.3) < 0.02
        assert abs(x1[left].mean() + 3.0) < 0.05
        assert abs(x1[~left].mean() - 3.0) < 0.05

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            GaussianMixtureTarget([0.5, 0.6], [0.0, 1.0], [1.0, 1.0])

    def test_rejects_indefinite_covariance(self):
        with pytest.raises(ValueError):
            GaussianMixtureTarget([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [2.0, 1.0]]])


class TestSampling:
    def test_standard_gaussian_moments(self):
        n = 1_000_000
        x = sample_target(GaussianTarget([0.0], 1.0), n, seed=3)
        assert abs(x.mean()) < 4 / math.sqrt(n)
        assert abs(x.var() - 1.0) < 0.01

    def test_degenerate_weights(self):
        T = GaussianMixtureTarget([1.0, 0.0], [-5.0, 5.0], [0.01, 0.01])
        assert np.all(sample_target(T, 10_000, seed=1) < 0)

    def test_deterministic(self):
        np.testing.assert_array_equal(sample_target(GMM2, 100, 9), sample_target(GMM2, 100, 9))

    def test_chunking_invariant(self):
        full = sample_target(GMM2, 100, 9)
        parts = np.concatenate([sample_target(GMM2, 40, 9, start=0), sample_target(GMM2, 60, 9, start=40)])
        np.testing.assert_array_equal(full, parts)

    def test_degenerate_target_covariance(self):
        T = DegenerateGaussianTarget([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 1.0, 1e-3)
        x = sample_target(T, 200_000, 2)
        assert abs(x[:, 0].std() - 1.0) < 0.01
        assert np.all(np.abs(x[:, 1:]).std(axis=0) < 2e-3)


class TestTilt:
    def test_gaussian_no_tilt(self):
        T = GaussianTarget([0.3], 1.2)
        assert tilt_closed_form_gaussian(T, [1.0], 0.0) is T

    def test_gaussian_variance(self):
        T2 = tilt_closed_form_gaussian(GaussianTarget([0.0], 1.0), [2.0], 0.5)
        assert T2.sigma1**2 == pytest.approx(0.5)
        assert T2.mu1[0] == pytest.approx(1.0)

    def test_gaussian_strong_tilt(self):
        T2 = tilt_closed_form_gaussian(GaussianTarget([0.0], 1.0), [2.0], 1e3)
        assert abs(T2.mu1[0] - 2.0) < 1e-3
        assert T2.sigma1**2 < 1e-3

    def test_gaussian_density_is_tilted(self):
        T = GaussianTarget([0.4], 1.3)
        lam, a = 0.6, 1.5
        T2 = tilt_closed_form_gaussian(T, [a], lam)
        grid = np.linspace(-4, 4, 81)[:, None]
        diff = gaussian_log_density(T2, grid) - (gaussian_log_density(T, grid) - lam * (grid[:, 0] - a) ** 2)
        assert np.ptp(diff) < 1e-10

    def test_gmm_no_tilt(self):
        assert tilt_closed_form_gmm(GMM2, [0.0, 0.0], 0.0) is GMM2

    def test_gmm_single_component_matches_gaussian(self):
        G = GaussianTarget([0.3], 0.8)
        M = GaussianMixtureTarget([1.0], [0.3], [0.64])
        g2 = tilt_closed_form_gaussian(G, [1.0], 0.7)
        m2 = tilt_closed_form_gmm(M, [1.0], 0.7)
        assert m2.means[0, 0] == pytest.approx(g2.mu1[0], abs=1e-14)
        assert m2.covs[0, 0, 0] == pytest.approx(g2.sigma1**2, abs=1e-14)

    def test_gmm_density_is_tilted(self):
        lam, a = 0.4, np.array([1.0, -0.5])
        T2 = tilt_closed_form_gmm(GMM2, a, lam)
        grid = np.random.default_rng(7).normal(size=(200, 2)) * 2
        diff = T2.log_density(grid) - (GMM2.log_density(grid) - lam * np.sum((grid - a) ** 2, axis=1))
        assert np.ptp(diff) < 1e-10
