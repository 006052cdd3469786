import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fmrg.flowmap import AnalyticGaussianFlowMap
from fmrg.guidance import greedy_guidance_signal
from fmrg.rewards import QuadraticReward
from fmrg.targets import GaussianTarget
from fmrg.theory import (early_stop_mean, early_stop_variance, first_order_value,
                         greedy_control_closed_form, grad_first_order_value, predict_terminal,
                         solve_t_stop)


@pytest.mark.parametrize("method", ["tilt", "greedy", "exact"])
def test_zero_lambda_collapses_to_target(method):
    p = predict_terminal(method, 0.3, 1.7, 1.0, 0.0)
    assert p.mean == pytest.approx(0.3)
    assert p.variance == pytest.approx(1.7**2)


def test_greedy_unit_case():
    # sigma1 = 1, lam = 1/(2 pi): variance e^{-1}
    p = predict_terminal("greedy", 0.0, 1.0, 1.0, 1 / (2 * math.pi))
    assert p.variance == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_exact_unit_case():
    p = predict_terminal("exact", 0.0, 1.0, 1.0, 1 / math.pi)
    assert p.variance == pytest.approx(0.25, rel=1e-14)
    assert p.mean == pytest.approx(0.5)


def test_tilt_moments():
    p = predict_terminal("tilt", 0.0, 1.0, 1.0, 0.5)
    assert p.mean == pytest.approx(0.5)
    assert p.variance == pytest.approx(0.5)
    assert p.expected_reward == pytest.approx(-0.75)


def test_early_stop_quarter_turn():
    # sigma1 = 1, t_stop = 1/2: angle pi/4, variance e^{-pi lam}
    assert early_stop_variance(1.0, 0.5, 0.5) == pytest.approx(math.exp(-math.pi / 2), rel=1e-14)


def test_early_stop_at_one_is_greedy():
    assert early_stop_variance(2.0, 0.3, 1.0) == pytest.approx(4 * math.exp(-2 * math.pi * 0.3 * 2))


def test_early_stop_mean_matches_ode():
    # integrate the closed-loop mean ODE m' = b_t(m) + u_t(m) with the analytic greedy control
    mu1, sigma1, a, lam, ts = 0.2, 0.8, 1.3, 0.9, 0.6
    T = GaussianTarget([mu1], sigma1)
    b = T.velocity()

    def rhs(t, m):
        x = np.array(m)
        return b(t, x) + greedy_control_closed_form(mu1, sigma1, a, lam, t, x)

    sol = solve_ivp(rhs, (0.0, ts), [0.0], rtol=1e-11, atol=1e-12)
    m_ts = sol.y[0, -1]
    m1 = AnalyticGaussianFlowMap(T).eval(ts, 1.0, np.array([m_ts]))[0]
    assert m1 == pytest.approx(early_stop_mean(mu1, sigma1, a, lam, ts), abs=1e-8)


def test_early_stop_variance_matches_ode():
    # variance ODE s' = 2 (d/dx)(b + u) s, linear drift so exact
    sigma1, lam, ts = 0.5, 0.75, 0.3
    T = GaussianTarget([0.0], sigma1)
    J = lambda t: T.velocity().jacobian(t, np.zeros(1))[0, 0] - 2 * lam * T.coefficients.M(t) ** 2  # noqa: E731
    sol = solve_ivp(lambda t, s: 2 * J(t) * s, (0.0, ts), [1.0], rtol=1e-12, atol=1e-14)
    f = AnalyticGaussianFlowMap(T).factor(ts, 1.0)
    assert float(f) ** 2 * sol.y[0, -1] == pytest.approx(early_stop_variance(sigma1, lam, ts), rel=1e-8)


def test_ordering():
    for sigma1 in (0.5, 1.0, 2.0):
        for lam in (0.1, 0.5, 1.0):
            g = predict_terminal("greedy", 0, sigma1, 1, lam).variance
            e = predict_terminal("exact", 0, sigma1, 1, lam).variance
            assert g < e


def test_asymptotic_rates():
    sigma1 = 1.0
    lams = np.array([1e3, 1e4])
    e = [math.log(predict_terminal("exact", 0, sigma1, 1, l).variance) for l in lams]
    assert (e[1] - e[0]) / math.log(10) == pytest.approx(-2.0, abs=1e-3)
    # greedy decays exponentially: slope in lambda is -2 pi sigma1
    g = [math.log(predict_terminal("greedy", 0, sigma1, 1, l).variance) for l in (10.0, 20.0)]
    assert (g[1] - g[0]) / 10.0 == pytest.approx(-2 * math.pi, rel=1e-12)


def test_expected_reward_ordering_small_lambda():
    r = {m: predict_terminal(m, 0.0, 1.0, 1.0, 0.05).expected_reward for m in ("tilt", "exact")}
    assert r["exact"] > r["tilt"] - 1e-3


def test_solve_t_stop_back_substitution():
    for sigma1 in (0.5, 1.0, 2.0):
        for lam in (1e-3, 0.1, 0.75, 5.0):
            ts = solve_t_stop(sigma1, lam)
            exact = predict_terminal("exact", 0, sigma1, 1, lam).variance
            assert early_stop_variance(sigma1, lam, ts) == pytest.approx(exact, rel=1e-10)


def test_solve_t_stop_limits():
    assert solve_t_stop(1.0, 1e-6) > 0.999
    for lam in (1e3, 1e4):
        ts = solve_t_stop(2.0, lam)
        # theta ~ log(pi lam sigma)/(2 lam sigma) is small, so t ~ theta / sigma1
        theta = math.log1p(math.pi * lam * 2.0) / (2 * lam * 2.0)
        assert ts / theta == pytest.approx(1 / 2.0, rel=0.2)


def test_solve_t_stop_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_t_stop(1.0, 0.0)


def test_greedy_closed_form_equals_scaled_signal():
    T = GaussianTarget([0.4], 1.6)
    fm = AnalyticGaussianFlowMap(T)
    r = QuadraticReward([1.2])
    for t in (0.0, 0.3, 0.77, 1.0):
        x = np.array([-0.35])
        sig = greedy_guidance_signal(fm, r, t, x, "J")
        np.testing.assert_allclose(greedy_control_closed_form(0.4, 1.6, 1.2, 0.7, t, x), 0.7 * sig,
                                   atol=1e-10)


def test_first_order_value_closed_form():
    # for the Gaussian map g_tau = -2 M_tau (X_{t,1}(x) - a) is constant in the characteristic's
    # terminal point, so V1 = -1/2 int_t^1 4 M_tau^2 (X1 - a)^2 dtau = -2 (X1 - a)^2 sigma1 arctan2(...)
    sigma1, mu1, a, t, x = 1.0, 0.0, 1.0, 0.3, 0.7
    T = GaussianTarget([mu1], sigma1)
    fm = AnalyticGaussianFlowMap(T)
    r = QuadraticReward([a])
    x1 = fm.eval(t, 1.0, np.array([x]))[0]
    integral = sigma1**2 * T.coefficients.integral_inv_C(t)
    expect = -0.5 * 4 * (x1 - a) ** 2 * integral
    assert first_order_value(fm, r, t, np.array([x])) == pytest.approx(expect, rel=1e-9)
    M = T.coefficients.M(t)
    dexpect = -4 * (x1 - a) * M * integral
    assert grad_first_order_value(fm, r, t, np.array([x]))[0] == pytest.approx(dexpect, rel=1e-6)
