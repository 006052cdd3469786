"""Closed-form predictions for a 1-D Gaussian target under ``r(x) = -(x - a)^2``.

Three terminal laws are covered: the reward tilt, greedy lookahead guidance
(optionally stopped at ``t_stop``), and the exact LQR optimum. All are
Gaussian, so mean and variance determine the expected reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

PREDICTABLE = ("tilt", "greedy", "exact")


@dataclass(frozen=True)
class TerminalPrediction:
    method: str
    mean: float
    variance: float
    expected_reward: float


def _angle(sigma1, t_stop):
    # arctan(sigma1 t / (1 - t)), equal to pi/2 at t = 1
    return math.atan2(sigma1 * t_stop, 1.0 - t_stop)


def early_stop_variance(sigma1, lam, t_stop):
    """Terminal variance when greedy guidance acts only on ``[0, t_stop]``."""
    if not 0 <= t_stop <= 1:
        raise ValueError("t_stop must lie in [0, 1]")
    return sigma1**2 * math.exp(-4.0 * lam * sigma1 * _angle(sigma1, t_stop))


def early_stop_mean(mu1, sigma1, a, lam, t_stop):
    """Terminal mean under greedy guidance stopped at ``t_stop``.

    Each coordinate of the mean contracts toward ``a`` at half the log-rate of
    the variance, giving ``a + (mu1 - a) exp(-2 lam sigma1 angle)``.
    """
    return a + (mu1 - a) * math.exp(-2.0 * lam * sigma1 * _angle(sigma1, t_stop))


def predict_terminal(method, mu1, sigma1, a, lam, t_stop=1.0) -> TerminalPrediction:
    """Mean, variance and expected reward of the terminal law of ``method``."""
    if sigma1 <= 0 or lam < 0:
        raise ValueError("need sigma1 > 0 and lambda >= 0")
    s2 = sigma1**2
    if method == "tilt":
        k = 1.0 + 2.0 * lam * s2
        mean, var = (mu1 + 2.0 * lam * s2 * a) / k, s2 / k
    elif method == "greedy":
        mean = early_stop_mean(mu1, sigma1, a, lam, t_stop)
        var = early_stop_variance(sigma1, lam, t_stop)
    elif method == "exact":
        k = 1.0 + math.pi * lam * sigma1
        mean, var = a + (mu1 - a) / k, s2 / k**2
    else:
        raise ValueError(f"method must be one of {PREDICTABLE}")
    return TerminalPrediction(method, mean, var, -(var + (mean - a) ** 2))


def greedy_control_closed_form(mu1, sigma1, a, lam, t, x):
    """``-2 lam M_t^2 (x - x_t^M)`` with ``x_t^M = t mu1 + (a - mu1) / M_t``."""
    M = sigma1 / math.sqrt((1 - t) ** 2 + t * t * sigma1**2)
    ref = t * mu1 + (a - mu1) / M
    return -2.0 * lam * M * M * (np.asarray(x, dtype=float) - ref)


def solve_t_stop(sigma1, lam):
    """Stopping time at which early-stopped greedy variance equals the exact-control variance."""
    if lam <= 0 or sigma1 <= 0:
        raise ValueError("need lambda > 0 and sigma1 > 0")
    target = sigma1**2 / (1.0 + math.pi * lam * sigma1) ** 2
    theta = math.log1p(math.pi * lam * sigma1) / (2.0 * lam * sigma1)
    assert theta < math.pi / 2, "theta must stay below pi/2 for lambda > 0"
    tn = math.tan(theta)
    t = tn / (sigma1 + tn)
    if abs(early_stop_variance(sigma1, lam, t) - target) <= 1e-10 * max(target, 1e-300) + 1e-15:
        return t
    f = lambda s: math.log(early_stop_variance(sigma1, lam, s)) - math.log(target)  # noqa: E731
    return brentq(f, 0.0, 1.0, xtol=1e-12)


def first_order_value(fmap, r, t, x, epsabs=1e-13, epsrel=1e-11):
    """Order-``lambda`` correction to the value function along a single state ``x``.

    ``-1/2 int_t^1 |g_tau|^2 dtau`` with ``g_tau = grad X_{tau,1}(y)^T grad r(X_{tau,1}(y))``
    and ``y = X_{t,tau}(x)`` the unguided characteristic through ``(t, x)``.
    """
    x = np.asarray(x, dtype=float)

    def integrand(tau):
        y = fmap.eval(t, tau, x)
        end, pull = fmap.pullback(tau, 1.0, y)
        g = pull(r.grad(end))
        return float(np.sum(g * g))

    val, _ = quad(integrand, t, 1.0, epsabs=epsabs, epsrel=epsrel, limit=200)
    return -0.5 * val


def grad_first_order_value(fmap, r, t, x, h=1e-3):
    """Central finite-difference gradient of :func:`first_order_value` in ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        out[j] = (first_order_value(fmap, r, t, x + e) - first_order_value(fmap, r, t, x - e)) / (2 * h)
    return out
