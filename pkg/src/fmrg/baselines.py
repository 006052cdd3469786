"""Comparison methods sharing the guidance interfaces.

Denoiser-based steps (DPS, FlowDPS, FlowChef, MPGD) consume the exact
velocity field and the one-step posterior mean ``x + (1 - t) b_t(x)``. All
updates ascend the reward. The LQR control and the tilted sampler give exact
references on Gaussian targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LINEAR, posterior_mean
from .errors import DegenerateTilt, NumericalFailure
from .flowmap import FlowMap
from .guidance import GuidanceConfig, Tally, TrajectoryRecord, seed_optimize
from .rewards import QuadraticReward
from .rng import ParticleStreams
from .targets import (AuxiliaryCoefficients, GaussianMixtureTarget, GaussianTarget,
                      sample_target, tilt_closed_form_gaussian, tilt_closed_form_gmm)

METHODS = ("DPS", "FlowDPS", "FlowChef", "MPGD", "SeedOpt", "LQR")


@dataclass(frozen=True)
class RiccatiSolution:
    """Closed-form LQR gain for the 1-D Gaussian target under ``r = -(x - a)^2``.

    ``Q_t = C_t (1 / (2 sigma1^2) + lam * int_t^1 dtau / C_tau)`` and ``P_t = 1 / Q_t``.
    """

    mu1: float
    sigma1: float
    a: float
    lam: float

    @property
    def coefficients(self):
        return AuxiliaryCoefficients(self.sigma1)

    def Q(self, t):
        c = self.coefficients
        return c.C(t) * (1.0 / (2.0 * self.sigma1**2) + self.lam * c.integral_inv_C(t))

    def P(self, t):
        return 1.0 / self.Q(t)

    def reference(self, t):
        """``x_t^M = t mu1 + (a - mu1) / M_t``: the state whose lookahead lands on ``a``."""
        return t * self.mu1 + (self.a - self.mu1) / self.coefficients.M(t)

    def residual(self, t, h=1e-5):
        """``-dP/dt - (Cdot / C) P + lam P^2`` with a second-order difference for ``dP/dt``."""
        c = self.coefficients
        if t - h < 0:
            dP = (-3.0 * self.P(t) + 4.0 * self.P(t + h) - self.P(t + 2 * h)) / (2 * h)
        elif t + h > 1:
            dP = (3.0 * self.P(t) - 4.0 * self.P(t - h) + self.P(t - 2 * h)) / (2 * h)
        else:
            dP = (self.P(t + h) - self.P(t - h)) / (2 * h)
        return -dP - c.Cdot(t) / c.C(t) * self.P(t) + self.lam * self.P(t) ** 2


def lqr_exact_control(target: GaussianTarget, a, lam, t, x):
    """Optimal feedback ``-lam P_t (x - x_t^M)`` (coordinatewise for isotropic targets)."""
    x = np.asarray(x, dtype=float)
    if lam == 0:
        return np.zeros_like(x)
    a = np.broadcast_to(np.asarray(a, dtype=float), target.mu1.shape)
    c = AuxiliaryCoefficients(target.sigma1)
    P = 1.0 / (c.C(t) * (1.0 / (2.0 * target.sigma1**2) + lam * c.integral_inv_C(t)))
    ref = t * target.mu1 + (a - target.mu1) / c.M(t)
    return -lam * P * (x - ref)


def dps_signal(b, r, t, x, lam):
    """``lam (I + (1 - t) grad b_t(x))^T grad r(x1_hat)`` with ``x1_hat = x + (1 - t) b_t(x)``."""
    x = np.asarray(x, dtype=float)
    g = r.grad(posterior_mean(b, LINEAR, t, x))
    return lam * (g + (1.0 - t) * b.vjp(t, x, g))


def _denoiser_step(b, r, t, t_next, x, weight):
    x = np.asarray(x, dtype=float)
    v = b(t, x)
    x1_hat = x + (1.0 - t) * v
    return x + (t_next - t) * v + weight * r.grad(x1_hat)


def flowdps_step(b, r, t, t_next, x, eta, n_opt=1):
    """Euler step plus ``(1 - t) t_next eta grad r(x1_hat)``.

    With ``n_opt > 1`` the denoised estimate takes ``n_opt`` ascent steps of
    size ``(1 - t) eta / n_opt`` before recombination at ``t_next``; ``n_opt = 1``
    is the single-step update above exactly.
    """
    if n_opt == 1:
        return _denoiser_step(b, r, t, t_next, x, (1.0 - t) * t_next * eta)
    x = np.asarray(x, dtype=float)
    v = b(t, x)
    x1_hat = x + (1.0 - t) * v
    z = x1_hat
    for _ in range(n_opt):
        z = z + ((1.0 - t) * eta / n_opt) * r.grad(z)
    return x + (t_next - t) * v + t_next * (z - x1_hat)


def flowchef_step(b, r, t, t_next, x, s_prime):
    """Euler step plus ``s' grad r(x1_hat)`` (no Jacobian through the denoiser)."""
    return _denoiser_step(b, r, t, t_next, x, s_prime)


def mpgd_step(b, r, t, t_next, x, c_t):
    """Euler step plus ``t_next c_t grad r(x1_hat)``."""
    return _denoiser_step(b, r, t, t_next, x, t_next * c_t)


def tilt_sampler(target, r, lam, n, seed, start=0, proposal_factor=1):
    """Exact draws from ``rho_tilt(x) ~ exp(lam r(x)) rho_1(x)``.

    Gaussian and mixture targets under a quadratic reward use the closed
    forms. Anything else falls back to self-normalized importance resampling
    from the target, raising :class:`DegenerateTilt` when the effective sample
    size drops below 1% of the proposal count.
    """
    if lam == 0:
        return sample_target(target, n, seed, start)
    if isinstance(r, QuadraticReward):
        if isinstance(target, GaussianTarget):
            return sample_target(tilt_closed_form_gaussian(target, r.a, lam), n, seed, start)
        if isinstance(target, GaussianMixtureTarget):
            return sample_target(tilt_closed_form_gmm(target, r.a, lam), n, seed, start)
    m = n * max(1, int(proposal_factor))
    prop = sample_target(target, m, seed, start * max(1, int(proposal_factor)))
    logw = lam * r.value(prop)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    ess = 1.0 / np.sum(w * w)
    if ess < 0.01 * m:
        raise DegenerateTilt(f"importance-sampling ESS {ess:.1f} is below 1% of {m}")
    u = ParticleStreams(seed, start, n).uniforms("tilt", 0, 1)[:, 0]
    idx = np.minimum(np.searchsorted(np.cumsum(w), u), m - 1)
    return prop[idx]


def _euler_guided(method, b, r, cfg, x, tally, record):
    grid = cfg.grid.knots
    lam = cfg.eta
    states = [x] if record else None
    controls = [np.zeros_like(x)] if record else None
    for k in range(len(grid) - 1):
        t, t_next = grid[k], grid[k + 1]
        dt = t_next - t
        if method == "DPS":
            x_new = x + dt * (b(t, x) + dps_signal(b, r, t, x, lam))
        elif method == "FlowDPS":
            x_new = flowdps_step(b, r, t, t_next, x, lam, cfg.n_opt)
        elif method == "FlowChef":
            x_new = flowchef_step(b, r, t, t_next, x, lam)
        else:
            x_new = mpgd_step(b, r, t, t_next, x, lam)
        tally.nfe += 1
        tally.reward_evals += cfg.n_opt if method == "FlowDPS" else 1
        if not np.all(np.isfinite(x_new)):
            raise NumericalFailure(f"non-finite {method} state", f"knot {k + 1} (t={t_next})")
        if record:
            controls.append((x_new - x - dt * b(t, x)) / dt)
            states.append(x_new)
        x = x_new
    return x, states, controls


def _lqr_rk4(target, a, cfg, x, tally, record):
    b = target.velocity()
    lam = cfg.eta
    grid = cfg.grid.knots

    def f(t, y):
        return b(t, y) + lqr_exact_control(target, a, lam, t, y)

    states = [x] if record else None
    controls = [np.zeros_like(x)] if record else None
    for k in range(len(grid) - 1):
        t, h = grid[k], grid[k + 1] - grid[k]
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tally.nfe += 4
        if not np.all(np.isfinite(x)):
            raise NumericalFailure("non-finite LQR state", f"knot {k + 1}")
        if record:
            states.append(x)
            controls.append(lqr_exact_control(target, a, lam, grid[k + 1], x))
    return x, states, controls


def run_baseline_trajectory(method, model, r, cfg: GuidanceConfig, x0, target=None,
                            record_states=True):
    """Run one of the comparison methods over ``cfg.grid`` with strength ``cfg.eta``.

    ``model`` is a :class:`FlowMap` (its velocity drives the Euler methods).
    ``LQR`` needs the Gaussian ``target`` and a quadratic reward and costs four
    velocity evaluations per RK4 step. ``SeedOpt`` optimizes the initial noise
    and then takes one exact flow-map jump.
    """
    if method not in METHODS:
        raise ValueError(f"unknown baseline {method!r}")
    fmap = model if isinstance(model, FlowMap) else None
    b = fmap.velocity if fmap is not None else model
    tally = Tally()
    x = np.array(x0, dtype=float)
    if method == "SeedOpt":
        if fmap is None:
            raise ValueError("SeedOpt needs a flow map")
        steps = cfg.seed_opt_steps or 1
        x = seed_optimize(fmap, r, GuidanceConfig(eta=cfg.eta, seed_opt_steps=steps,
                                                  seed_opt_eta=cfg.seed_opt_eta), x, tally)
        states = [x] if record_states else None
        controls = [np.zeros_like(x)] if record_states else None
        times = [0.0]
        x = fmap.eval(0.0, 1.0, x)
        tally.nfe += 1
        if record_states:
            states.append(x)
            controls.append(np.zeros_like(x))
        times.append(1.0)
    elif method == "LQR":
        if not isinstance(target, GaussianTarget) or not isinstance(r, QuadraticReward):
            raise ValueError("LQR needs a Gaussian target and a quadratic reward")
        x, states, controls = _lqr_rk4(target, r.a, cfg, x, tally, record_states)
        times = list(cfg.grid.knots)
    else:
        x, states, controls = _euler_guided(method, b, r, cfg, x, tally, record_states)
        times = list(cfg.grid.knots)
    rew = r.value(x)
    tally.reward_evals += 1
    return TrajectoryRecord(
        times=times,
        states=np.stack(states) if record_states else None,
        controls=np.stack(controls) if record_states else None,
        nfe=tally.nfe,
        reward_evals=tally.reward_evals,
        terminal=x,
        terminal_reward=rew,
    )
