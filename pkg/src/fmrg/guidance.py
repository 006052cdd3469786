"""Reward guidance with flow maps: operator-split guided sampling and its knobs.

A guided trajectory alternates an exact flow-map transport over each grid
interval with gradient updates driven by the lookahead reward
``r(X_{t,1}(x))``. The Jacobian variant pulls the reward gradient back
through the flow map; the Euclidean variant uses it directly.

All functions are batched: ``x`` may carry any number of leading particle
axes, and every particle in a batch performs the same number of flow-map
evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import TimeGrid
from .errors import NumericalFailure
from .flowmap import FlowMap, linearized_step

VARIANTS = ("J", "E")
SCHEDULES = ("constant", "paper-E", "paper-J")


@dataclass(frozen=True)
class GuidanceConfig:
    """Design-space record for one guided sampler.

    ``eta`` is the guidance strength. Under the ``constant`` schedule it is
    the constant ``lambda`` of the guided ODE, so each interval applies a
    total weight ``eta * dt`` split evenly over ``n_opt`` gradient steps.
    ``paper-J`` uses the same weights but rescales each Jacobian signal to the
    magnitude of the interval's flow-map velocity. ``paper-E`` uses
    ``eta * t * (1 - t_plus)`` per interval with ``t_plus`` the next grid knot.
    """

    variant: str = "J"
    eta: float = 0.0
    lambda_schedule: str = "constant"
    n_opt: int = 1
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.uniform(100))
    t_stop: float = 1.0
    reuse_endpoint: bool = False
    warmup_k: int = 1
    warmup_fraction: float = 0.5
    renoise_c: float = 0.0
    renoise_knots: tuple = ()
    seed_opt_steps: int = 0
    seed_opt_eta: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.lambda_schedule not in SCHEDULES:
            raise ValueError(f"lambda_schedule must be one of {SCHEDULES}")
        if not 0 < self.t_stop <= 1:
            raise ValueError("t_stop must lie in (0, 1]")
        if self.n_opt < 1:
            raise ValueError("n_opt must be >= 1")
        if self.warmup_k < 1:
            raise ValueError("warmup_k must be >= 1")
        if not 0 <= self.warmup_fraction <= 1:
            raise ValueError("warmup_fraction must lie in [0, 1]")
        if not 0 <= self.renoise_c <= 1:
            raise ValueError("renoise_c must lie in [0, 1]")
        if self.seed_opt_steps < 0:
            raise ValueError("seed_opt_steps must be >= 0")
        object.__setattr__(self, "renoise_knots", tuple(float(t) for t in self.renoise_knots))

    def guided_knots(self):
        """Grid knots up to ``t_stop``, with ``t_stop`` inserted if it is not a knot."""
        knots = [t for t in self.grid.knots if t < self.t_stop]
        knots.append(self.t_stop)
        return knots

    def next_knot(self, t):
        later = [k for k in self.grid.knots if k > t + 1e-12]
        return later[0] if later else 1.0


@dataclass
class Tally:
    nfe: int = 0
    reward_evals: int = 0


@dataclass
class TrajectoryRecord:
    """One guided run (or a batch of runs sharing a schedule).

    ``times[i]`` pairs with ``states[i]`` and ``controls[i]``; ``controls[i]``
    is the guidance increment applied at that knot divided by the interval
    length, zero where no guidance acted.
    """

    times: list
    states: np.ndarray | None
    controls: np.ndarray | None
    nfe: int
    reward_evals: int
    terminal: np.ndarray
    terminal_reward: np.ndarray
    winner: np.ndarray | None = None


def _signal(fmap: FlowMap, r, t, x, variant):
    endpoint, pull = fmap.pullback(t, 1.0, x)
    g = r.grad(endpoint)
    u = pull(g) if variant == "J" else g
    return u, endpoint


def greedy_guidance_signal(fmap: FlowMap, r, t, x, variant="J"):
    """Lookahead reward gradient at ``(t, x)``; the caller applies ``lambda_t``.

    ``J``: ``grad X_{t,1}(x)^T grad r(X_{t,1}(x))``. ``E``: ``grad r(X_{t,1}(x))``.
    At ``t = 1`` the map has zero width and both reduce to ``grad r(x)``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    return _signal(fmap, r, t, np.asarray(x, dtype=float), variant)[0]


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=True))


def _interval_weight(cfg: GuidanceConfig, t, dt, t_plus):
    if cfg.lambda_schedule == "paper-E":
        return cfg.eta * t * (1.0 - t_plus)
    return cfg.eta * dt


def _require_finite(x, where):
    bad = ~np.all(np.isfinite(x), axis=-1)
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0].tolist()
        raise NumericalFailure("non-finite guided state", f"{where}, particle {idx}")


def multi_gradient_update(fmap, r, cfg: GuidanceConfig, t, x, dt, t_plus=None,
                          v_norm=None, tally: Tally | None = None):
    """``n_opt`` ascent steps ``x <- x + (w / n_opt) u_t(x)`` at fixed time ``t``.

    ``w`` is the interval weight from the schedule. Under ``paper-J``, each
    signal is rescaled to the norm ``v_norm`` (the flow-map velocity magnitude
    over the interval); a zero signal stays zero. Returns the updated state and
    the endpoint ``X_{t,1}`` evaluated at the last pre-update iterate.
    """
    tally = tally if tally is not None else Tally()
    x = np.array(x, dtype=float)
    if t_plus is None:
        t_plus = cfg.next_knot(t)
    w = _interval_weight(cfg, t, dt, t_plus) / cfg.n_opt
    normalize = cfg.lambda_schedule == "paper-J" and cfg.variant == "J"
    if normalize and v_norm is None:
        if t_plus <= t:
            raise ValueError("paper-J normalization needs t_plus > t")
        v_norm = _norm(fmap.eval(t, t_plus, x) - x) / (t_plus - t)
        tally.nfe += 1
    endpoint = None
    for _ in range(cfg.n_opt):
        u, endpoint = _signal(fmap, r, t, x, cfg.variant)
        tally.nfe += 1
        tally.reward_evals += 1
        if normalize:
            n = _norm(u)
            u = np.where(n > 0, u * (v_norm / np.where(n > 0, n, 1.0)), 0.0)
        x = x + w * u
        _require_finite(x, f"gradient update at t={t}")
    return x, endpoint


def operator_split_step(fmap, r, cfg: GuidanceConfig, t_k, t_next, x, endpoint=None,
                        tally: Tally | None = None):
    """Transport over ``[t_k, t_next]`` then apply the guidance update at ``t_next``.

    With ``reuse_endpoint`` the transport is the straight line toward a cached
    ``X_{t_k,1}(x)`` (fetched fresh when ``endpoint`` is None). Returns the new
    state and the endpoint cache for the next step.
    """
    if not t_k < t_next:
        raise ValueError("need t_k < t_next")
    tally = tally if tally is not None else Tally()
    x = np.asarray(x, dtype=float)
    if cfg.reuse_endpoint:
        if endpoint is None:
            endpoint = fmap.eval(t_k, 1.0, x)
            tally.nfe += 1
        x_tilde = linearized_step(t_k, t_next, x, endpoint)
    else:
        x_tilde = fmap.eval(t_k, t_next, x)
        tally.nfe += 1
    dt = t_next - t_k
    v_norm = _norm(x_tilde - x) / dt
    x_new, cache = multi_gradient_update(fmap, r, cfg, t_next, x_tilde, dt,
                                         t_plus=cfg.next_knot(t_next), v_norm=v_norm, tally=tally)
    return x_new, x_tilde, cache


def stochastic_renoise(fmap, t, x, c, noise, t_next):
    """Swap a fraction ``c`` of the implied base noise for fresh noise.

    The state is split as ``x = (1 - t) x0_hat + t x1_hat`` using the flow-map
    velocity ``v = (X_{t,t_next}(x) - x) / (t_next - t)``; the base part is
    mixed with ``noise`` and the two parts are recombined.
    """
    if not 0 < t < 1:
        raise ValueError("renoising needs t in (0, 1)")
    x = np.asarray(x, dtype=float)
    if c == 0:
        return x.copy()
    v = (fmap.eval(t, t_next, x) - x) / (t_next - t)
    x1_hat = x + (1.0 - t) * v
    x0_hat = x - t * v
    x0_new = (1.0 - c) * x0_hat + c * np.asarray(noise, dtype=float)
    return (1.0 - t) * x0_new + t * x1_hat


def seed_optimize(fmap, r, cfg: GuidanceConfig, x, tally: Tally | None = None):
    """``seed_opt_steps`` Jacobian-variant ascent steps on the initial noise at ``t = 0``."""
    tally = tally if tally is not None else Tally()
    x = np.array(x, dtype=float)
    n = cfg.seed_opt_steps
    if n == 0:
        return x
    eta = cfg.eta if cfg.seed_opt_eta is None else cfg.seed_opt_eta
    for _ in range(n):
        u, _ = _signal(fmap, r, 0.0, x, "J")
        tally.nfe += 1
        tally.reward_evals += 1
        x = x + (eta / n) * u
        _require_finite(x, "seed optimization")
    return x


class _Segment:
    """Mutable state of a batch of trajectories between knots."""

    def __init__(self, x, record):
        self.x = x
        self.cache = None
        self.times = [0.0]
        self.states = [x] if record else None
        self.controls = [np.zeros_like(x)] if record else None
        self.record = record

    def push(self, t, x, control):
        self.x = x
        self.times.append(t)
        if self.record:
            self.states.append(x)
            self.controls.append(control)


def _run_steps(fmap, r, cfg, seg: _Segment, steps, tally, streams, draw_offset=0):
    for k, t_k, t_next in steps:
        try:
            x_new, x_tilde, seg.cache = operator_split_step(fmap, r, cfg, t_k, t_next, seg.x,
                                                            seg.cache, tally)
            control = (x_new - x_tilde) / (t_next - t_k)
            if cfg.renoise_c > 0 and t_next < 1 and any(abs(t_next - tk) < 1e-12
                                                        for tk in cfg.renoise_knots):
                if streams is None:
                    raise ValueError("renoising needs a random stream")
                eps = streams.normals("renoise", draw_offset + k, x_new.shape[-1])
                eps = eps.reshape(x_new.shape)
                x_new = stochastic_renoise(fmap, t_next, x_new, cfg.renoise_c, eps,
                                           cfg.next_knot(t_next))
                tally.nfe += 1
                seg.cache = None
            _require_finite(x_new, f"knot {k + 1}")
        except NumericalFailure as exc:
            raise NumericalFailure(str(exc), f"knot {k + 1} (t={t_next})") from exc
        seg.push(t_next, x_new, control)


def _finish(fmap, r, cfg, seg: _Segment, tally, winner=None):
    x1 = fmap.eval(cfg.t_stop, 1.0, seg.x)
    tally.nfe += 1
    if cfg.t_stop < 1:
        seg.push(1.0, x1, np.zeros_like(x1))
    else:
        # zero-width jump: record it as the terminal state at the same knot
        seg.x = x1
        if seg.record:
            seg.states[-1] = x1
    rew = r.value(x1)
    tally.reward_evals += 1
    return TrajectoryRecord(
        times=seg.times,
        states=np.stack(seg.states) if seg.record else None,
        controls=np.stack(seg.controls) if seg.record else None,
        nfe=tally.nfe,
        reward_evals=tally.reward_evals,
        terminal=x1,
        terminal_reward=rew,
        winner=winner,
    )


def _steps(cfg):
    knots = cfg.guided_knots()
    return [(k, knots[k], knots[k + 1]) for k in range(len(knots) - 1)]


def run_guided_trajectory(fmap, r, cfg: GuidanceConfig, x0, streams=None, record_states=True):
    """Seed optimization, guided steps up to ``t_stop``, then one exact jump to ``t = 1``.

    Flow-map evaluations per trajectory: ``G (1 + n_opt) + 1`` without reuse
    and ``G n_opt + 2`` with reuse (the extra one is the first lookahead),
    plus ``seed_opt_steps`` and one per renoising, for ``G`` guided steps.
    """
    tally = Tally()
    x = np.array(x0, dtype=float)
    _require_finite(x, "initial state")
    x = seed_optimize(fmap, r, cfg, x, tally)
    seg = _Segment(x, record_states)
    _run_steps(fmap, r, cfg, seg, _steps(cfg), tally, streams)
    return _finish(fmap, r, cfg, seg, tally)


def warmup_select(fmap, r, cfg: GuidanceConfig, x0s, streams=None, record_states=True):
    """Run ``K`` candidates part-way, keep the best lookahead reward, finish it alone.

    ``x0s`` has shape ``(K, ..., d)``: ``K`` initial states per particle. The
    first ``ceil(warmup_fraction * G)`` guided steps run for all candidates;
    each is scored by ``r(X_{t,1}(x_t))``; the highest-scoring candidate
    (lowest index on ties) continues. With ``K = 1`` this is exactly
    :func:`run_guided_trajectory`. Reported NFE include all candidates' work.
    """
    x0s = np.asarray(x0s, dtype=float)
    K = x0s.shape[0]
    if K != cfg.warmup_k:
        raise ValueError("number of candidates must equal warmup_k")
    if K == 1:
        rec = run_guided_trajectory(fmap, r, cfg, x0s[0], streams, record_states)
        rec.winner = np.zeros(x0s.shape[1:-1], dtype=int)
        return rec
    steps = _steps(cfg)
    m = math.ceil(cfg.warmup_fraction * len(steps))
    batch_shape = x0s.shape[1:-1]
    d = x0s.shape[-1]
    flat = x0s.reshape((K, -1, d))
    n = flat.shape[1]

    tally = Tally()
    x = seed_optimize(fmap, r, cfg, flat.reshape(K * n, d), tally)
    seg = _Segment(x, record_states)
    cand_streams = _CandidateStreams(streams, K) if streams is not None else None
    _run_steps(fmap, r, cfg, seg, steps[:m], tally, cand_streams)
    t_m = seg.times[-1]
    endpoint = fmap.eval(t_m, 1.0, seg.x) if t_m < 1 else seg.x.copy()
    tally.nfe += 1
    score = r.value(endpoint).reshape(K, n)
    tally.reward_evals += 1
    win = np.argmax(score, axis=0)
    pick = win * n + np.arange(n)

    nfe_warm = tally.nfe * K  # every candidate did this work
    rew_warm = tally.reward_evals * K
    tally = Tally(nfe_warm, rew_warm)
    cont = _Segment(seg.x[pick], record_states)
    cont.times = list(seg.times)
    if record_states:
        cont.states = [s[pick].reshape(batch_shape + (d,)) for s in seg.states]
        cont.controls = [c[pick].reshape(batch_shape + (d,)) for c in seg.controls]
    cont.x = seg.x[pick].reshape(batch_shape + (d,))
    if cfg.reuse_endpoint:
        cont.cache = endpoint[pick].reshape(batch_shape + (d,))
    _run_steps(fmap, r, cfg, cont, steps[m:], tally, streams)
    return _finish(fmap, r, cfg, cont, tally, winner=win.reshape(batch_shape))


class _CandidateStreams:
    """Give each warmup candidate its own renoising draws."""

    def __init__(self, streams, K):
        self.streams = streams
        self.K = K

    def normals(self, stream, draw, width):
        return np.concatenate([self.streams.normals(stream, (j << 20) | draw, width)
                               for j in range(self.K)], axis=0)


def with_eta(cfg: GuidanceConfig, eta):
    return replace(cfg, eta=float(eta))
