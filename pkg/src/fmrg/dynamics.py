"""Time grids, interpolant schedules, velocity fields and reference integrators.

States are float arrays whose last axis is the state dimension ``d``; any
leading axes are a batch of independent particles. Times are plain floats
with ``t = 0`` the Gaussian base and ``t = 1`` the data distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateSchedule, NumericalFailure

# Default oracle resolution: RK4 substeps per unit of time.
DEFAULT_SUBSTEPS = 1000


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing knots ``0 = t_0 < ... < t_N = 1``."""

    knots: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if k.ndim != 1 or k.size < 2:
            raise ValueError("a time grid needs at least two knots")
        if k[0] != 0.0 or k[-1] != 1.0:
            raise ValueError("time grid must start at 0 and end at 1")
        if np.any(np.diff(k) <= 0):
            raise ValueError("time grid knots must be strictly increasing")
        object.__setattr__(self, "knots", tuple(float(v) for v in k))

    @classmethod
    def uniform(cls, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        return cls(tuple(np.linspace(0.0, 1.0, n_steps + 1)))

    @property
    def n_steps(self) -> int:
        return len(self.knots) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.knots)

    def __len__(self):
        return len(self.knots)


@dataclass(frozen=True)
class InterpolantSchedule:
    """Coefficients of ``I_t = alpha(t) x0 + beta(t) x1`` and their derivatives."""

    alpha: Callable[[float], float]
    beta: Callable[[float], float]
    dalpha: Callable[[float], float]
    dbeta: Callable[[float], float]


LINEAR = InterpolantSchedule(
    alpha=lambda t: 1.0 - t,
    beta=lambda t: t,
    dalpha=lambda t: -1.0,
    dbeta=lambda t: 1.0,
)


class VelocityField:
    """Drift ``b_t(x)`` of the probability flow with its state Jacobian.

    Subclasses implement ``__call__`` and ``jacobian``; both accept batched
    states of shape ``(..., d)``. ``jacobian`` returns ``(..., d, d)`` with
    ``J[..., i, j] = d b_i / d x_j``.
    """

    dim: int

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def vjp(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``jacobian(t, x)^T v``; subclasses override when cheaper."""
        return np.einsum("...ij,...i->...j", self.jacobian(t, x), np.asarray(v, dtype=float))


class FunctionVelocity(VelocityField):
    """Wrap plain callables as a velocity field (handy in tests)."""

    def __init__(self, fn, jac, dim):
        self._fn = fn
        self._jac = jac
        self.dim = dim

    def __call__(self, t, x):
        return self._fn(t, np.asarray(x, dtype=float))

    def jacobian(self, t, x):
        return self._jac(t, np.asarray(x, dtype=float))


def finite_difference_jacobian(fn, x, h=1e-4):
    """Central-difference Jacobian of ``fn`` at a single state ``x`` (shape ``(d,)``)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def euler_step(b: VelocityField, t: float, dt: float, x: np.ndarray) -> np.ndarray:
    """One explicit Euler step ``x + dt * b(t, x)``."""
    x = np.asarray(x, dtype=float)
    if dt == 0:
        return x.copy()
    return x + dt * b(t, x)


def _check_finite(x, where):
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("non-finite state during RK4 integration", where)


def rk4_step(b, t, h, x):
    k1 = b(t, x)
    k2 = b(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = b(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = b(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(b, s: float, t: float, x: np.ndarray, n_steps: int) -> np.ndarray:
    """Classical RK4 solution of ``dx/dt = b(t, x)`` from time ``s`` to ``t``.

    ``s > t`` integrates backward in time. Raises :class:`NumericalFailure`
    naming the substep if the state stops being finite.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.array(x, dtype=float)
    if s == t:
        return x
    h = (t - s) / n_steps
    for i in range(n_steps):
        x = rk4_step(b, s + i * h, h, x)
        _check_finite(x, f"substep {i} of {n_steps}")
    return x


def posterior_mean(b, schedule: InterpolantSchedule, t: float, x: np.ndarray) -> np.ndarray:
    """Denoiser ``E[x1 | I_t = x]`` recovered from the probability-flow velocity."""
    a, da = schedule.alpha(t), schedule.dalpha(t)
    bt, dbt = schedule.beta(t), schedule.dbeta(t)
    denom = a * dbt - da * bt
    if denom == 0:
        raise DegenerateSchedule(f"alpha*beta' - alpha'*beta vanishes at t={t}")
    x = np.asarray(x, dtype=float)
    if schedule is LINEAR:
        # denominator is exactly 1; keep the Euler form bit-for-bit
        return x + (1.0 - t) * b(t, x)
    return (a * b(t, x) - da * x) / denom
