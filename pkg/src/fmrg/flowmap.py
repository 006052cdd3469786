"""Two-time flow maps ``X_{s,t}`` with Jacobians and vector-Jacobian products.

Three realizations share one interface:

* :class:`AnalyticGaussianFlowMap` - closed form for Gaussian targets.
* :class:`NumericFlowMap` - RK4 on any :class:`VelocityField`; Jacobians are
  the exact derivative of the discrete RK4 map (co-integrated variational
  equation) and VJPs run the discrete adjoint backward over stored substeps,
  so ``vjp`` and ``jacobian.T @ v`` agree to roundoff.
* :class:`EulerFlowMap` - the one-step Euler surrogate ``x + (t - s) b_s(x)``.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import DEFAULT_SUBSTEPS, VelocityField, rk4_step
from .errors import NumericalFailure


def _eye_like(x, d):
    return np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d)).copy()


class FlowMap:
    """Interface: ``eval``, ``jacobian`` and ``vjp`` on batched states ``(..., d)``."""

    velocity: VelocityField

    @property
    def dim(self):
        return self.velocity.dim

    def eval(self, s, t, x):
        raise NotImplementedError

    def jacobian(self, s, t, x):
        raise NotImplementedError

    def vjp(self, s, t, x, v):
        raise NotImplementedError

    def pullback(self, s, t, x):
        """Endpoint ``X_{s,t}(x)`` and a function ``v -> grad X_{s,t}(x)^T v``.

        Counts as one flow-map evaluation: the forward pass is shared.
        """
        return self.eval(s, t, x), lambda v: self.vjp(s, t, x, v)


class AnalyticGaussianFlowMap(FlowMap):
    """``X_{s,t}(x) = t mu1 + U diag(sqrt(C_t / C_s)) U^T (x - s mu1)``."""

    def __init__(self, target):
        self.target = target
        self.velocity = target.velocity()
        self.coefficients = self.velocity._coef
        self._iso = self.velocity._iso

    def factor(self, s, t):
        c = self.coefficients
        return np.sqrt(c.C(t) / c.C(s))

    def _apply(self, f, v):
        if self._iso:
            return f * v
        T = self.target
        return T.from_eigen(f * T.to_eigen(v))

    def eval(self, s, t, x):
        x = np.asarray(x, dtype=float)
        if s == t:
            return x.copy()
        mu = self.target.mu1
        return t * mu + self._apply(self.factor(s, t), x - s * mu)

    def jacobian(self, s, t, x):
        x = np.asarray(x, dtype=float)
        if s == t:
            return _eye_like(x, self.dim)
        J = self.target.scale_matrix(self.factor(s, t))
        return np.broadcast_to(J, x.shape + (self.dim,)).copy()

    def vjp(self, s, t, x, v):
        v = np.asarray(v, dtype=float)
        if s == t:
            return v.copy()
        return self._apply(self.factor(s, t), v)


class NumericFlowMap(FlowMap):
    """Flow map of an arbitrary velocity field by fixed-step RK4.

    Uses ``ceil(|t - s| * substeps)`` uniform substeps (at least one).
    ``s > t`` integrates backward with a negative step.
    """

    def __init__(self, velocity: VelocityField, substeps: int = DEFAULT_SUBSTEPS):
        self.velocity = velocity
        self.substeps = int(substeps)

    def n_steps(self, s, t):
        return max(1, math.ceil(abs(t - s) * self.substeps - 1e-9))

    def _forward(self, s, t, x, store):
        n = self.n_steps(s, t)
        h = (t - s) / n
        x = np.array(x, dtype=float)
        states = [x] if store else None
        for i in range(n):
            x = rk4_step(self.velocity, s + i * h, h, x)
            if not np.all(np.isfinite(x)):
                raise NumericalFailure("non-finite state in flow map", f"substep {i} of {n}")
            if store:
                states.append(x)
        return x, states, h

    def eval(self, s, t, x):
        x = np.asarray(x, dtype=float)
        if s == t:
            return x.copy()
        return self._forward(s, t, x, store=False)[0]

    def jacobian(self, s, t, x):
        x = np.array(x, dtype=float)
        d = self.dim
        J = _eye_like(x, d)
        if s == t:
            return J
        b = self.velocity
        n = self.n_steps(s, t)
        h = (t - s) / n

        def mm(A, B):
            return np.einsum("...ij,...jk->...ik", A, B)

        for i in range(n):
            tau = s + i * h
            k1 = b(tau, x)
            K1 = mm(b.jacobian(tau, x), J)
            y2 = x + 0.5 * h * k1
            k2 = b(tau + 0.5 * h, y2)
            K2 = mm(b.jacobian(tau + 0.5 * h, y2), J + 0.5 * h * K1)
            y3 = x + 0.5 * h * k2
            k3 = b(tau + 0.5 * h, y3)
            K3 = mm(b.jacobian(tau + 0.5 * h, y3), J + 0.5 * h * K2)
            y4 = x + h * k3
            k4 = b(tau + h, y4)
            K4 = mm(b.jacobian(tau + h, y4), J + h * K3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            J = J + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
            if not np.all(np.isfinite(J)):
                raise NumericalFailure("non-finite Jacobian in flow map", f"substep {i} of {n}")
        return J

    def _adjoint(self, s, states, h, v):
        b = self.velocity
        lam = np.array(v, dtype=float)
        for i in range(len(states) - 2, -1, -1):
            tau = s + i * h
            x = states[i]
            k1 = b(tau, x)
            y2 = x + 0.5 * h * k1
            k2 = b(tau + 0.5 * h, y2)
            y3 = x + 0.5 * h * k2
            k3 = b(tau + 0.5 * h, y3)
            y4 = x + h * k3
            a4 = b.vjp(tau + h, y4, (h / 6.0) * lam)
            a3 = b.vjp(tau + 0.5 * h, y3, (h / 3.0) * lam + h * a4)
            a2 = b.vjp(tau + 0.5 * h, y2, (h / 3.0) * lam + 0.5 * h * a3)
            a1 = b.vjp(tau, x, (h / 6.0) * lam + 0.5 * h * a2)
            lam = lam + a1 + a2 + a3 + a4
        return lam

    def vjp(self, s, t, x, v):
        return self.pullback(s, t, x)[1](v)

    def pullback(self, s, t, x):
        x = np.asarray(x, dtype=float)
        if s == t:
            return x.copy(), lambda v: np.array(v, dtype=float)
        end, states, h = self._forward(s, t, x, store=True)
        return end, lambda v: self._adjoint(s, states, h, v)


class EulerFlowMap(FlowMap):
    """One explicit Euler step used as a flow map: ``X_{s,t}(x) = x + (t - s) b_s(x)``."""

    def __init__(self, velocity: VelocityField):
        self.velocity = velocity

    def eval(self, s, t, x):
        x = np.asarray(x, dtype=float)
        if s == t:
            return x.copy()
        return x + (t - s) * self.velocity(s, x)

    def jacobian(self, s, t, x):
        x = np.asarray(x, dtype=float)
        I = _eye_like(x, self.dim)
        if s == t:
            return I
        return I + (t - s) * self.velocity.jacobian(s, x)

    def vjp(self, s, t, x, v):
        v = np.asarray(v, dtype=float)
        if s == t:
            return v.copy()
        return v + (t - s) * self.velocity.vjp(s, x, v)


def linearized_step(t_k, t_next, x, endpoint):
    """Move from ``x`` toward a cached endpoint ``X_{t_k,1}(x)`` by the fraction of time elapsed."""
    if t_k == 1:
        raise ZeroDivisionError("cannot linearize from t_k = 1")
    x = np.asarray(x, dtype=float)
    endpoint = np.asarray(endpoint, dtype=float)
    if t_next == 1:
        return endpoint.copy()
    if t_next == t_k:
        return x.copy()
    return x + ((t_next - t_k) / (1.0 - t_k)) * (endpoint - x)


def check_semigroup(fmap: FlowMap, s, u, t, x):
    """``|X_{s,t}(x) - X_{u,t}(X_{s,u}(x))|`` (max over a batch)."""
    direct = fmap.eval(s, t, x)
    composed = fmap.eval(u, t, fmap.eval(s, u, x))
    return float(np.max(np.linalg.norm(np.atleast_2d(direct - composed), axis=-1)))
