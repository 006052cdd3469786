"""Rewards with exact gradients, evaluated on batched states ``(..., d)``."""

from __future__ import annotations

import numpy as np


class Reward:
    def value(self, x):
        return self.value_and_grad(x)[0]

    def grad(self, x):
        return self.value_and_grad(x)[1]

    def value_and_grad(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)


class QuadraticReward(Reward):
    """``r(x) = -|x - a|^2``."""

    def __init__(self, a):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))

    def value_and_grad(self, x):
        diff = np.asarray(x, dtype=float) - self.a
        return -np.sum(diff * diff, axis=-1), -2.0 * diff


class LinearMeasurementReward(Reward):
    """``r(x) = -|A x - y|^2`` for a measurement matrix ``A`` of shape ``(d_o, d)``."""

    def __init__(self, A, y):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.A.shape[0] != self.y.shape[0]:
            raise ValueError("A and y disagree on the measurement dimension")

    def residual(self, x):
        return np.einsum("oj,...j->...o", self.A, np.asarray(x, dtype=float)) - self.y

    def value_and_grad(self, x):
        res = self.residual(x)
        return -np.sum(res * res, axis=-1), -2.0 * np.einsum("oj,...o->...j", self.A, res)


class CompositeReward(Reward):
    """Weighted sum ``sum_k w_k r_k``."""

    def __init__(self, parts):
        self.parts = [(float(w), r) for w, r in parts]
        if not self.parts:
            raise ValueError("a composite reward needs at least one part")

    def value_and_grad(self, x):
        val = grad = None
        for w, r in self.parts:
            v, g = r.value_and_grad(x)
            val = w * v if val is None else val + w * v
            grad = w * g if grad is None else grad + w * g
        return val, grad
