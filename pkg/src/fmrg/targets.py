"""Analytic data distributions with exact samplers, velocities and reward tilts.

All velocities assume the linear interpolant ``I_t = (1 - t) x0 + t x1`` with a
standard normal base ``x0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dynamics import VelocityField
from .errors import NumericalFailure
from .rng import ParticleStreams


@dataclass(frozen=True)
class AuxiliaryCoefficients:
    """Scalar coefficients of a Gaussian flow with data standard deviation ``sigma1``.

    ``sigma1`` may be an array (one entry per eigen-direction); every method
    then broadcasts.
    """

    sigma1: float

    def C(self, t):
        s = np.asarray(self.sigma1, dtype=float)
        return (1.0 - t) ** 2 + t * t * s * s

    def Cdot(self, t):
        s = np.asarray(self.sigma1, dtype=float)
        return -2.0 * (1.0 - t) + 2.0 * t * s * s

    def M(self, t):
        return np.asarray(self.sigma1, dtype=float) / np.sqrt(self.C(t))

    def integral_inv_C(self, t):
        """``int_t^1 dtau / C_tau`` in closed form (exactly 0 at ``t = 1``)."""
        s = np.asarray(self.sigma1, dtype=float)
        return np.arctan2(1.0 - t, s * t) / s


def _as_vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


class _EigenGaussian:
    """Gaussian ``N(mu1, U diag(sig^2) U^T)`` described in its eigenbasis."""

    mu1: np.ndarray
    U: np.ndarray | None  # None means the identity basis
    sig: np.ndarray

    @property
    def dim(self):
        return self.mu1.shape[0]

    @property
    def coefficients(self):
        return AuxiliaryCoefficients(self.sig)

    def to_eigen(self, x):
        return x if self.U is None else x @ self.U

    def from_eigen(self, z):
        return z if self.U is None else z @ self.U.T

    def scale_matrix(self, diag):
        """Dense ``U diag(diag) U^T``."""
        diag = np.broadcast_to(np.asarray(diag, dtype=float), (self.dim,))
        if self.U is None:
            return np.diag(diag)
        return (self.U * diag) @ self.U.T

    @property
    def covariance(self):
        return self.scale_matrix(self.sig**2)

    def velocity(self):
        return GaussianVelocity(self)


@dataclass(frozen=True, eq=False)
class GaussianTarget(_EigenGaussian):
    """Isotropic Gaussian ``N(mu1, sigma1^2 I)``."""

    mu1: np.ndarray
    sigma1: float

    def __post_init__(self):
        if not self.sigma1 > 0:
            raise ValueError("sigma1 must be positive")
        object.__setattr__(self, "mu1", _as_vec(self.mu1))
        object.__setattr__(self, "sigma1", float(self.sigma1))

    @property
    def U(self):
        return None

    @property
    def sig(self):
        return np.full(self.dim, self.sigma1)

    @property
    def coefficients(self):
        return AuxiliaryCoefficients(self.sigma1)


@dataclass(frozen=True, eq=False)
class DegenerateGaussianTarget(_EigenGaussian):
    """Gaussian concentrated near the affine subspace ``mu1 + span(basis)``.

    In-subspace directions have standard deviation ``sigma_par``; the
    orthogonal complement keeps a small ``sigma_perp`` so the flow stays
    well-posed.
    """

    mu1: np.ndarray
    basis: np.ndarray
    sigma_par: float
    sigma_perp: float = 1e-3
    U: np.ndarray = field(init=False, repr=False)
    sig: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu1 = _as_vec(self.mu1)
        B = np.asarray(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        d, k = B.shape
        if d != mu1.shape[0] or k > d:
            raise ValueError("basis shape does not match mu1")
        if np.max(np.abs(B.T @ B - np.eye(k))) > 1e-12:
            raise ValueError("basis columns must be orthonormal")
        if not 0 < self.sigma_perp < self.sigma_par:
            raise ValueError("need 0 < sigma_perp < sigma_par")
        # complete the basis with an orthonormal complement
        q, _ = np.linalg.qr(np.hstack([B, np.eye(d)]))
        U = np.hstack([B, q[:, k:d]])
        sig = np.array([self.sigma_par] * k + [self.sigma_perp] * (d - k))
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "sig", sig)


class GaussianVelocity(VelocityField):
    """``b_t(x) = mu1 + U diag(Cdot / 2C) U^T (x - t mu1)``."""

    def __init__(self, target: _EigenGaussian):
        self.target = target
        self.dim = target.dim
        self._coef = AuxiliaryCoefficients(target.sig)
        self._iso = target.U is None and np.all(target.sig == target.sig[0])
        if self._iso:
            self._coef = AuxiliaryCoefficients(float(target.sig[0]))

    def rate(self, t):
        c = self._coef
        return c.Cdot(t) / (2.0 * c.C(t))

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        mu = self.target.mu1
        y = x - t * mu
        if self._iso:
            return mu + self.rate(t) * y
        T = self.target
        return mu + T.from_eigen(self.rate(t) * T.to_eigen(y))

    def jacobian(self, t, x):
        x = np.asarray(x, dtype=float)
        J = self.target.scale_matrix(self.rate(t))
        return np.broadcast_to(J, x.shape + (self.dim,)).copy()

    def vjp(self, t, x, v):
        v = np.asarray(v, dtype=float)
        if self._iso:
            return self.rate(t) * v
        T = self.target
        return T.from_eigen(self.rate(t) * T.to_eigen(v))


@dataclass(frozen=True, eq=False)
class GaussianMixtureTarget:
    """Mixture ``sum_i w_i N(m_i, S_i)`` with full covariances."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:  # scalar means of a 1-D mixture
            m = m[:, None]
        S = np.asarray(self.covs, dtype=float)
        if S.ndim == 1:  # 1-D mixture given by variances
            S = S[:, None, None]
        if w.ndim != 1 or m.shape[0] != w.size or S.shape != (w.size, m.shape[1], m.shape[1]):
            raise ValueError("inconsistent mixture shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        for Si in S:
            if np.max(np.abs(Si - Si.T)) > 1e-12 or np.linalg.eigvalsh(Si).min() <= 0:
                raise ValueError("component covariances must be symmetric positive-definite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", S)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.weights.size

    def velocity(self):
        return MixtureVelocity(self)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        logs = [np.log(w) + _log_normal(x, m, S) if w > 0 else np.full(x.shape[:-1], -np.inf)
                for w, m, S in zip(self.weights, self.means, self.covs)]
        return logsumexp(np.stack(logs, axis=0), axis=0)


def _log_normal(x, m, S):
    L = np.linalg.cholesky(S)
    z = np.linalg.solve(L, (x - m)[..., None])[..., 0] if x.ndim > 1 else np.linalg.solve(L, x - m)
    d = m.shape[0]
    return -0.5 * np.sum(z * z, axis=-1) - np.log(np.diag(L)).sum() - 0.5 * d * np.log(2 * np.pi)


def gaussian_log_density(target: _EigenGaussian, x):
    return _log_normal(np.asarray(x, dtype=float), target.mu1, target.covariance)


class MixtureVelocity(VelocityField):
    """Exact probability-flow velocity of a Gaussian mixture.

    Given component ``i`` the interpolant is ``N(t m_i, Sigma_i(t))`` with
    ``Sigma_i(t) = (1-t)^2 I + t^2 S_i``, and the component velocity is affine:
    ``b_i = m_i + A_i (x - t m_i)`` with ``A_i = (t S_i - (1-t) I) Sigma_i(t)^{-1}``.
    The mixture velocity averages them under posterior responsibilities.
    At ``t = 0`` and ``t = 1`` these expressions are already the analytic
    limits (``A_i = -I`` and ``A_i = I``), so no special casing is needed.
    """

    def __init__(self, target: GaussianMixtureTarget):
        self.target = target
        self.dim = target.dim

    def _parts(self, t, x):
        T = self.target
        d = self.dim
        eye = np.eye(d)
        x = np.asarray(x, dtype=float)
        logs, bs, As, gs = [], [], [], []
        for w, m, S in zip(T.weights, T.means, T.covs):
            Sig = (1 - t) ** 2 * eye + t * t * S
            Sinv = np.linalg.inv(Sig)
            A = (t * S - (1 - t) * eye) @ Sinv
            y = x - t * m
            g = -np.einsum("ij,...j->...i", Sinv, y)
            _, logdet = np.linalg.slogdet(Sig)
            lw = np.log(w) if w > 0 else -np.inf
            logs.append(lw + 0.5 * np.sum(y * g, axis=-1) - 0.5 * logdet)
            bs.append(m + np.einsum("ij,...j->...i", A, y))
            As.append(A)
            gs.append(g)
        logs = np.stack(logs, axis=0)
        lse = logsumexp(logs, axis=0)
        if not np.all(np.isfinite(lse)):
            raise NumericalFailure("mixture responsibilities underflowed", f"t={t}")
        gam = np.exp(logs - lse)
        return gam, np.stack(bs, 0), np.stack(As, 0), np.stack(gs, 0)

    def responsibilities(self, t, x):
        return self._parts(t, x)[0]

    def __call__(self, t, x):
        gam, bs, _, _ = self._parts(t, x)
        return np.sum(gam[..., None] * bs, axis=0)

    def jacobian(self, t, x):
        gam, bs, As, gs = self._parts(t, x)
        b = np.sum(gam[..., None] * bs, axis=0)
        gbar = np.sum(gam[..., None] * gs, axis=0)
        J = np.einsum("k...,kij->...ij", gam, As)
        # d gamma_i / dx = gamma_i (g_i - gbar)
        J = J + np.einsum("k...,k...i,k...j->...ij", gam, bs - b, gs - gbar)
        return J

    def vjp(self, t, x, v):
        return np.einsum("...ij,...i->...j", self.jacobian(t, x), np.asarray(v, dtype=float))


def sample_target(target, n, seed, start=0):
    """``n`` i.i.d. draws; particle ``start + i`` always receives the same draw."""
    if n < 1:
        raise ValueError("n must be >= 1")
    streams = ParticleStreams(seed, start, n)
    z = streams.normals("target", 0, target.dim)
    if isinstance(target, GaussianMixtureTarget):
        u = streams.uniforms("component", 0, 1)[:, 0]
        cum = np.cumsum(target.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="right")
        idx = np.minimum(idx, target.n_components - 1)
        chol = np.linalg.cholesky(target.covs)
        return target.means[idx] + np.einsum("nij,nj->ni", chol[idx], z)
    return target.mu1 + target.from_eigen(target.sig * target.to_eigen(z))


def tilt_closed_form_gaussian(target: GaussianTarget, a, lam) -> GaussianTarget:
    """``N(mu1, sigma1^2 I)`` tilted by ``exp(-lam |x - a|^2)``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        return target
    a = _as_vec(a)
    s2 = target.sigma1**2
    k = 1.0 + 2.0 * lam * s2
    return GaussianTarget((target.mu1 + 2.0 * lam * s2 * a) / k, np.sqrt(s2 / k))


def tilt_closed_form_gmm(target: GaussianMixtureTarget, a, lam) -> GaussianMixtureTarget:
    """Mixture tilted by ``exp(-lam |x - a|^2)``; components tilt, weights re-normalize."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        return target
    a = _as_vec(a)
    d = target.dim
    eye = np.eye(d)
    logw, means, covs = [], [], []
    for w, m, S in zip(target.weights, target.means, target.covs):
        P = np.linalg.inv(S) + 2.0 * lam * eye
        Snew = np.linalg.inv(P)
        Snew = 0.5 * (Snew + Snew.T)
        means.append(Snew @ (np.linalg.solve(S, m) + 2.0 * lam * a))
        covs.append(Snew)
        # normalizer of w N(x; m, S) exp(-lam |x-a|^2) is proportional to N(a; m, S + I/(2 lam))
        lw = np.log(w) if w > 0 else -np.inf
        logw.append(lw + _log_normal(a, m, S + eye / (2.0 * lam)))
    logw = np.array(logw)
    wn = np.exp(logw - logsumexp(logw))
    wn = wn / wn.sum()
    return GaussianMixtureTarget(wn, np.array(means), np.array(covs))
