"""Closed-form Gaussian laws of the harmonic-oscillator Bernstein processes.

Two families are covered: bridges pinned at the origin at time 0 and at a
point ``b`` at time T, and the stationary periodic process obtained from the
Gibbs endpoint measure. Laws are isotropic, so only the scalar kernel
``K(s, t)`` is stored; the full covariance is ``K(s, t) * I_d``.
"""
from dataclasses import dataclass
import math

import numpy as np

from .core import TimeGrid
from .kernels import SMALL_LT, coth, log_sinh
from .spectral import HarmonicSpec


def alpha_coth(lam, t):
    """``lam * coth(lam * t)``, tending to ``1/t`` as ``lam -> 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError(f"alpha_coth needs t > 0, got {t}")
    if lam == 0:
        return 1.0 / t
    return lam * coth(lam * t)


def _sinh_ratio(num, den):
    """``prod sinh(num_i) / prod sinh(den_j)`` in log space (all arguments >= 0)."""
    num = [np.asarray(a, dtype=float) for a in num]
    if any(np.any(a == 0) for a in num):
        zero = np.zeros(np.broadcast(*num).shape) if len(num) > 1 else np.zeros_like(num[0])
        mask = np.zeros(zero.shape, dtype=bool)
        for a in num:
            mask |= np.broadcast_to(a == 0, zero.shape)
        safe = [np.where(a == 0, 1.0, a) for a in num]
        return np.where(mask, 0.0, _sinh_ratio(safe, den))
    out = sum(log_sinh(a) for a in num) - sum(log_sinh(b) for b in den)
    return np.exp(out)


def _lam_csch(lam, t):
    """``lam / sinh(lam t)`` with the small-argument limit ``1/t``."""
    t = np.asarray(t, dtype=float)
    u = lam * t
    small = u < SMALL_LT
    safe = np.where(small, 1.0, u)
    regular = lam * np.exp(-log_sinh(safe))
    series = (1.0 - np.where(small, u, 0.0) ** 2 / 6.0) / np.where(small, t, 1.0)
    return np.where(small, series, regular)


def _lsinh_over_lam(lam, t):
    """``sinh(lam t) / lam``, equal to ``t`` in the limit."""
    t = np.asarray(t, dtype=float)
    u = lam * t
    small = u < SMALL_LT
    series = t * (1.0 + u ** 2 / 6.0)
    with np.errstate(over="ignore"):
        regular = np.sinh(np.where(small, 1.0, u)) / lam
    return np.where(small, series, regular)


@dataclass(frozen=True)
class BridgeSpec:
    """Bridge from the origin at time 0 to ``b`` at time T."""

    spec: HarmonicSpec
    b: np.ndarray

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.shape != (self.spec.d,):
            raise ValueError(f"terminal point must have dimension {self.spec.d}, got {b.shape}")
        object.__setattr__(self, "b", b)

    @property
    def log_N(self):
        lam, T, d = self.spec.lam, self.spec.T, self.spec.d
        return (0.25 * d * (math.log(2.0 * math.pi) - math.log(lam) + float(log_sinh(lam * T)))
                + float(alpha_coth(lam, T)) * float(self.b @ self.b) / 4.0)

    @property
    def log_N_star(self):
        lam, T, d = self.spec.lam, self.spec.T, self.spec.d
        return (0.25 * d * (math.log(lam) + float(log_sinh(lam * T)) - math.log(2.0 * math.pi))
                + float(alpha_coth(lam, T)) * float(self.b @ self.b) / 4.0)

    @property
    def N(self):
        return math.exp(self.log_N)

    @property
    def N_star(self):
        return math.exp(self.log_N_star)


@dataclass(frozen=True)
class GaussianProcessLaw:
    grid: TimeGrid
    mean: np.ndarray
    scalar_cov: np.ndarray
    scalar_precision: np.ndarray = None

    def __post_init__(self):
        K = np.asarray(self.scalar_cov, dtype=float)
        n = self.grid.n
        if K.shape != (n, n):
            raise ValueError(f"covariance has shape {K.shape}, grid has {n} times")
        if not np.allclose(K, K.T, rtol=0, atol=1e-14 * max(1.0, np.abs(K).max())):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "scalar_cov", K)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(n, -1))

    @property
    def d(self):
        return self.mean.shape[1]

    def roundtrip_defect(self):
        """``max |K P - I|`` when a closed-form precision is attached."""
        if self.scalar_precision is None:
            return None
        n = self.grid.n
        return float(np.abs(self.scalar_cov @ self.scalar_precision - np.eye(n)).max())

    def log_density(self, points):
        """Log density of the isotropic Gaussian at ``points`` with shape ``(..., n, d)``."""
        x = np.asarray(points, dtype=float) - self.mean
        L = np.linalg.cholesky(self.scalar_cov)
        n, d = self.mean.shape
        # solve L w = x along the time axis for each coordinate
        flat = np.moveaxis(x, -2, 0).reshape(n, -1)
        w = np.linalg.solve(L, flat)
        quad = (w ** 2).sum(axis=0).reshape(x.shape[:-2] + (d,)).sum(axis=-1)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        return -0.5 * quad - 0.5 * d * (n * math.log(2.0 * math.pi) + logdet)


def bridge_solutions(bspec, x, t):
    """Forward and backward solutions ``(u, v)`` at ``(x, t)``."""
    spec = bspec.spec
    lam, T, d = spec.lam, spec.T, spec.d
    if not 0 < t < T:
        raise ValueError(f"t must lie in (0, {T}), got {t}")
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    xx = (x ** 2).sum(axis=-1)
    bx = (x * bspec.b).sum(axis=-1)
    bb = float(bspec.b @ bspec.b)
    log_u = (bspec.log_N_star - 0.5 * d * log_sinh(lam * t)
             - 0.5 * alpha_coth(lam, t) * xx)
    a_rev = alpha_coth(lam, T - t)
    log_v = (bspec.log_N_star - 0.5 * a_rev * bb - 0.5 * d * log_sinh(lam * (T - t))
             - 0.5 * (a_rev * xx - 2.0 * _lam_csch(lam, T - t) * bx))
    return np.exp(log_u), np.exp(log_v)


def bridge_mean(bspec, t):
    lam, T = bspec.spec.lam, bspec.spec.T
    if lam * T < SMALL_LT:
        return (t / T) * bspec.b
    return float(_sinh_ratio([lam * t], [lam * T])) * bspec.b


def bridge_cov(spec, s, t):
    """``sinh(lam (T - max)) sinh(lam min) / (lam sinh(lam T))``."""
    lam, T = spec.lam, spec.T
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    hi, lo = np.maximum(s, t), np.minimum(s, t)
    if lam * T < SMALL_LT:
        return (T - hi) * lo / T
    return _sinh_ratio([lam * (T - hi), lam * lo], [lam * T]) / lam


def bridge_moments(bspec, s, t):
    for v in (s, t):
        if not 0 <= v <= bspec.spec.T:
            raise ValueError(f"time {v} outside [0, {bspec.spec.T}]")
    return (bridge_mean(bspec, t), float(bridge_cov(bspec.spec, t, t)),
            float(bridge_cov(bspec.spec, s, t)))


def bridge_precision(spec, times):
    """Closed-form tridiagonal inverse of the bridge covariance on ``times``."""
    lam, T = spec.lam, spec.T
    t = np.asarray(times, dtype=float)
    n = t.size
    P = np.zeros((n, n))
    if n == 1:
        P[0, 0] = alpha_coth(lam, t[0]) + alpha_coth(lam, T - t[0])
        return P
    # pad with the pinned endpoints 0 and T: each diagonal entry is
    # lam sinh(lam (t_{k+1} - t_{k-1})) / (sinh(lam (t_{k+1} - t_k)) sinh(lam (t_k - t_{k-1})))
    ext = np.concatenate([[0.0], t, [T]])
    for k in range(1, n + 1):
        left, right = ext[k] - ext[k - 1], ext[k + 1] - ext[k]
        if lam * (right + left) < SMALL_LT:
            P[k - 1, k - 1] = 1.0 / left + 1.0 / right
        else:
            P[k - 1, k - 1] = lam * _sinh_ratio([lam * (left + right)], [lam * left, lam * right])
    off = -_lam_csch(lam, np.diff(t))
    idx = np.arange(n - 1)
    P[idx, idx + 1] = off
    P[idx + 1, idx] = off
    return P


def bridge_fdd_law(bspec, grid):
    if abs(grid.T - bspec.spec.T) > 1e-12 * max(1.0, grid.T):
        raise ValueError("grid horizon differs from the bridge horizon")
    t = np.asarray(grid.times)
    K = bridge_cov(bspec.spec, t[:, None], t[None, :])
    _require_pd(K, t)
    mean = np.stack([bridge_mean(bspec, tk) for tk in t])
    return GaussianProcessLaw(grid, mean, K, bridge_precision(bspec.spec, t))


def _require_pd(K, t):
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            f"covariance is not numerically positive definite on grid {t.tolist()}") from None
    if np.linalg.cond(K) > 1e14:
        raise np.linalg.LinAlgError(f"covariance is ill-conditioned on grid {t.tolist()}")


def stationary_variance(spec):
    """``sinh(lam T) / (2 lam (cosh(lam T) - 1))``, written as ``coth(lam T / 2) / (2 lam)``."""
    lam, T = spec.lam, spec.T
    if lam * T < SMALL_LT:
        # coth(u/2)/(2 lam) = 1/(lam^2 T) + T/12 + ...
        return 1.0 / (lam * lam * T) + T / 12.0
    return float(coth(0.5 * lam * T)) / (2.0 * lam)


def stationary_cov(spec, s, t):
    """``cosh(lam (|t - s| - T/2)) / (2 lam sinh(lam T / 2))``."""
    lam, T = spec.lam, spec.T
    lag = np.abs(np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
    # exponential form is overflow-free: the numerator never exceeds the denominator
    return ((np.exp(-lam * lag) + np.exp(-lam * (T - lag)))
            / (2.0 * lam * -np.expm1(-lam * T)))


def stationary_cov_cosh(spec, s, t):
    """Direct hyperbolic form of :func:`stationary_cov`, kept as an independent check."""
    lam, T = spec.lam, spec.T
    lag = np.abs(np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
    return np.cosh(lam * (lag - 0.5 * T)) / (2.0 * lam * np.sinh(0.5 * lam * T))


def stationary_moments(spec, s, t):
    for v in (s, t):
        if not 0 <= v <= spec.T:
            raise ValueError(f"time {v} outside [0, {spec.T}]")
    return stationary_variance(spec), float(stationary_cov(spec, s, t))


def stationary_precision(spec, times):
    """Closed-form inverse of the periodic covariance on ``times``."""
    lam, T = spec.lam, spec.T
    t = np.asarray(times, dtype=float)
    n = t.size
    if n == 1:
        return np.array([[1.0 / stationary_variance(spec)]])
    span = t[-1] - t[0]
    if n == 2:
        a, c = span, T - span
        diag = lam * _sinh_ratio([lam * T], [lam * a, lam * c])
        off = -_lam_csch(lam, a) - _lam_csch(lam, c)
        return np.array([[diag, off], [off, diag]], dtype=float)
    P = np.zeros((n, n))
    # the process lives on a circle of circumference T: neighbours of t_1 are
    # t_2 and t_n (gap T - span), neighbours of t_n are t_{n-1} and t_1
    gaps = np.concatenate([np.diff(t), [T - span]])
    for k in range(n):
        left, right = gaps[k - 1], gaps[k]
        P[k, k] = lam * _sinh_ratio([lam * (left + right)], [lam * left, lam * right])
    off = -_lam_csch(lam, np.diff(t))
    idx = np.arange(n - 1)
    P[idx, idx + 1] = off
    P[idx + 1, idx] = off
    P[0, -1] = P[-1, 0] = -_lam_csch(lam, T - span)
    return P


def stationary_fdd_law(spec, grid):
    if abs(grid.T - spec.T) > 1e-12 * max(1.0, grid.T):
        raise ValueError("grid horizon differs from the law horizon")
    t = np.asarray(grid.times)
    K = stationary_cov(spec, t[:, None], t[None, :])
    _require_pd(K, t)
    return GaussianProcessLaw(grid, np.zeros((t.size, spec.d)), K, stationary_precision(spec, t))


def conditioned_ou_moments(spec, s, t):
    """Variance at ``t`` and covariance of an OU process started at the origin."""
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    return float(conditioned_ou_cov(spec, t, t)), float(conditioned_ou_cov(spec, s, t))


def conditioned_ou_cov(spec, s, t):
    """``exp(-lam (s + t)) (exp(2 lam min(s, t)) - 1) / (2 lam)``."""
    lam = spec.lam
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    # rewrite as exp(-lam (hi - lo)) (1 - exp(-2 lam lo)) / (2 lam) to avoid overflow
    return np.exp(-lam * (hi - lo)) * -np.expm1(-2.0 * lam * lo) / (2.0 * lam)


def conditioned_ou_fdd_law(spec, grid):
    t = np.asarray(grid.times)
    K = conditioned_ou_cov(spec, t[:, None], t[None, :])
    _require_pd(K, t)
    return GaussianProcessLaw(grid, np.zeros((t.size, spec.d)), K)
