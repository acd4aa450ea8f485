"""General Bernstein construction from a heat kernel and an endpoint measure.

Everything is evaluated in log space. Points are arrays with a trailing
axis of length ``d``; for d = 1 scalars are accepted.
"""
from dataclasses import dataclass
import enum
import math

import numpy as np
from scipy.special import logsumexp

from .kernels import _as_points
from .quadrature import adaptive_gauss_legendre, gaussian_radius, integrate_box


class MeasureClass(str, enum.Enum):
    MARKOV = "markov"
    MARKOV_PRODUCT_FORM = "markov_product_form"
    NON_MARKOV_MIXTURE = "non_markov_mixture"


@dataclass(frozen=True)
class TimeGrid:
    times: tuple
    T: float

    def __post_init__(self):
        times = tuple(float(t) for t in np.atleast_1d(self.times))
        if not times:
            raise ValueError("time grid is empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"grid times must be strictly increasing: {times}")
        if times[0] <= 0 or times[-1] >= self.T:
            raise ValueError(f"grid times must lie in the open interval (0, {self.T}): {times}")
        object.__setattr__(self, "times", times)

    @property
    def n(self):
        return len(self.times)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.times, dtype=dtype)

    def shifted(self, tau):
        return TimeGrid(tuple(t + tau for t in self.times), self.T)


@dataclass(frozen=True)
class PinnedProduct:
    """Endpoint law of a bridge from ``a`` at time 0 to ``b`` at time T."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        if self.a.shape != self.b.shape:
            raise ValueError("a and b must have the same dimension")

    def __eq__(self, other):
        return (isinstance(other, PinnedProduct) and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b))

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes()))

    @property
    def d(self):
        return self.a.size


@dataclass(frozen=True)
class GibbsDiagonal:
    """``Z(T)^-1 g(x, T, x) delta(x - y)``.

    ``partition`` is ``Z(T)``; when omitted it is computed by quadrature of
    ``g(x, T, x)`` (d = 1 only).
    """

    partition: float = None


@dataclass(frozen=True)
class Mixture:
    weights: tuple
    components: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) == 0:
            raise ValueError("mixture has no components")
        if w.size != len(self.components):
            raise ValueError("weights and components differ in length")
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"mixture weights sum to {w.sum()}, not 1")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "components", tuple(self.components))


def _check_times(s, r, t):
    if not s < r < t:
        raise ValueError(f"need s < r < t, got s={s}, r={r}, t={t}")


def log_reciprocal_density(kernel, x, t, z, r, y, s):
    _check_times(s, r, t)
    return (kernel.log_evaluate(x, t - r, z) + kernel.log_evaluate(z, r - s, y)
            - kernel.log_evaluate(x, t - s, y))


def reciprocal_density(kernel, x, t, z, r, y, s):
    """``q = g(x, t-r, z) g(z, r-s, y) / g(x, t-s, y)``."""
    return np.exp(log_reciprocal_density(kernel, x, t, z, r, y, s))


def _integration_box(kernel, centres, taus, tail=1e-12):
    centres = np.atleast_2d(np.asarray(centres, dtype=float))
    w = max(float(np.max(kernel.width(tau))) for tau in taus)
    w = max(w, *(math.sqrt(tau) for tau in taus))
    R = gaussian_radius(w, tail) + 1.0
    return centres.min(axis=0) - R, centres.max(axis=0) + R, w


def two_sided_transition(kernel, x, t, region, r, y, s, tol=1e-12):
    """``Q(x, t; F, r; y, s)``: probability that ``Z_r`` lies in the box ``F``.

    ``region`` is ``(lower, upper)``; infinite bounds are clipped to the
    Gaussian envelope of the integrand.
    """
    _check_times(s, r, t)
    x = _as_points(x, kernel.d).reshape(-1)
    y = _as_points(y, kernel.d).reshape(-1)
    lo_env, hi_env, w = _integration_box(kernel, [x, y], [t - r, r - s])
    lower = np.maximum(np.broadcast_to(np.asarray(region[0], dtype=float), x.shape), lo_env)
    upper = np.minimum(np.broadcast_to(np.asarray(region[1], dtype=float), x.shape), hi_env)
    if np.any(upper <= lower):
        return 0.0
    w_narrow = min(float(kernel.width(t - r)), float(kernel.width(r - s)))
    panels = int(min(2048, max(16, math.ceil(float(np.max(upper - lower)) / (0.5 * w_narrow)))))
    lg = kernel.log_evaluate(x, t - s, y)

    def f(z):
        return np.exp(kernel.log_evaluate(x, t - r, z) + kernel.log_evaluate(z, r - s, y) - lg)
    if kernel.d == 1:
        val = adaptive_gauss_legendre(lambda z: f(z[:, None]), lower[0], upper[0], tol=tol,
                                      min_panels=panels)[0]
    else:
        val = integrate_box(f, lower, upper, tol=tol, min_panels=min(panels, 32))
    return float(val)


def _log_partition(measure, kernel):
    if measure.partition is not None:
        return math.log(measure.partition)
    if kernel.d != 1:
        raise ValueError("GibbsDiagonal without a partition value needs d = 1")
    T = kernel.T
    R = gaussian_radius(max(float(kernel.width(T)), 1.0), 1e-14) + 10.0
    z, _ = adaptive_gauss_legendre(lambda x: kernel.evaluate(x[:, None], T, x[:, None]), -R, R,
                                   tol=1e-13)
    return math.log(z)


def fdd_log_density(measure, kernel, grid, points):
    """Log joint density of ``(Z_{t_1}, ..., Z_{t_n})`` at ``points`` (shape (n, d)).

    A leading batch axis is allowed: ``points`` of shape ``(..., n, d)``.
    """
    if not isinstance(grid, TimeGrid):
        raise TypeError("grid must be a TimeGrid")
    T = grid.T
    if abs(T - kernel.T) > 1e-12 * max(1.0, T):
        raise ValueError(f"grid horizon {T} differs from kernel horizon {kernel.T}")
    pts = np.asarray(points, dtype=float)
    if kernel.d == 1 and (pts.ndim == 1 or pts.shape[-1] != 1):
        pts = pts[..., None]
    if pts.shape[-2] != grid.n:
        raise ValueError(f"{pts.shape[-2]} points for a grid of {grid.n} times")
    ts = np.asarray(grid.times)
    chain = 0.0
    for k in range(1, grid.n):
        chain = chain + kernel.log_evaluate(pts[..., k, :], ts[k] - ts[k - 1], pts[..., k - 1, :])
    if isinstance(measure, PinnedProduct):
        a, b = measure.a, measure.b
        out = (chain + kernel.log_evaluate(pts[..., 0, :], ts[0], a)
               + kernel.log_evaluate(b, T - ts[-1], pts[..., -1, :])
               - kernel.log_evaluate(a, T, b))
    elif isinstance(measure, GibbsDiagonal):
        out = (chain + kernel.log_evaluate(pts[..., 0, :], T - (ts[-1] - ts[0]), pts[..., -1, :])
               - _log_partition(measure, kernel))
    elif isinstance(measure, Mixture):
        parts = [math.log(p) + fdd_log_density(c, kernel, grid, pts)
                 for p, c in zip(measure.weights, measure.components)]
        out = logsumexp(np.stack(parts), axis=0)
    else:
        raise TypeError(f"unsupported measure {type(measure).__name__}")
    out = np.asarray(out)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite kernel values in fdd density")
    return out if out.ndim else float(out)


def marginal_density(measure, kernel, t, x):
    """Density of ``Z_t`` at ``x`` for ``0 < t < T``."""
    if not 0 < t < kernel.T:
        raise ValueError(f"t must lie in (0, {kernel.T}), got {t}")
    x = np.asarray(x, dtype=float)
    if kernel.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if isinstance(measure, GibbsDiagonal):
        return np.exp(kernel.log_evaluate(x, kernel.T, x) - _log_partition(measure, kernel))
    if isinstance(measure, PinnedProduct):
        # u(x,t) v(x,t) with the pinned endpoint normalization
        return np.exp(kernel.log_evaluate(measure.a, t, x)
                      + kernel.log_evaluate(x, kernel.T - t, measure.b)
                      - kernel.log_evaluate(measure.a, kernel.T, measure.b))
    if isinstance(measure, Mixture):
        return sum(p * marginal_density(c, kernel, t, x)
                   for p, c in zip(measure.weights, measure.components))
    raise TypeError(f"unsupported measure {type(measure).__name__}")


def classify_measure(measure):
    """Structural Markov classification of an endpoint measure.

    A pinned product has the form ``(nu_0 x nu_T) g`` and so yields a Markov
    process; the Gibbs diagonal and mixtures of distinct bridges do not.
    """
    if isinstance(measure, PinnedProduct):
        return MeasureClass.MARKOV_PRODUCT_FORM
    if isinstance(measure, GibbsDiagonal):
        return MeasureClass.NON_MARKOV_MIXTURE
    if isinstance(measure, Mixture):
        distinct = set(measure.components)
        if len(distinct) == 1:
            return classify_measure(next(iter(distinct)))
        return MeasureClass.NON_MARKOV_MIXTURE
    raise TypeError(f"unsupported measure {type(measure).__name__}")


def gaussian_markov_ratio(cov, s, t, u):
    """``K(s,u) K(t,t) - K(s,t) K(t,u)`` for ``s < t < u``.

    For a Gaussian process this vanishes exactly when the process is Markov
    across ``t``. The covariance must be positive definite on the distinct
    times among ``{s, t, u}``.
    """
    if not s <= t <= u:
        raise ValueError(f"need s <= t <= u, got {(s, t, u)}")
    distinct = sorted(set((s, t, u)))
    K = np.array([[cov(p, q) for q in distinct] for p in distinct], dtype=float)
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise ValueError(f"covariance is not positive definite on {distinct}") from None
    return cov(s, u) * cov(t, t) - cov(s, t) * cov(t, u)


def stationarity_residual(fdd, grid, points, tau):
    """``|log p(grid + tau, points) - log p(grid, points)|`` for an fdd evaluator.

    ``fdd`` is a callable ``(grid, points) -> log density``.
    """
    if tau == 0:
        return 0.0
    try:
        shifted = grid.shifted(tau)
    except ValueError:
        raise ValueError(f"shift {tau} moves the grid outside (0, {grid.T})") from None
    return float(np.max(np.abs(fdd(shifted, points) - fdd(grid, points))))


def integrate_1d(f, lo, hi, tol=1e-12, min_panels=64):
    """Adaptive integral of a vectorized 1-D function; thin wrapper for callers."""
    return adaptive_gauss_legendre(f, lo, hi, tol=tol, min_panels=min_panels)[0]
