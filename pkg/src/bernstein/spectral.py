"""Harmonic-oscillator spectrum, scaled Hermite functions and partition functions.

Also provides a finite-difference eigensolver for 1-D Schrodinger operators
``-1/2 d^2/dx^2 + V`` used as an independent oracle for general potentials.
"""
from dataclasses import dataclass, field
import itertools
import math

import numpy as np
from scipy import linalg
from scipy.interpolate import CubicSpline

#: Cramer-Charlier constant bounding |h_m(x)| <= k pi^(-1/4)
CRAMER_K = 1.086435


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class MultiIndex:
    components: tuple

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if len(comps) < 1:
            raise ValueError("multi-index must have length >= 1")
        if any(c < 0 for c in comps):
            raise ValueError(f"negative component in {comps}")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self):
        return len(self.components)

    @property
    def degree(self):
        return sum(self.components)

    def __iter__(self):
        return iter(self.components)


@dataclass(frozen=True)
class HarmonicSpec:
    """Isotropic oscillator ``-1/2 Laplacian + lam^2 |x|^2 / 2`` on R^d over [0, T]."""

    d: int = 1
    lam: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class SpectrumTruncation:
    """Index set ``{m : m_j < max_degree}`` with a bound on the discarded mass."""

    max_degree: int
    tail_bound: float = 0.0

    def __post_init__(self):
        if self.max_degree < 1:
            raise ValueError("max_degree must be >= 1")
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")

    def indices(self, d):
        return [MultiIndex(m) for m in itertools.product(range(self.max_degree), repeat=d)]


def eigenvalue(m, spec):
    """Energy ``(|m| + d/2) lam`` of level ``m``."""
    m = m if isinstance(m, MultiIndex) else MultiIndex(tuple(np.atleast_1d(m)))
    if m.dim != spec.d:
        raise DimensionError(f"multi-index has length {m.dim}, spec has d={spec.d}")
    return (m.degree + spec.d / 2.0) * spec.lam


def hermite_functions(max_degree, x):
    """Values of the orthonormal Hermite functions ``h_0 .. h_{max_degree-1}`` at ``x``.

    Uses the normalized three-term recurrence on the polynomial part with a
    running log-scale, so large ``|x|`` underflows cleanly to 0 instead of
    producing inf/NaN. Returns an array of shape ``(max_degree,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree,) + x.shape)
    p_prev = np.zeros_like(x)
    p = np.full_like(x, np.pi ** -0.25)
    log_scale = -0.5 * x * x
    out[0] = p * np.exp(log_scale)
    for k in range(1, max_degree):
        p_next = np.sqrt(2.0 / k) * x * p - np.sqrt((k - 1) / k) * p_prev
        p_prev, p = p, p_next
        big = np.abs(p) > 1e150
        if np.any(big):
            s = np.where(big, np.abs(p), 1.0)
            p = p / s
            p_prev = p_prev / s
            log_scale = log_scale + np.log(s)
        with np.errstate(under="ignore"):
            out[k] = p * np.exp(log_scale)
    return out


def hermite_function(m, lam, x):
    """Scaled Hermite function ``lam^(1/4) h_m(sqrt(lam) x)``."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if not lam > 0:
        raise ValueError("lam must be positive")
    return lam ** 0.25 * hermite_functions(m + 1, np.sqrt(lam) * np.asarray(x, dtype=float))[m]


def hermite_product(m, lam, x):
    """d-dimensional eigenfunction ``prod_j h_{m_j,lam}(x_j)``; ``x`` has shape (..., d)."""
    m = m if isinstance(m, MultiIndex) else MultiIndex(tuple(np.atleast_1d(m)))
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.dim:
        raise DimensionError(f"points have dimension {x.shape[-1]}, index has {m.dim}")
    out = np.ones(x.shape[:-1])
    for j, mj in enumerate(m):
        out = out * hermite_function(mj, lam, x[..., j])
    return out


def _geometric_tail_1d(spec, t, M):
    q = math.exp(-spec.lam * t)
    head = math.exp(-0.5 * spec.lam * t) * -math.expm1(-spec.lam * t * M) / -math.expm1(-spec.lam * t)
    tail = math.exp(-spec.lam * t * (M + 0.5)) / -math.expm1(-spec.lam * t)
    return head, tail, q


def truncation_for(spec, t, tol=1e-12):
    """Smallest per-dimension degree whose relative partition tail is below ``tol``."""
    q = math.exp(-spec.lam * t)
    # relative tail of the d-fold product is 1 - (1 - q^M)^d <= d q^M
    M = max(1, math.ceil(math.log(tol / spec.d) / math.log(q)))
    return SpectrumTruncation(M, spec.d * q ** M)


def partition_function(spec, t, method="closed", tol=1e-12):
    """``Z(t) = sum_m exp(-t E_m)``.

    ``closed`` evaluates ``(2 (cosh(lam t) - 1))^(-d/2)``; ``series`` sums the
    truncated multi-index set term by term and adds the analytic geometric tail.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if method == "closed":
        # 2(cosh u - 1) = 4 sinh^2(u/2)
        u = spec.lam * t
        log_z = -spec.d * (math.log(2.0) + _log_sinh(0.5 * u))
        return math.exp(log_z)
    if method != "series":
        raise ValueError(f"unknown method {method!r}")
    trunc = truncation_for(spec, t, tol)
    M = trunc.max_degree
    e1 = spec.lam * (np.arange(M) + 0.5)
    w1 = np.exp(-t * e1)
    if spec.d <= 3 and M ** spec.d <= 3e7:
        # explicit enumeration over the box of multi-indices
        energies = e1
        for _ in range(spec.d - 1):
            energies = np.add.outer(energies, e1)
        s_box = float(np.sum(np.exp(-t * energies)))
    else:
        s_box = float(np.sum(w1)) ** spec.d
    head, tail, _ = _geometric_tail_1d(spec, t, M)
    # mass outside the box: (head + tail)^d - head^d, expanded to avoid cancellation
    outside = sum(math.comb(spec.d, k) * head ** (spec.d - k) * tail ** k
                  for k in range(1, spec.d + 1))
    return s_box + outside


def gibbs_weights(spec, trunc=None, tol=1e-12):
    """Normalized Gibbs weights ``p_m = Z(T)^-1 exp(-T E_m)`` on a truncation.

    Returns ``(weights, renorm)`` where ``weights`` maps MultiIndex -> weight
    (summing to 1) and ``renorm`` is the factor applied after truncation.
    """
    if trunc is None:
        trunc = truncation_for(spec, spec.T, tol)
    q = math.exp(-spec.lam * spec.T)
    p1 = -math.expm1(-spec.lam * spec.T) * q ** np.arange(trunc.max_degree)
    weights = {}
    for m in itertools.product(range(trunc.max_degree), repeat=spec.d):
        weights[MultiIndex(m)] = float(np.prod(p1[list(m)]))
    total = math.fsum(weights.values())
    renorm = 1.0 / total
    return {m: w * renorm for m, w in weights.items()}, renorm


def purity_gibbs_closed(spec):
    """``sum_m p_m^2`` for untruncated Gibbs weights, ``((1-q)^2/(1-q^2))^d``."""
    q = math.exp(-spec.lam * spec.T)
    return ((1 - q) / (1 + q)) ** spec.d


def _log_sinh(u):
    u = np.asarray(u, dtype=float)
    return u + np.log(-np.expm1(-2.0 * u)) - math.log(2.0)


@dataclass(frozen=True)
class GridEigenSystem:
    """Lowest eigenpairs of a 1-D Schrodinger operator on a uniform grid.

    ``eigenfunctions[:, i]`` is grid-normalized: ``sum(f_i**2) * h == 1``.
    """

    grid_points: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    _splines: list = field(default=None, repr=False, compare=False)

    @property
    def spacing(self):
        return self.grid_points[1] - self.grid_points[0]

    @property
    def size(self):
        return self.eigenvalues.size

    def gram(self):
        f = self.eigenfunctions
        return f.T @ f * self.spacing

    def evaluate(self, i, x):
        """Cubic-spline interpolant of eigenfunction ``i`` (0 outside the walls)."""
        if self._splines is None:
            L = self.grid_points[-1] + self.spacing
            xs = np.concatenate([[-L], self.grid_points, [L]])
            pad = np.zeros((1, self.size))
            ys = np.vstack([pad, self.eigenfunctions, pad])
            object.__setattr__(self, "_splines", CubicSpline(xs, ys, axis=0))
        x = np.asarray(x, dtype=float)
        L = self.grid_points[-1] + self.spacing
        vals = self._splines(np.clip(x, -L, L))[..., i]
        return np.where(np.abs(x) <= L, vals, 0.0)

    def evaluate_all(self, x):
        """All interpolated eigenfunctions at ``x``: shape ``x.shape + (M,)``."""
        self.evaluate(0, 0.0)
        x = np.asarray(x, dtype=float)
        L = self.grid_points[-1] + self.spacing
        vals = self._splines(np.clip(x, -L, L))
        return np.where((np.abs(x) <= L)[..., None], vals, 0.0)


# central second-derivative stencils, coefficients for offsets 0, 1, 2, ...
_STENCILS = {
    2: [-2.0, 1.0],
    4: [-5 / 2, 4 / 3, -1 / 12],
    6: [-49 / 18, 3 / 2, -3 / 20, 1 / 90],
    8: [-205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560],
}


def grid_eigensystem(potential, L=None, n_points=2000, M=10, order=8):
    """Lowest ``M`` eigenpairs of ``-1/2 d^2/dx^2 + V`` with Dirichlet walls at ``+-L``.

    ``order=2`` is the classical tridiagonal discretization; higher orders use
    a symmetric banded central stencil. When ``L`` is omitted it is set to the
    classical turning point of level ``M`` plus 5.
    """
    if n_points < 4 * M:
        raise ValueError(f"n_points={n_points} must be >= 4*M={4 * M}")
    if order not in _STENCILS:
        raise ValueError(f"order must be one of {sorted(_STENCILS)}")
    if L is None:
        L = 10.0
        first = grid_eigensystem(potential, L, n_points, M, order)
        L = _turning_point(potential, first.eigenvalues[-1], L) + 5.0
    if not L > 0:
        raise ValueError("L must be positive")
    x = np.linspace(-L, L, n_points + 2)[1:-1]
    h = x[1] - x[0]
    v = np.asarray(potential(x), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("potential is not finite on the grid")
    if v.min() < -1e12:
        raise ValueError("potential is unbounded below on the grid")
    coeffs = _STENCILS[order]
    bw = len(coeffs) - 1
    # upper banded storage for scipy.linalg.eig_banded
    band = np.zeros((bw + 1, n_points))
    band[bw] = -0.5 * coeffs[0] / h ** 2 + v
    for k in range(1, bw + 1):
        band[bw - k, k:] = -0.5 * coeffs[k] / h ** 2
    try:
        if order == 2:
            w, f = linalg.eigh_tridiagonal(band[1], band[0, 1:], select="i",
                                           select_range=(0, M - 1))
        else:
            w, f = linalg.eig_banded(band, select="i", select_range=(0, M - 1))
    except linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
    f = f / np.sqrt(h)
    # Hermite sign convention: positive beyond the right turning point
    for i in range(M):
        j = np.flatnonzero(np.abs(f[:, i]) > 1e-3 * np.abs(f[:, i]).max())[-1]
        if f[j, i] < 0:
            f[:, i] = -f[:, i]
    return GridEigenSystem(x, w, f)


def _turning_point(potential, energy, L):
    xs = np.linspace(0.0, 4 * L, 20001)
    v = np.maximum(potential(xs), potential(-xs))
    above = np.flatnonzero(v > energy)
    return float(xs[above[0]]) if above.size else 4 * L
