"""Heat kernels: closed-form Mehler kernel, truncated spectral expansions, diagnostics."""
from dataclasses import dataclass, field
import math

import numpy as np

from .quadrature import adaptive_gauss_legendre, gaussian_radius
from .spectral import (CRAMER_K, GridEigenSystem, HarmonicSpec, SpectrumTruncation,
                       hermite_functions, partition_function)

# below this value of lam*t the hyperbolic ratios switch to series branches
SMALL_LT = 1e-4


def log_sinh(u):
    """``log(sinh(u))`` for u > 0 without overflow."""
    u = np.asarray(u, dtype=float)
    return u + np.log(-np.expm1(-2.0 * u)) - math.log(2.0)


def coth(u):
    """``coth(u)`` for u > 0, with the Laurent series near 0."""
    u = np.asarray(u, dtype=float)
    small = u < SMALL_LT
    safe = np.where(small, 1.0, u)
    big = -np.expm1(-2.0 * safe)
    regular = (2.0 - big) / big
    series = 1.0 / np.where(small, u, 1.0) + u / 3.0
    return np.where(small, series, regular)


def _as_points(p, d):
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = p[None]
    if p.shape[-1] != d:
        if d == 1:
            p = p[..., None]
        else:
            raise ValueError(f"points must have trailing dimension {d}, got shape {p.shape}")
    return p


class HeatKernel:
    """Positive symmetric kernel ``g(x, t, y)`` on R^d for ``0 < t <= T``.

    Subclasses implement :meth:`log_evaluate`; points are arrays whose last
    axis has length ``d`` and broadcast against each other.
    """

    d: int = 1
    T: float = 1.0

    def log_evaluate(self, x, t, y):
        raise NotImplementedError

    def evaluate(self, x, t, y):
        return np.exp(self.log_evaluate(x, t, y))

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError(f"kernel time must be positive, got {t}")
        return t

    def width(self, t):
        """Length scale of ``g(x, t, .)``; used to size quadrature domains."""
        return np.sqrt(t)


@dataclass(frozen=True)
class MehlerKernel(HeatKernel):
    spec: HarmonicSpec

    @property
    def d(self):
        return self.spec.d

    @property
    def T(self):
        return self.spec.T

    def log_evaluate(self, x, t, y):
        t = self._check_t(t)
        lam, d = self.spec.lam, self.spec.d
        x = _as_points(x, d)
        y = _as_points(y, d)
        xx = np.sum(x * x, axis=-1)
        yy = np.sum(y * y, axis=-1)
        r2 = np.sum((x - y) ** 2, axis=-1)
        u = lam * t
        small = u < SMALL_LT
        us = np.where(small, 1.0, u)
        ts = np.where(small, t, 1.0)
        # cosh(u)(|x|^2+|y|^2) - 2<x,y> = |x-y|^2 + 2 sinh^2(u/2)(|x|^2+|y|^2),
        # which avoids cancellation for small t
        log_sh = np.where(small, np.log(ts) + u * u / 6.0, log_sinh(us) - math.log(lam))
        csch = np.where(small, (1.0 - u * u / 6.0) / ts, lam * np.exp(-log_sinh(us)))
        expo = -0.5 * csch * r2 - 0.5 * lam * np.tanh(0.5 * u) * (xx + yy)
        return -0.5 * d * (math.log(2 * math.pi) + log_sh) + expo

    def width(self, t):
        lam = self.spec.lam
        u = lam * np.asarray(t, dtype=float)
        return np.sqrt(np.where(u < SMALL_LT, t, np.tanh(u) / lam))


@dataclass(frozen=True)
class GaussianHeatKernel(HeatKernel):
    """Free heat kernel ``(2 pi t)^(-d/2) exp(-|x-y|^2 / 2t)``; the ``lam -> 0`` limit."""

    d: int = 1
    T: float = 1.0

    def log_evaluate(self, x, t, y):
        t = self._check_t(t)
        x = _as_points(x, self.d)
        y = _as_points(y, self.d)
        r2 = np.sum((x - y) ** 2, axis=-1)
        return -0.5 * self.d * np.log(2 * math.pi * t) - r2 / (2 * t)


def mehler_eval(spec, x, t, y):
    if not np.all(np.asarray(t) > 0):
        raise ValueError("t must be positive")
    if np.any(np.asarray(t) > spec.T * (1 + 1e-12)):
        raise ValueError(f"t must not exceed T={spec.T}")
    return MehlerKernel(spec).evaluate(x, t, y)


def cramer_charlier_bound(lam, d=1):
    """Uniform bound on ``|h_{m,lam}(x) h_{m,lam}(y)|`` over all m, x, y.

    Uses ``|h_m| <= k pi^(-1/4)`` and the ``lam^(1/4)`` scaling of each factor,
    which gives ``(lam / pi)^(d/2) k^(2d)``.
    """
    return (lam / math.pi) ** (d / 2) * CRAMER_K ** (2 * d)


def cramer_charlier_bound_quarter_power(lam, d=1):
    """The variant ``(lam / pi^2)^(d/4) k^(2d)``; agrees with the above only at lam = 1."""
    return (lam / math.pi ** 2) ** (d / 4) * CRAMER_K ** (2 * d)


@dataclass(frozen=True)
class SpectralKernel(HeatKernel):
    """Truncated eigen-expansion ``sum_m exp(-t E_m) f_m(x) f_m(y)``.

    Either ``spec`` (analytic Hermite basis, any d) or ``eigensystem`` (1-D
    grid basis) must be given. Evaluation below ``t_min`` raises, since the
    truncation tail is not certified there.
    """

    truncation: SpectrumTruncation
    spec: HarmonicSpec = None
    eigensystem: GridEigenSystem = None
    tol: float = 1e-8
    T_max: float = None
    t_min: float = field(init=False)

    def __post_init__(self):
        if (self.spec is None) == (self.eigensystem is None):
            raise ValueError("give exactly one of spec or eigensystem")
        if self.eigensystem is not None and self.eigensystem.size < self.truncation.max_degree:
            raise ValueError("eigensystem has fewer levels than the truncation")
        object.__setattr__(self, "t_min", self._solve_t_min())

    @property
    def d(self):
        return self.spec.d if self.spec is not None else 1

    @property
    def T(self):
        if self.T_max is not None:
            return self.T_max
        return self.spec.T if self.spec is not None else 1.0

    def energies_1d(self):
        M = self.truncation.max_degree
        if self.spec is not None:
            return self.spec.lam * (np.arange(M) + 0.5)
        return self.eigensystem.eigenvalues[:M]

    def tail_bound(self, t):
        """Upper bound on the discarded part of the expansion at time ``t``."""
        M = self.truncation.max_degree
        if self.spec is not None:
            spec = self.spec
            e = self.energies_1d()
            head = float(np.sum(np.exp(-t * e)))
            full = partition_function(HarmonicSpec(1, spec.lam, spec.T), t)
            # sum over m outside the box = Z^d - head^d
            outside = full ** spec.d - head ** spec.d
            return cramer_charlier_bound(spec.lam, spec.d) * max(outside, 0.0)
        # grid basis: bound remaining terms by the sup of the computed eigenfunctions
        # and a geometric continuation with the last observed level gap
        es = self.eigensystem
        fmax = float(np.max(np.abs(es.eigenfunctions[:, :M])))
        gap = float(es.eigenvalues[M - 1] - es.eigenvalues[M - 2]) if M > 1 else 1.0
        e_next = es.eigenvalues[M - 1] + gap
        return fmax ** 2 * math.exp(-t * e_next) / -math.expm1(-t * gap)

    def _solve_t_min(self):
        lo, hi = 1e-6, 1e3
        if self.tail_bound(hi) > self.tol:
            return math.inf
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if self.tail_bound(mid) > self.tol:
                lo = mid
            else:
                hi = mid
            if hi / lo < 1 + 1e-10:
                break
        return hi

    def basis(self, x):
        """Eigenfunction values at points ``x`` (shape (..., d)) -> (..., M^d)."""
        M = self.truncation.max_degree
        x = _as_points(x, self.d)
        if self.eigensystem is not None:
            return self.eigensystem.evaluate_all(x[..., 0])[..., :M]
        lam = self.spec.lam
        out = None
        for j in range(self.d):
            hj = lam ** 0.25 * np.moveaxis(hermite_functions(M, np.sqrt(lam) * x[..., j]), 0, -1)
            out = hj if out is None else (out[..., :, None] * hj[..., None, :]).reshape(
                hj.shape[:-1] + (-1,))
        return out

    def energies(self):
        e1 = self.energies_1d()
        e = e1
        for _ in range(self.d - 1):
            e = np.add.outer(e, e1).ravel()
        return e

    def evaluate_with_bound(self, x, t, y, certify=True):
        t = float(t)
        if t <= 0:
            raise ValueError("t must be positive")
        if certify and t < self.t_min:
            raise ValueError(f"t={t} below certified t_min={self.t_min:.4g} for tol={self.tol}")
        fx = self.basis(x)
        fy = self.basis(y)
        w = np.exp(-t * self.energies())
        return np.sum(fx * fy * w, axis=-1), self.tail_bound(t)

    def evaluate(self, x, t, y, certify=True):
        return self.evaluate_with_bound(x, t, y, certify)[0]

    def log_evaluate(self, x, t, y):
        v = self.evaluate(x, t, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(v)


def spectral_kernel_eval(kernel, x, t, y, certify=True):
    """Truncated expansion value and its tail bound."""
    return kernel.evaluate_with_bound(x, t, y, certify)


@dataclass
class KernelReport:
    symmetry_defect: float
    semigroup_residual: float
    semigroup_relative: float
    positive: bool
    aronson: dict
    n_probes: int

    def as_dict(self):
        return {
            "symmetry_defect": self.symmetry_defect,
            "semigroup_residual": self.semigroup_residual,
            "semigroup_relative": self.semigroup_relative,
            "positive": self.positive,
            "aronson": {str(k): v for k, v in self.aronson.items()},
            "n_probes": self.n_probes,
        }


def random_probe(n, T=1.0, box=3.0, seed=0, min_gap=1e-3):
    """Random 1-D probe triples ``(x, y, s, r, t)`` with ``0 <= s < r < t <= T``."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        s, r, t = np.sort(rng.uniform(0, T, 3))
        if r - s < min_gap or t - r < min_gap:
            continue
        x, y = rng.uniform(-box, box, 2)
        out.append((x, y, s, r, t))
    return out


def composition_integral(kernel, x, tau1, y, tau2, tol=1e-13):
    """``int g(x, tau1, z) g(z, tau2, y) dz`` in d = 1 by adaptive Gauss-Legendre.

    The domain is the union of the two kernels' Gaussian envelopes with a
    1e-12 tail budget.
    """
    if kernel.d != 1:
        raise ValueError("composition quadrature is implemented for d = 1")
    w1, w2 = float(kernel.width(tau1)), float(kernel.width(tau2))
    w = max(w1, w2, math.sqrt(tau1), math.sqrt(tau2))
    R = gaussian_radius(w, 1e-12) + 1.0
    lo = min(x, y) - R
    hi = max(x, y) + R
    panels = int(min(4096, max(16, math.ceil((hi - lo) / (0.5 * min(w1, w2))))))

    def f(z):
        return np.exp(kernel.log_evaluate(x, tau1, z[:, None]) + kernel.log_evaluate(z[:, None], tau2, y))
    return adaptive_gauss_legendre(f, lo, hi, tol=tol, order=20, min_panels=panels)[0]


def verify_kernel_properties(kernel, probe, trial_c=(0.25, 0.5, 1.0), tol=1e-13):
    """Symmetry, semigroup, positivity and empirical Gaussian-bound constants.

    ``probe`` is a sequence of ``(x, y, s, r, t)`` with ``s < r < t``. The
    Aronson entry maps each trial ``c`` to the min and max of
    ``g(x,t,y) t^(d/2) exp(c |x-y|^2 / t)`` over the probe.
    """
    sym = 0.0
    res = 0.0
    rel = 0.0
    positive = True
    ratios = {c: [] for c in trial_c}
    for x, y, s, r, t in probe:
        if not s < r < t:
            raise ValueError(f"probe ordering violated: {(s, r, t)}")
        tau = t - s
        gxy = float(kernel.evaluate(x, tau, y))
        gyx = float(kernel.evaluate(y, tau, x))
        sym = max(sym, abs(gxy - gyx) / max(abs(gxy), 1e-300))
        lg = float(kernel.log_evaluate(x, tau, y))
        if not np.isfinite(lg) or gxy <= 0:
            positive = False
        comp = composition_integral(kernel, x, t - r, y, r - s, tol=tol)
        res = max(res, abs(comp - gxy))
        rel = max(rel, abs(comp - gxy) / gxy)
        for c in trial_c:
            ratios[c].append(math.exp(lg + 0.5 * kernel.d * math.log(tau) + c * (x - y) ** 2 / tau))
    aronson = {c: (min(v), max(v)) for c, v in ratios.items()}
    return KernelReport(sym, res, rel, positive, aronson, len(probe))
