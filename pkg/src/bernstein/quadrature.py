"""Gauss-Legendre quadrature helpers shared by the kernel, core and operator code.

Integrands are vectorized: they receive an array of nodes with shape
``(n, d)`` (or ``(n,)`` for the 1-D helpers) and return ``n`` values.
"""
from dataclasses import dataclass
from functools import lru_cache
import itertools

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when an adaptive rule fails to meet its tolerance."""


@lru_cache(maxsize=64)
def _legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_legendre(a, b, order):
    """Nodes and weights of an ``order``-point rule on ``[a, b]``."""
    x, w = _legendre(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_nodes(a, b, panels, order=20):
    """Composite Gauss-Legendre rule with ``panels`` equal panels on ``[a, b]``."""
    x, w = _legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    nodes = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def adaptive_gauss_legendre(f, a, b, tol=1e-12, order=20, min_panels=16,
                            max_depth=40, max_panels=20000):
    """Integrate a vectorized scalar function over ``[a, b]``.

    Panels are bisected until an ``order``-point estimate and the sum over its
    two halves agree to ``tol`` (absolute, split across panels by length).
    Returns ``(value, error_estimate)``.
    """
    if not np.isfinite(a) or not np.isfinite(b) or b <= a:
        raise ValueError(f"bad integration interval [{a}, {b}]")
    x, w = _legendre(order)
    edges = np.linspace(a, b, min_panels + 1)
    stack = [(lo, hi, 0) for lo, hi in zip(edges[:-1], edges[1:])]
    total = 0.0
    err = 0.0
    length = b - a
    while stack:
        lo = np.array([p[0] for p in stack])
        hi = np.array([p[1] for p in stack])
        depth = np.array([p[2] for p in stack])
        mid = 0.5 * (lo + hi)
        # coarse rule on each panel, fine rule on both halves, one vectorized call
        def _nodes(l, h):
            half = 0.5 * (h - l)
            return l[:, None] + half[:, None] * (x[None, :] + 1.0), half[:, None] * w[None, :]
        n0, w0 = _nodes(lo, hi)
        n1, w1 = _nodes(lo, mid)
        n2, w2 = _nodes(mid, hi)
        vals = np.asarray(f(np.concatenate([n0.ravel(), n1.ravel(), n2.ravel()])), dtype=float)
        k = n0.size
        v0, v1, v2 = vals[:k], vals[k:2 * k], vals[2 * k:]
        coarse = (v0.reshape(n0.shape) * w0).sum(axis=1)
        mag = (np.abs(v1.reshape(n1.shape)) * w1).sum(axis=1) + (np.abs(v2.reshape(n2.shape)) * w2).sum(axis=1)
        fine = (v1.reshape(n1.shape) * w1).sum(axis=1) + (v2.reshape(n2.shape) * w2).sum(axis=1)
        diff = np.abs(fine - coarse)
        # roundoff floor so tiny panels cannot chase noise
        budget = np.maximum(tol * (hi - lo) / length, 256 * np.finfo(float).eps * mag)
        if not np.all(np.isfinite(fine)):
            raise QuadratureError("non-finite integrand value")
        ok = diff <= budget
        total += fine[ok].sum()
        err += diff[ok].sum()
        stack = []
        if np.count_nonzero(~ok) > max_panels:
            raise QuadratureError(f"more than {max_panels} unresolved panels")
        for i in np.flatnonzero(~ok):
            if depth[i] >= max_depth:
                raise QuadratureError(
                    f"no convergence on [{lo[i]:.3g}, {hi[i]:.3g}] after {max_depth} bisections")
            stack.append((lo[i], mid[i], depth[i] + 1))
            stack.append((mid[i], hi[i], depth[i] + 1))
    return total, err


def gaussian_radius(scale, tail=1e-12):
    """Half-width capturing all but ``tail`` of a centred Gaussian of std ``scale``."""
    return scale * np.sqrt(2.0 * np.log(1.0 / tail))


@dataclass(frozen=True)
class Grid:
    """Tensor-product quadrature rule on a box in R^d.

    ``nodes`` has shape ``(n, d)``; functions on the grid are arrays of
    length ``n`` and inner products are weighted dot products.
    """

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def dim(self):
        return self.nodes.shape[1]

    def inner(self, f, g):
        return float(np.sum(self.weights * f * g))

    def integrate(self, f):
        return float(np.sum(self.weights * f))

    def norm(self, f):
        return float(np.sqrt(self.inner(f, f)))


def tensor_grid(radius, d=1, panels=64, order=20):
    """Composite Gauss-Legendre grid on ``[-radius, radius]^d``."""
    x, w = composite_nodes(-radius, radius, panels, order)
    if d == 1:
        return Grid(x[:, None], w)
    nodes = np.array(list(itertools.product(x, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return Grid(nodes, weights)


def aligned_grid(radius, breakpoints=(), panel_width=0.5, order=20):
    """1-D composite grid on ``[-radius, radius]`` whose panel edges include ``breakpoints``.

    Keeps Gauss-Legendre accurate for piecewise-smooth integrands such as
    indicator functions.
    """
    panels = max(1, int(np.ceil(2 * radius / panel_width)))
    edges = np.linspace(-radius, radius, panels + 1)
    inside = [b for b in breakpoints if -radius < b < radius]
    edges = np.unique(np.concatenate([edges, inside]))
    x, w = _legendre(order)
    half = 0.5 * np.diff(edges)
    nodes = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
    weights = half[:, None] * w[None, :]
    return Grid(nodes.reshape(-1, 1), weights.ravel())


def integrate_box(f, lower, upper, tol=1e-10, order=20, min_panels=16):
    """Integrate ``f`` over a box in R^d, d <= 3.

    d = 1 is adaptive; higher dimensions use iterated adaptive rules,
    which is adequate for the smooth Gaussian-type integrands used here.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    d = lower.size
    if d > 3:
        raise ValueError("box quadrature is restricted to d <= 3")
    if np.any(upper <= lower):
        return 0.0
    if d == 1:
        return adaptive_gauss_legendre(lambda z: f(z[:, None]), lower[0], upper[0],
                                       tol=tol, order=order, min_panels=min_panels)[0]

    def inner(z0):
        out = np.empty(z0.size)
        for i, zi in enumerate(z0):
            def g(rest):
                pts = np.concatenate([np.full((rest.shape[0], 1), zi), rest], axis=1)
                return f(pts)
            out[i] = integrate_box(g, lower[1:], upper[1:], tol=tol, order=order,
                                   min_panels=min_panels)
        return out
    return adaptive_gauss_legendre(inner, lower[0], upper[0], tol=tol, order=order,
                                   min_panels=min_panels)[0]
