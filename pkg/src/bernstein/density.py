"""Density operators ``R(t) f = sum_m p_m <f, u_m(., t)> v_m(., t)``.

Functions are represented by their values on the nodes of a
:class:`~bernstein.quadrature.Grid`; inner products are weighted dot products.
Two families are supported:

* ``pinned``: ``u_m = g(x, t, a_m) / g(a_m, T, b_m)^(1/2)`` and
  ``v_m = g(x, T - t, b_m) / g(a_m, T, b_m)^(1/2)`` for any heat kernel;
* ``eigenbasis``: ``u_m = exp(-t E_m) h_m`` and ``v_m = exp(t E_m) h_m`` with
  Gibbs weights, for which ``R`` does not depend on ``t``.
"""
from dataclasses import dataclass
import enum
import logging
import math

import numpy as np

from .core import Mixture, PinnedProduct, marginal_density
from .quadrature import aligned_grid, gaussian_radius, tensor_grid
from .spectral import HarmonicSpec, MultiIndex, eigenvalue, gibbs_weights, hermite_functions

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    PINNED = "pinned"
    EIGENBASIS = "eigenbasis_gibbs"


class ModeError(ValueError):
    pass


@dataclass(frozen=True)
class Observable:
    """Multiplication operator by a bounded function ``b``."""

    b: object
    sup_bound: float
    name: str = "b"
    breakpoints: tuple = ()

    def __call__(self, x):
        vals = np.asarray(self.b(x), dtype=float)
        if np.any(np.abs(vals) > self.sup_bound * (1 + 1e-12)):
            raise ValueError(f"observable {self.name} exceeds its bound {self.sup_bound}")
        return vals


@dataclass(frozen=True)
class DensityOperatorSpec:
    weights: tuple
    labels: tuple
    u: object
    v: object
    mode: Mode
    T: float
    d: int = 1
    renormalization: float = 1.0
    kernel: object = None
    endpoints: tuple = None
    spec: HarmonicSpec = None
    batch: object = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.labels) != w.size:
            raise ValueError("one label per weight required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights must be a probability vector (sum {w.sum()})")
        object.__setattr__(self, "weights", tuple(float(p) for p in w))

    def check_time(self, t):
        if self.mode is Mode.PINNED and not 0 < t < self.T:
            raise ValueError(f"pinned mode needs t in (0, {self.T}), got {t}")
        if self.mode is Mode.EIGENBASIS and not 0 <= t <= self.T:
            raise ValueError(f"eigenbasis mode needs t in [0, {self.T}], got {t}")

    def families(self, t, grid):
        """Matrices ``U, V`` of shape ``(n_terms, n_nodes)`` on ``grid``."""
        self.check_time(t)
        if self.batch is not None:
            return self.batch(t, grid.nodes)
        U = np.stack([self.u(m, t, grid.nodes) for m in self.labels])
        V = np.stack([self.v(m, t, grid.nodes) for m in self.labels])
        return U, V


def pinned_operator(kernel, a_points, b_points, weights):
    """Operator built from pinned bridges ``a_m -> b_m`` with mixture weights ``p_m``."""
    d, T = kernel.d, kernel.T
    a = np.asarray(a_points, dtype=float).reshape(len(weights), d)
    b = np.asarray(b_points, dtype=float).reshape(len(weights), d)
    if np.max(np.abs(a - b)) > 1e6:
        raise ValueError("pinned mode needs sup |a_m - b_m| finite")
    half_log_norm = 0.5 * np.array([kernel.log_evaluate(a[m], T, b[m]) for m in range(len(a))])

    def u(m, t, x):
        return np.exp(kernel.log_evaluate(x, t, a[m]) - half_log_norm[m])

    def v(m, t, x):
        return np.exp(kernel.log_evaluate(x, T - t, b[m]) - half_log_norm[m])
    return DensityOperatorSpec(tuple(weights), tuple(range(len(weights))), u, v, Mode.PINNED, T,
                               d, kernel=kernel, endpoints=(a, b))


def gibbs_eigen_operator(spec, tol=1e-12, weights=None):
    """Eigenbasis operator with Gibbs weights truncated at tail mass ``tol``.

    ``weights`` may be a mapping ``MultiIndex -> p`` replacing the Gibbs
    weights (used for pure states and other diagonal mixtures).
    """
    renorm = 1.0
    if weights is None:
        weights, renorm = gibbs_weights(spec, tol=tol)
        log.info("Gibbs weights truncated to %d terms, renormalized by %.3e", len(weights), renorm)
    labels = tuple(m if isinstance(m, MultiIndex) else MultiIndex(tuple(np.atleast_1d(m)))
                   for m in weights)
    p = tuple(float(w) for w in weights.values())
    max_deg = max(max(m.components) for m in labels)
    lam = spec.lam

    def h_all(x):
        x = np.asarray(x, dtype=float).reshape(-1, spec.d)
        # one recurrence per coordinate, shared by every label
        tables = [lam ** 0.25 * hermite_functions(max_deg + 1, math.sqrt(lam) * x[:, j])
                  for j in range(spec.d)]
        H = np.ones((len(labels), x.shape[0]))
        for i, m in enumerate(labels):
            for j, mj in enumerate(m.components):
                H[i] *= tables[j][mj]
        return H

    energies = np.array([eigenvalue(m, spec) for m in labels])
    position = {m: i for i, m in enumerate(labels)}

    def u(m, t, x):
        return math.exp(-t * eigenvalue(m, spec)) * h_all(x)[position[m]]

    def v(m, t, x):
        return math.exp(t * eigenvalue(m, spec)) * h_all(x)[position[m]]

    def batch(t, x):
        H = h_all(x)
        return np.exp(-t * energies)[:, None] * H, np.exp(t * energies)[:, None] * H
    return DensityOperatorSpec(p, labels, u, v, Mode.EIGENBASIS, spec.T, spec.d,
                               renormalization=renorm, spec=spec, batch=batch)


def default_grid(op, t=None, order=20, breakpoints=()):
    """Quadrature grid resolving every ``u_m`` and ``v_m`` at time ``t``.

    In one dimension panel edges are placed at ``breakpoints`` as well.
    """
    if op.mode is Mode.EIGENBASIS:
        max_deg = max(max(m.components) for m in op.labels)
        # Hermite functions of degree <= M decay like a Gaussian beyond the turning point
        lam = op.spec.lam
        R = (math.sqrt(2 * max_deg + 1) + 9.0) / math.sqrt(lam)
        width = 0.5 / math.sqrt(lam)
    else:
        a, b = op.endpoints
        w = [float(op.kernel.width(t)), float(op.kernel.width(op.T - t))]
        centres = np.concatenate([a, b, np.zeros((1, op.d))])
        R = float(np.abs(centres).max()) + gaussian_radius(max(w), 1e-14) + 1.0
        width = max(0.5 * min(w), 2 * R / 4096)
    if op.d == 1:
        return aligned_grid(R, breakpoints, width, order)
    return tensor_grid(R, op.d, panels=min(24, int(math.ceil(2 * R / width))), order=order)


def _values(f, grid):
    if callable(f):
        return np.asarray(f(grid.nodes), dtype=float).reshape(-1)
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.nodes.shape[0],):
        raise ValueError(f"function values have shape {f.shape}, grid has {grid.nodes.shape[0]} nodes")
    return f


def apply(op, t, f, grid=None):
    """``R(t) f`` on the nodes of ``grid``."""
    grid = grid or default_grid(op, t)
    U, V = op.families(t, grid)
    coeffs = U @ (grid.weights * _values(f, grid))
    return (np.asarray(op.weights) * coeffs) @ V


def apply_adjoint(op, t, f, grid=None):
    """``R*(t) f = sum_m p_m <f, v_m> u_m``."""
    grid = grid or default_grid(op, t)
    U, V = op.families(t, grid)
    coeffs = V @ (grid.weights * _values(f, grid))
    return (np.asarray(op.weights) * coeffs) @ U


def trace(op, t, grid=None):
    grid = grid or default_grid(op, t)
    U, V = op.families(t, grid)
    return float(np.asarray(op.weights) @ ((U * V) @ grid.weights))


def purity(op, t=0.0):
    """``Tr R(t)^2 = sum p_m^2`` for a biorthonormal family."""
    if op.mode is not Mode.EIGENBASIS:
        raise ModeError("purity is defined here for the eigenbasis mode only")
    op.check_time(t)
    p = np.asarray(op.weights)
    return float(p @ p)


def is_pure(op):
    """Pure state: a single weight equal to one."""
    p = np.asarray(op.weights)
    return bool(np.count_nonzero(p) == 1 and abs(p.max() - 1.0) < 1e-15)


def expectation_trace(op, t, obs, grid=None):
    """``Tr(R(t) B) = sum_m p_m int b u_m v_m``."""
    grid = grid or default_grid(op, t, breakpoints=obs.breakpoints)
    U, V = op.families(t, grid)
    b = obs(grid.nodes)
    return float(np.asarray(op.weights) @ ((U * V) @ (grid.weights * b)))


def process_expectation(measure, kernel, t, obs, grid):
    """``E[b(Z_t)]`` from the marginal density of the process."""
    dens = marginal_density(measure, kernel, t, grid.nodes)
    return float(np.sum(grid.weights * obs(grid.nodes) * dens))


def mixture_measure(op):
    """Endpoint measure of the process whose traces a pinned operator reproduces."""
    if op.mode is not Mode.PINNED:
        raise ModeError("only pinned operators correspond to a mixture of bridges")
    a, b = op.endpoints
    comps = [PinnedProduct(a[m], b[m]) for m in range(len(op.weights))]
    keep = [i for i, p in enumerate(op.weights) if p > 0]
    w = np.array([op.weights[i] for i in keep])
    return Mixture(tuple(w / w.sum()), tuple(comps[i] for i in keep))


def biortho_check(op, t, pairs=None, grid=None):
    """``max |<u_m, v_n> - delta_mn|`` over ``pairs`` (default: all labels)."""
    if op.mode is not Mode.EIGENBASIS:
        raise ModeError("biorthonormality holds in the eigenbasis mode only")
    grid = grid or default_grid(op, t)
    U, V = op.families(t, grid)
    G = (U * grid.weights) @ V.T
    defect = np.abs(G - np.eye(len(op.labels)))
    if pairs is None:
        return float(defect.max())
    index = {m: i for i, m in enumerate(op.labels)}
    return float(max(defect[index[m], index[n]] for m, n in pairs))


def eigen_defects(op, t, grid=None):
    """Largest ``||R v_m - p_m v_m|| / ||v_m||`` and the adjoint counterpart for ``u_m``.

    The defects are relative because ``v_m`` carries the factor ``exp(t E_m)``,
    so absolute residuals scale with it while the eigen-relation does not.
    """
    grid = grid or default_grid(op, t)
    U, V = op.families(t, grid)
    worst_r = worst_adj = 0.0
    for i in range(len(op.labels)):
        p = op.weights[i]
        worst_r = max(worst_r, grid.norm(apply(op, t, V[i], grid) - p * V[i]) / grid.norm(V[i]))
        worst_adj = max(worst_adj,
                        grid.norm(apply_adjoint(op, t, U[i], grid) - p * U[i]) / grid.norm(U[i]))
    return worst_r, worst_adj


def oblique_projection(op, m, t, f, grid=None):
    """``P^m(t) f = <f, u_m> v_m``; idempotent because ``<u_m, v_m> = 1``."""
    grid = grid or default_grid(op, t)
    i = op.labels.index(m)
    u = op.u(op.labels[i], t, grid.nodes)
    v = op.v(op.labels[i], t, grid.nodes)
    return grid.inner(_values(f, grid), u) * v


def self_adjointness_defect(op, t, f, grid=None):
    """``||R f - R* f||``; nonzero witnesses that ``R(t)`` is not self-adjoint."""
    grid = grid or default_grid(op, t)
    return grid.norm(apply(op, t, f, grid) - apply_adjoint(op, t, f, grid))
