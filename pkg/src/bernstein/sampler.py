"""Monte Carlo sampling of the Gaussian laws and empirical comparison.

Randomness is organised in blocks of ``BLOCK`` paths. Block ``k`` of a run
with seed ``s`` draws from a Philox stream keyed by ``(s, tag, k)`` where
``tag`` identifies the sampler, so the ensemble does not depend on how many
worker threads process the blocks.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os
import zlib

import numpy as np
from scipy import signal, stats

from .core import TimeGrid
from .laws import _lam_csch, alpha_coth, bridge_fdd_law, stationary_cov
from .quadrature import adaptive_gauss_legendre

BLOCK = 1024
DEFAULT_GATE = 4.0


def default_threads():
    return max(1, int(os.environ.get("BERNSTEIN_THREADS", "1")))


@dataclass(frozen=True)
class PathEnsemble:
    times: np.ndarray
    T: float
    paths: np.ndarray
    seed: int
    generator_id: str
    labels: np.ndarray = None

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 3 or paths.shape[0] < 1:
            raise ValueError(f"paths must have shape (N, n, d) with N >= 1, got {paths.shape}")
        if paths.shape[1] != len(self.times):
            raise ValueError("paths and times disagree in length")
        object.__setattr__(self, "paths", paths)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))

    @property
    def N(self):
        return self.paths.shape[0]

    @property
    def d(self):
        return self.paths.shape[2]

    @property
    def grid(self):
        return TimeGrid(tuple(self.times), self.T)


@dataclass(frozen=True)
class EmpiricalStats:
    """Means ``(n, d)`` and coordinate-averaged covariance ``(n, n)`` with standard errors."""

    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    N: int


@dataclass(frozen=True)
class AnalyticMoments:
    """Target first and second moments for :func:`empirical_compare`."""

    mean: np.ndarray
    scalar_cov: np.ndarray


@dataclass
class CompareReport:
    z_mean: np.ndarray
    z_cov: np.ndarray
    gate: float
    bias: dict = field(default_factory=dict)

    @property
    def max_abs_z(self):
        return float(max(np.abs(self.z_mean).max(), np.abs(self.z_cov).max()))

    @property
    def n_comparisons(self):
        return int(self.z_mean.size + np.triu(np.ones_like(self.z_cov)).sum())

    @property
    def passed(self):
        return self.max_abs_z < self.gate

    def note(self):
        p_one = 2 * stats.norm.sf(self.gate)
        return (f"{self.n_comparisons} comparisons at gate {self.gate}: false-alarm rate "
                f"at most {self.n_comparisons * p_one:.2e} (union bound)")

    def as_dict(self):
        return {"max_abs_z": self.max_abs_z, "gate": self.gate, "passed": self.passed,
                "n_comparisons": self.n_comparisons, "note": self.note(),
                "z_mean": self.z_mean.tolist(), "z_cov": self.z_cov.tolist(),
                "bias": {k: np.asarray(v).tolist() for k, v in self.bias.items()}}


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _tag(name):
    return zlib.crc32(name.encode())


def block_rngs(seed, name, N):
    """``(rng, size)`` pairs for the blocks of an ``N``-path run."""
    seed = _check_seed(seed)
    out = []
    for k, start in enumerate(range(0, N, BLOCK)):
        ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, _tag(name), k])
        out.append((np.random.Generator(np.random.Philox(ss)), min(BLOCK, N - start)))
    return out


def run_blocks(seed, name, N, work, threads=None):
    """Apply ``work(rng, size)`` to each block and concatenate along axis 0.

    ``work`` may return an array or a tuple of arrays.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    threads = threads or default_threads()
    blocks = block_rngs(seed, name, N)
    if threads == 1:
        results = [work(rng, n) for rng, n in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: work(*b), blocks))
    if isinstance(results[0], tuple):
        return tuple(np.concatenate(parts) for parts in zip(*results))
    return np.concatenate(results)


def cholesky_with_jitter(K):
    """Cholesky factor of ``K``; on failure retry once with ``1e-12 tr(K)/n`` added."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        n = K.shape[0]
        jitter = 1e-12 * np.trace(K) / n
        try:
            return np.linalg.cholesky(K + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError(
                f"covariance not positive definite even after jitter {jitter:.3e}") from None


def sample_gaussian_law(law, N, seed, threads=None):
    """Exact draws from ``N(mean, K x I_d)``."""
    K = law.scalar_cov
    if np.any(np.diag(K) <= 0):
        raise ValueError("law has a degenerate (zero-variance) time; sample only interior times")
    L = cholesky_with_jitter(K)
    n, d = law.mean.shape

    def work(rng, size):
        z = rng.standard_normal((size, n, d))
        return law.mean[None] + np.einsum("ij,njd->nid", L, z)
    paths = run_blocks(seed, "gaussian_law", N, work, threads)
    return PathEnsemble(np.asarray(law.grid.times), law.grid.T, paths, seed,
                        f"philox-b{BLOCK}/gaussian_law")


def bridge_step(spec, b, x, s, t):
    """Mean and variance of ``Z_t`` given ``Z_s = x`` for the bridge ending at ``b``.

    The forward density ``g(x, t-s, y) v(y, t) / v(x, s)`` is Gaussian in ``y``
    with precision ``alpha(t - s) + alpha(T - t)``.
    """
    lam, T = spec.lam, spec.T
    prec = float(alpha_coth(lam, t - s) + alpha_coth(lam, T - t))
    if not prec > 0 or not np.isfinite(prec):
        raise FloatingPointError(f"non-positive step precision {prec} on [{s}, {t}]")
    mean = (float(_lam_csch(lam, t - s)) * x + float(_lam_csch(lam, T - t)) * b) / prec
    return mean, 1.0 / prec


def sample_bridge_sequential(bspec, grid, N, seed, threads=None):
    """Markov sampling of the bridge, one grid step at a time from the origin."""
    spec, b = bspec.spec, bspec.b
    if abs(grid.T - spec.T) > 1e-12 * max(1.0, grid.T):
        raise ValueError("grid horizon differs from the bridge horizon")
    times = np.asarray(grid.times)
    steps = []
    s = 0.0
    for t in times:
        steps.append((s, t) + bridge_step(spec, b, 0.0, s, t)[1:])
        s = t

    def work(rng, size):
        z = rng.standard_normal((size, times.size, spec.d))
        out = np.empty_like(z)
        x = np.zeros((size, spec.d))
        for k, (s, t, var) in enumerate(steps):
            mean, _ = bridge_step(spec, b, x, s, t)
            x = mean + math.sqrt(var) * z[:, k]
            out[:, k] = x
        return out
    paths = run_blocks(seed, "bridge_sequential", N, work, threads)
    return PathEnsemble(times, grid.T, paths, seed, f"philox-b{BLOCK}/bridge_sequential")


def sample_mixture(weights, bspecs, grid, N, seed, threads=None):
    """Draw a component per path, then an exact bridge path from that component."""
    if len(bspecs) == 0:
        raise ValueError("empty mixture")
    p = np.asarray(weights, dtype=float)
    if p.size != len(bspecs) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-10:
        raise ValueError("mixture weights must be positive and sum to 1")
    laws = [bridge_fdd_law(bs, grid) for bs in bspecs]
    chol = [cholesky_with_jitter(law.scalar_cov) for law in laws]
    n, d = laws[0].mean.shape

    def work(rng, size):
        labels = rng.choice(len(p), size=size, p=p)
        z = rng.standard_normal((size, n, d))
        out = np.empty_like(z)
        for m, (law, L) in enumerate(zip(laws, chol)):
            sel = labels == m
            out[sel] = law.mean[None] + np.einsum("ij,njd->nid", L, z[sel])
        return out, labels
    paths, labels = run_blocks(seed, "mixture", N, work, threads)
    return PathEnsemble(np.asarray(grid.times), grid.T, paths, seed, f"philox-b{BLOCK}/mixture",
                        labels=labels)


def mixture_moments(weights, bspecs, grid):
    """Mean and coordinate-averaged covariance of a bridge mixture."""
    laws = [bridge_fdd_law(bs, grid) for bs in bspecs]
    p = np.asarray(weights, dtype=float)
    mean = sum(pm * law.mean for pm, law in zip(p, laws))
    d = mean.shape[1]
    second = sum(pm * (law.scalar_cov + law.mean @ law.mean.T / d) for pm, law in zip(p, laws))
    return AnalyticMoments(mean, second - mean @ mean.T / d)


def _check_sde_grid(times, T, steps):
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > T) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be increasing within [0, T]")
    dt = T / steps
    idx = np.rint(times / dt).astype(int)
    if np.any(np.abs(idx * dt - times) > 1e-9 * T):
        raise ValueError(f"times must lie on the partition of [0, {T}] into {steps} steps")
    gaps = np.diff(np.concatenate([[0.0], times, [T]]))
    resolution = gaps[gaps > 0].min() if np.any(gaps > 0) else T
    if steps < 2 * T / resolution:
        raise ValueError(f"{steps} steps is fewer than twice the grid resolution")
    return times, idx


def simulate_periodic_ou(spec, times, N, seed, steps=4096, threads=None, richardson=False):
    """Left-point discretization of the periodic OU representation.

    ``X_t = exp(-lam t) I_T / (1 - exp(-lam T)) + I_t`` with
    ``I_t = int_0^t exp(-lam (t - tau)) dW_tau``, all integrals sharing the
    same Wiener increments. With ``richardson=True`` a second ensemble is
    built from the same increments summed in pairs (half resolution) and both
    are returned.
    """
    lam, T, d = spec.lam, spec.T, spec.d
    if steps % 2 and richardson:
        raise ValueError("Richardson comparison needs an even number of steps")
    times, idx = _check_sde_grid(times, T, steps)

    def integrate(dW, n_steps, index):
        dt = T / n_steps
        a = math.exp(-lam * dt)
        # Y_{k+1} = a (Y_k + dW_k), the left-point sum for I at step k+1
        Y = signal.lfilter([a], [1.0, -a], dW, axis=1)
        Y = np.concatenate([np.zeros((dW.shape[0], 1, d)), Y], axis=1)
        IT = Y[:, -1]
        A = IT / -math.expm1(-lam * T)
        decay = np.exp(-lam * index * dt)
        return decay[None, :, None] * A[:, None, :] + Y[:, index]

    def work(rng, size):
        dW = math.sqrt(T / steps) * rng.standard_normal((size, steps, d))
        fine = integrate(dW, steps, idx)
        if not richardson:
            return fine
        coarse_dW = dW[:, 0::2] + dW[:, 1::2]
        return fine, integrate(coarse_dW, steps // 2, idx // 2)
    out = run_blocks(seed, "periodic_ou", N, work, threads)
    gid = f"philox-b{BLOCK}/periodic_ou/{steps}"
    if not richardson:
        return PathEnsemble(times, T, out, seed, gid)
    return (PathEnsemble(times, T, out[0], seed, gid),
            PathEnsemble(times, T, out[1], seed, f"philox-b{BLOCK}/periodic_ou/{steps // 2}"))


def periodic_ou_moments(spec, times):
    times = np.asarray(times, dtype=float)
    K = stationary_cov(spec, times[:, None], times[None, :])
    return AnalyticMoments(np.zeros((times.size, spec.d)), K)


def empirical_stats(ensemble):
    X = ensemble.paths
    N, n, d = X.shape
    mean = X.mean(axis=0)
    mean_se = X.std(axis=0, ddof=1) / math.sqrt(N)
    C = X - mean
    cov = np.empty((n, n))
    cov_se = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            prod = (C[:, i, :] * C[:, j, :]).mean(axis=1)   # average the iid coordinates
            cov[i, j] = cov[j, i] = prod.sum() / (N - 1)
            cov_se[i, j] = cov_se[j, i] = prod.std(ddof=1) / math.sqrt(N)
    return EmpiricalStats(mean, cov, mean_se, cov_se, N)


def empirical_compare(ensemble, law, gate=DEFAULT_GATE, bias=None):
    """z-scores of empirical moments against an analytic law.

    ``bias`` optionally maps ``"mean"``/``"cov"`` to a deterministic bias
    budget added to the standard error in the denominator.
    """
    st = empirical_stats(ensemble)
    mean = np.asarray(law.mean, dtype=float).reshape(st.mean.shape)
    K = np.asarray(law.scalar_cov, dtype=float)
    if K.shape != st.cov.shape:
        raise ValueError(f"law covariance {K.shape} does not match ensemble {st.cov.shape}")
    bias = bias or {}
    z_mean = (st.mean - mean) / (st.mean_se + np.abs(bias.get("mean", 0.0)))
    z_cov = (st.cov - K) / (st.cov_se + np.abs(bias.get("cov", 0.0)))
    return CompareReport(z_mean, z_cov, gate, dict(bias))


def compare_ensembles(e1, e2, gate=DEFAULT_GATE):
    """Two-sample z-gate on means and covariances of independent ensembles."""
    s1, s2 = empirical_stats(e1), empirical_stats(e2)
    if s1.cov.shape != s2.cov.shape:
        raise ValueError("ensembles live on different grids")
    z_mean = (s1.mean - s2.mean) / np.hypot(s1.mean_se, s2.mean_se)
    z_cov = (s1.cov - s2.cov) / np.hypot(s1.cov_se, s2.cov_se)
    return CompareReport(z_mean, z_cov, gate)


def richardson_bias(fine, coarse):
    """Bias estimate of a first-order scheme: fine minus half-resolution statistics."""
    a, b = empirical_stats(fine), empirical_stats(coarse)
    return {"mean": np.abs(a.mean - b.mean), "cov": np.abs(a.cov - b.cov)}


def histogram_chi2(samples, density, bins=40, min_expected=5.0):
    """Pearson chi-square of 1-D ``samples`` against a density; returns ``(stat, dof, p)``.

    Bins are equal-width over the central sample range; sparse bins are merged
    into their neighbours until each expects at least ``min_expected`` counts.
    """
    x = np.asarray(samples, dtype=float).ravel()
    lo, hi = np.quantile(x, [0.001, 0.999])
    edges = np.linspace(lo, hi, bins + 1)
    edges = np.concatenate([[-np.inf], edges, [np.inf]])
    counts = np.histogram(x, edges)[0].astype(float)
    finite = edges[1:-1]
    span = hi - lo
    total = adaptive_gauss_legendre(density, lo - 20 * span, hi + 20 * span, tol=1e-12)[0]
    inner = [adaptive_gauss_legendre(density, a, b, tol=1e-13)[0]
             for a, b in zip(finite[:-1], finite[1:])]
    left = adaptive_gauss_legendre(density, lo - 20 * span, lo, tol=1e-13)[0]
    probs = np.array([left] + inner + [total - left - sum(inner)]) / total
    expected = probs * x.size
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    obs_m, exp_m = np.array(obs_m), np.array(exp_m)
    stat = float(((obs_m - exp_m) ** 2 / exp_m).sum())
    dof = obs_m.size - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))
