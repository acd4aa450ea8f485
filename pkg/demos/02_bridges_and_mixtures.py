"""
Pinned bridges and their mixtures
=================================

A bridge pinned at the origin at time 0 and at ``b`` at time ``T`` is a
Gaussian Markov process with explicit mean and covariance. Mixing bridges
with different endpoints breaks the Markov property.
"""
import numpy as np

from bernstein.core import Mixture, PinnedProduct, TimeGrid, classify_measure
from bernstein.laws import BridgeSpec, bridge_cov, bridge_fdd_law
from bernstein.sampler import (compare_ensembles, empirical_compare, sample_bridge_sequential,
                               sample_gaussian_law, sample_mixture)
from bernstein.spectral import HarmonicSpec

spec = HarmonicSpec(1, lam=1.0, T=1.0)

# The variance peaks at the midpoint and shrinks towards the Brownian
# bridge t (T - t) / T as lambda goes to zero.
t = np.linspace(0, 1, 11)
for lam in (2.0, 1.0, 1e-4):
    v = bridge_cov(HarmonicSpec(1, lam, 1.0), t, t)
    print(f"lambda={lam:<6}  var(t) =", np.round(v, 4))
print("brownian       var(t) =", np.round(t * (1 - t), 4))

# %%
# Two samplers for the same law: exact Cholesky draws from the joint law,
# and a step-by-step Markov sampler using the one-step forward transition.
bridge = BridgeSpec(spec, np.array([1.0]))
grid = TimeGrid((0.1, 0.3, 0.5, 0.7, 0.9), 1.0)
law = bridge_fdd_law(bridge, grid)
exact = sample_gaussian_law(law, 20_000, seed=1)
seq = sample_bridge_sequential(bridge, grid, 20_000, seed=2)
print("sequential vs law:   max |z| =", round(empirical_compare(seq, law).max_abs_z, 2))
print("sequential vs exact: max |z| =", round(compare_ensembles(seq, exact).max_abs_z, 2))

# %%
# Mixtures of bridges with distinct endpoints are classified as non-Markov;
# the sampler records which component produced each path.
ends = [BridgeSpec(spec, np.array([b])) for b in (-1.0, 1.0)]
mix = sample_mixture((0.5, 0.5), ends, grid, 10_000, seed=3)
print("label frequencies:", np.bincount(mix.labels) / mix.N)
print(classify_measure(Mixture((0.5, 0.5), (PinnedProduct(0, -1), PinnedProduct(0, 1)))).value)
print(classify_measure(PinnedProduct(0, 1)).value)
