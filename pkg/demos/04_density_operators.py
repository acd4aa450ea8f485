"""
Density operators and expectations
==================================

An operator built from the forward and backward solutions of each bridge
has unit trace, and its traces against multiplication operators reproduce
process expectations.
"""
import numpy as np

from bernstein.core import GibbsDiagonal
from bernstein.density import (Observable, default_grid, eigen_defects, expectation_trace,
                               gibbs_eigen_operator, mixture_measure, pinned_operator,
                               process_expectation, purity, self_adjointness_defect, trace)
from bernstein.kernels import MehlerKernel
from bernstein.spectral import HarmonicSpec, partition_function

spec = HarmonicSpec(1, lam=1.0, T=1.0)
kernel = MehlerKernel(spec)

pinned = pinned_operator(kernel, np.zeros((2, 1)), [[1.0], [-1.5]], (0.6, 0.4))
gibbs = gibbs_eigen_operator(spec)
print("pinned trace at t=0.3:", trace(pinned, 0.3))
print("Gibbs trace at t=0.3: ", trace(gibbs, 0.3), " terms:", len(gibbs.weights))
print("Gibbs purity:", purity(gibbs))

# %%
# Tr(R(t) B) against the expectation from the marginal density.
cos = Observable(lambda x: np.cos(x[:, 0]), 1.0, "cos")
inside = Observable(lambda x: (np.abs(x[:, 0]) <= 1).astype(float), 1.0, "|x|<=1", (-1.0, 1.0))
for op, measure in ((pinned, mixture_measure(pinned)),
                    (gibbs, GibbsDiagonal(partition_function(spec, 1.0)))):
    for obs in (cos, inside):
        grid = default_grid(op, 0.5, breakpoints=obs.breakpoints)
        lhs = expectation_trace(op, 0.5, obs, grid)
        rhs = process_expectation(measure, kernel, 0.5, obs, grid)
        print(f"{op.mode.value:17s} {obs.name:7s} Tr(RB) = {lhs:.10f}  E[b] = {rhs:.10f}")

# %%
# Only the eigenbasis operator is self-adjoint, and its eigenfunctions
# carry the Gibbs weights as eigenvalues.
grid = default_grid(pinned, 0.5)
f = np.exp(-grid.nodes[:, 0] ** 2)
print("pinned ||R f - R* f||:", self_adjointness_defect(pinned, 0.5, f, grid))
print("Gibbs eigen-relation defects:", eigen_defects(gibbs, 0.5))
