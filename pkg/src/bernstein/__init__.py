"""Bernstein processes built from the harmonic-oscillator heat kernel."""
from .spectral import HarmonicSpec, MultiIndex, SpectrumTruncation
from .kernels import GaussianHeatKernel, MehlerKernel, SpectralKernel, mehler_eval
from .core import (GibbsDiagonal, Mixture, PinnedProduct, TimeGrid, classify_measure,
                   fdd_log_density, marginal_density, reciprocal_density, two_sided_transition)
from .laws import (BridgeSpec, GaussianProcessLaw, bridge_fdd_law, bridge_moments,
                   stationary_fdd_law, stationary_moments)

__version__ = "0.1.0"

__all__ = [
    "HarmonicSpec", "MultiIndex", "SpectrumTruncation",
    "GaussianHeatKernel", "MehlerKernel", "SpectralKernel", "mehler_eval",
    "GibbsDiagonal", "Mixture", "PinnedProduct", "TimeGrid", "classify_measure",
    "fdd_log_density", "marginal_density", "reciprocal_density", "two_sided_transition",
    "BridgeSpec", "GaussianProcessLaw", "bridge_fdd_law", "bridge_moments",
    "stationary_fdd_law", "stationary_moments",
]
