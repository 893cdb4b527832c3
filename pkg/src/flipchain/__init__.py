"""Harmonic chain with momentum flips, boundary thermostats and tension.

Submodules: ``model`` (state, generator, identities), ``microsim`` (Monte
Carlo), ``moments`` (exact mean/covariance equations), ``pde`` (macroscopic
equations), ``wigner`` (Fourier-Wigner fluctuation fields), ``spectral``
(Fourier-Laplace functions and bounds) and ``harness`` (experiments, CLI).
"""

from . import microsim, model, moments, pde, spectral, wigner
from .model import ChainState, GibbsSpec, ModelParams, QuadraticObservable

__all__ = ["model", "microsim", "moments", "pde", "wigner", "spectral", "ModelParams", "ChainState", "GibbsSpec",
           "QuadraticObservable"]
__version__ = "0.1.0"
