"""Spectral toolkit on the 3-torus for convex-integration constructions.

Modules
-------
spectral_core
    Pseudo-spectral field algebra: Fourier multipliers, projections,
    inverse divergence, mollifiers, norms, snapshot I/O.
geometry
    Rational direction set, orthonormal frames, geometric-lemma
    coefficients and constants.
jets
    Cutoff profiles and intermittent jets with identity verification.
ledger
    Exact-exponent parameter ledger and feasibility checking.
builder
    Convex-integration stages: base pairs, amplitudes, perturbations,
    Reynolds-stress decomposition, residual evaluation.
noise
    Wiener sampling, stochastic convolution, Hoelder norms, stopping
    times, regularity reports.
cli
    Command-line front end.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
