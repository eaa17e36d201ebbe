"""Capacity solvers and coding simulations for jammed state-dependent channels.

Subpackages group into: probability primitives (types and typical sets),
capacity computation for discrete and Gaussian models, the two random-coding
schemes (binned discrete codebooks, spherical dirty-paper codebooks), a suite
of jamming adversaries, concentration-bound experiments, and a batch CLI.
"""

__version__ = "0.1.0"

from . import errors

__all__ = ["errors", "__version__"]
