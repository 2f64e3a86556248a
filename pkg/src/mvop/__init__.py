"""Matrix-valued orthogonal polynomials for exponential weights.

Weights have the form ``W_N(x) = exp(-N v(x)) exp(A x) exp(A^* x)`` with a
nilpotent subdiagonal ``A``.  The package provides the constructive matrix
Szego factorization, one-cut equilibrium data, a block Stieltjes solver for the
polynomials themselves, and evaluators for the large-N asymptotic formulas.
"""

from mvop.weight import MatrixWeight, NilpotentMatrix, Potential, load_weight_config
from mvop.szego import SzegoFactorization, spectral_factorize
from mvop.equilibrium import EquilibriumData, equilibrium_data, solve_mrs
from mvop.direct import MVOPFamily, compute_family
from mvop.asymptotics import AsymptoticContext, build_context

__all__ = [
    "AsymptoticContext",
    "EquilibriumData",
    "MVOPFamily",
    "MatrixWeight",
    "NilpotentMatrix",
    "Potential",
    "SzegoFactorization",
    "build_context",
    "compute_family",
    "equilibrium_data",
    "load_weight_config",
    "solve_mrs",
    "spectral_factorize",
]

__version__ = "0.1.0"
