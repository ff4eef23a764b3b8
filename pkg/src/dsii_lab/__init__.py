"""Numerical laboratory for the singularly perturbed Davey-Stewartson II equation.

The package reconstructs the explicit Darboux homoclinic orbit, evaluates its
Melnikov integrals, solves the quadratic normal-form homological system and
provides spectral oracles to cross-check all of it.
"""

__version__ = "0.1.0"

from .errors import DSIIError  # noqa: F401
