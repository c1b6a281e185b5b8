"""Numerical laboratory for the 1-D viscous stochastic conservation law.

Solves the viscous SPDE by Euler-Maruyama finite volumes and measures weighted
translation moduli, entropy interaction bounds and the interaction identity.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalAbort, PropertyViolation  # noqa: E402
from .grid import Boundary, GridSpec  # noqa: E402

__all__ = ["Boundary", "ConfigError", "GridSpec", "NumericalAbort", "PropertyViolation", "__version__"]
