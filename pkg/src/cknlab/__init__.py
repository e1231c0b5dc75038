"""Numerical verification of weighted Hardy and Caffarelli-Kohn-Nirenberg identities."""
from .domain import CknParams, classify_regime
from .errors import (CknlabError, ConvergenceError, IntegrabilityError, PositivityError,
                     RegimeError, ZeroDenominator)

__version__ = "0.1.0"

__all__ = ["CknParams", "classify_regime", "CknlabError", "ConvergenceError",
           "IntegrabilityError", "PositivityError", "RegimeError", "ZeroDenominator"]
