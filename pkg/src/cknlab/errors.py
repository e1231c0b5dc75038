"""Exception types shared across the package."""


class CknlabError(Exception):
    """Base class for all package errors."""


class IntegrabilityError(CknlabError):
    """One or more improper integrals diverge for the requested data."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "integrability violation")


class RegimeError(CknlabError):
    """Parameters violate the hypotheses of the requested theorem or regime."""


class ConvergenceError(CknlabError):
    """A numerical procedure failed to meet its tolerance."""


class PositivityError(CknlabError):
    """A function required to be positive is not."""


class ZeroDenominator(CknlabError):
    """A ratio was requested whose denominator vanishes."""
