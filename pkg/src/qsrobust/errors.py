"""Exception types shared across the package."""


class DomainError(ValueError):
    """A law or integrand lies outside the domain an operation needs
    (non-finite integrand values, inadmissible moment order)."""


class BracketError(ValueError):
    """A root bracket does not straddle a sign change."""


class InfeasibleError(ValueError):
    """A constraint cannot be met within the search budget."""
