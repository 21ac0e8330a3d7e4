"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of an operation."""


class ConstructionError(RuntimeError):
    """A covering could not be built to specification.

    ``uncovered`` holds the sample points that no patch contained.
    """

    def __init__(self, message, uncovered=None):
        super().__init__(message)
        self.uncovered = uncovered


class CoveringMismatch(ValueError):
    """Coefficients were produced from a different covering."""
