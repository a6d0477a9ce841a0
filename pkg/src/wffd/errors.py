"""Exception types shared across the package."""


class WFFDError(Exception):
    """Base class for all package errors."""


class DomainError(WFFDError, ValueError):
    """A parameter lies outside the domain of an operation."""


class DegenerateError(WFFDError, ValueError):
    """The input collapses to a case the operation cannot represent."""


class ConstructionError(WFFDError, ValueError):
    """A distribution could not be built from the supplied parameters."""


class PreconditionError(WFFDError, ValueError):
    """A theorem's hypothesis does not hold for the given input.

    ``index`` names the offending support index when one exists, ``measured``
    carries the measured quantity (a probability, a ratio, ...).
    """

    def __init__(self, message, index=None, measured=None):
        super().__init__(message)
        self.index = index
        self.measured = measured


class SpecError(WFFDError, ValueError):
    """Malformed distribution spec; ``field`` points at the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class BudgetError(WFFDError, RuntimeError):
    """Brute-force enumeration would exceed the evaluation budget."""

    def __init__(self, needed, budget):
        super().__init__(f"enumeration needs {needed} evaluations, budget is {budget}")
        self.needed = needed
        self.budget = budget


class CoverageError(WFFDError, ValueError):
    """Output grid does not capture enough probability mass."""


class SearchExhaustedError(WFFDError, RuntimeError):
    """A parameter search found no admissible value in its range."""


class ClaimViolation(WFFDError, ArithmeticError):
    """A computed quantity breaks an inequality the construction guarantees."""


class ConfigurationError(WFFDError, ValueError):
    """A sweep or suite was configured with nothing it can evaluate."""
