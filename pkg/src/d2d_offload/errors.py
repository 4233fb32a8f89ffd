"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or missing configuration input."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateInputError(DomainError):
    """Inputs make the requested quantity undefined (e.g. conditioning on a null event)."""


class DivergenceError(DomainError):
    """A required integral diverges for the given inputs (speed support touching zero)."""


class NumericError(RuntimeError):
    """A numerical routine failed to converge; the message carries diagnostics."""
