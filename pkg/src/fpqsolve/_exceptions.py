"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: malformed grid, config, or mismatched shapes."""


class ConfigError(ValidationError):
    """Experiment configuration failed validation.

    ``field`` names the offending config key (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericalError(ArithmeticError):
    """A numerical precondition or post-condition was violated."""


class InvalidGeneratorError(NumericalError):
    """The generator does not have the structure a solver requires."""


class StepSizeError(NumericalError):
    """The time step is too large for the requested construction."""


class PostSelectionError(NumericalError):
    """A post-selected branch has (numerically) vanishing probability."""


class MeshBoundWarning(UserWarning):
    """Finite-difference generator has negative off-diagonal entries."""


class AliasingWarning(UserWarning):
    """Recovered Schrodingerised distribution carries significant negative mass."""
