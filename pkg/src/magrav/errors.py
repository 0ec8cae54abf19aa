"""Exception types shared across the package."""


class MagravError(Exception):
    """Base class for package-specific failures."""


class CapabilityError(MagravError):
    """An operation was asked to exceed its desk-scale capability bounds."""


class NumericalError(MagravError):
    """An iterative solver failed to converge.

    Carries the final residual so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class GaugeError(MagravError):
    """A trajectory was supplied in the wrong time gauge for an operation."""


class ScenarioError(MagravError):
    """A scenario file failed to parse or validate.

    ``field`` names the offending key when validation failed; ``line`` and
    ``column`` locate parse errors.
    """

    def __init__(self, message, field=None, line=None, column=None):
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column
