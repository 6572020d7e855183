"""Exception types raised across the package."""


class SensingError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(SensingError, ValueError):
    """Target coincides with an access point (unit vectors undefined)."""


class InvalidRoot(SensingError, ValueError):
    pass


class ShapeMismatch(SensingError, ValueError):
    pass


class NonPositiveInput(SensingError, ValueError):
    pass


class InvalidCounts(SensingError, ValueError):
    pass


class EmptyGrid(SensingError, ValueError):
    pass


class InitOutsidePrior(SensingError, ValueError):
    pass


class BoundsTooNarrow(SensingError, ValueError):
    """A 1D matched-filter peak landed on the edge of its search interval."""


class SingularNormalEquations(SensingError, ArithmeticError):
    pass


class Diverged(SensingError, ArithmeticError):
    pass


class SingularFisher(SensingError, ArithmeticError):
    pass


class AllZeroWeights(SensingError, ValueError):
    pass


class EmptyList(SensingError, ValueError):
    pass


class ConfigError(SensingError):
    """Base for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
