"""Exception hierarchy shared by the library and the command-line front end."""


class NetrateError(Exception):
    """Base class for all errors raised by netrate."""

    #: exit code used by the CLI when this error escapes a command
    exit_code = 2

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class InputError(NetrateError):
    """Malformed, missing or inconsistent input data."""


class ParseError(InputError):
    """A tabular source could not be parsed.

    Parameters
    ----------
    message : str
        Human readable description.
    row : int, optional
        1-based data row number (header excluded) where parsing failed.
    """

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)

    def to_dict(self):
        d = super().to_dict()
        d["row"] = self.row
        return d


class ValidationError(InputError):
    """Data parsed but violates an invariant of the data model."""


class ConfigError(InputError):
    """Invalid simulation or run configuration."""


class NumericalError(NetrateError):
    """Numerical failure during estimation."""

    exit_code = 3


class CovariateOverflowError(NumericalError):
    """Linear predictor too large to exponentiate safely."""


class SeparationError(NumericalError):
    """Monotone pseudo-likelihood: the estimating equation has no finite root."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is (numerically) singular.

    Parameters
    ----------
    message : str
        Description.
    directions : ndarray, optional
        Unit vectors spanning the (near) null space.
    """

    def __init__(self, message, directions=None):
        self.directions = directions
        super().__init__(message)

    def to_dict(self):
        d = super().to_dict()
        if self.directions is not None:
            d["directions"] = [list(map(float, v)) for v in self.directions]
        return d


class ReplicateFailureError(NumericalError):
    """Too many jackknife or Monte Carlo replicates failed."""

    def __init__(self, message, partial=None):
        self.partial = partial
        super().__init__(message)


class McFailureError(ReplicateFailureError):
    exit_code = 4
