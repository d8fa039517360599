"""Exception hierarchy. The CLI maps each class to a stable exit code."""


class EmgAlignError(Exception):
    exit_code = 1


class ArgumentError(EmgAlignError, ValueError):
    """Invalid argument or precondition violated by the caller."""

    exit_code = 1


class FormatError(EmgAlignError):
    """Malformed file: bad magic, version, header or row shape."""

    exit_code = 2


class DataError(EmgAlignError):
    """Well-formed input carrying invalid values (non-finite, missing subject)."""

    exit_code = 2


class NumericError(EmgAlignError, ArithmeticError):
    """Rank deficiency, non-positive-definite covariance, divergence."""

    exit_code = 3
