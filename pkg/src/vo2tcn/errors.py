"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class Vo2TcnError(Exception):
    exit_code = 1


class ConfigError(Vo2TcnError, ValueError):
    """Invalid hyperparameters, malformed config or grid files."""

    exit_code = 2


class DataError(Vo2TcnError, ValueError):
    """Missing, malformed or incompatible recordings and model files."""

    exit_code = 3


class NumericError(Vo2TcnError, ArithmeticError):
    """NaN/Inf produced or consumed by a numerical routine."""

    exit_code = 4


class ShapeError(Vo2TcnError, ValueError):
    exit_code = 4
