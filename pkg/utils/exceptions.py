"""Exception hierarchy shared by every package"""


class KnockoffSelectorError(Exception):
    """Base class for all errors raised by this project"""

    exit_code = 1


class ConfigError(KnockoffSelectorError, ValueError):
    """Invalid configuration value or combination"""

    exit_code = 2


class DataError(KnockoffSelectorError, ValueError):
    """Malformed, missing or non-finite input data"""

    exit_code = 3


class ShapeError(DataError):
    """Array dimensions do not agree"""


class NumericError(KnockoffSelectorError, ArithmeticError):
    """Training or estimation produced non-finite values"""

    exit_code = 4
