class ScancapError(Exception):
    """Base class for domain errors; `exit_code` is what the CLI returns."""

    exit_code = 1


class ConfigError(ScancapError):
    exit_code = 2


class ShapeError(ScancapError):
    exit_code = 2


class DataError(ScancapError):
    exit_code = 3


class InputError(ScancapError):
    exit_code = 3


class NumericRangeError(ScancapError):
    exit_code = 4


class UsageError(ScancapError):
    exit_code = 1
