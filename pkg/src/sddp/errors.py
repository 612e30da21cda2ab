"""Exception hierarchy. The CLI maps each family onto an exit code."""


class SddpError(Exception):
    exit_code = 1


class ConfigError(SddpError, ValueError):
    exit_code = 1


class DataError(SddpError, ValueError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(DataError):
    pass


class DegenerateLossError(DataError):
    """All sample weights are zero, so the weighted loss is undefined."""


class NumericError(SddpError, ArithmeticError):
    exit_code = 3


class DegenerateSpectrumError(DataError):
    """Every eigenvalue is numerically zero; no factor count is defined."""
