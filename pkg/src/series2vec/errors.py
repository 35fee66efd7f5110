"""Exception types shared across the package."""


class Series2VecError(Exception):
    """Base class for all package errors."""


class DomainError(Series2VecError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class DimensionError(DomainError):
    """Array shapes are incompatible."""


class ContractError(Series2VecError, RuntimeError):
    """An operation was invoked in a state its contract forbids."""


class ParseError(DomainError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, row=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.path = path
        self.row = row
        self.column = column


class UnsupportedFormatError(DomainError):
    """The input is well formed but uses a feature this package does not handle."""


class ConfigError(DomainError):
    """A configuration field failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
