"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: input problems (``ParseError``,
``ValidationError``, ``SchemaError``) exit with 2, everything numerical
exits with 3.
"""


class UwbLabError(Exception):
    """Base class for all package errors."""


class InputError(UwbLabError):
    """Malformed or invalid user input (config, CSV, arguments)."""


class NumericalError(UwbLabError):
    """A computation could not produce a trustworthy result."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(InputError, ValueError):
    pass


class SchemaError(InputError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class DegenerateGeometry(NumericalError, ValueError):
    pass


class InvalidTimestamps(NumericalError, ValueError):
    pass


class InconsistentDistances(NumericalError):
    pass


class AmbiguousPlacement(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class InsufficientRanges(NumericalError, ValueError):
    pass


class NoOverlap(NumericalError):
    pass


class EmptyInput(NumericalError, ValueError):
    pass


class TooFewValues(NumericalError, ValueError):
    pass
