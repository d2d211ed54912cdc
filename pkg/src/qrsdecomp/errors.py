"""Exception hierarchy shared across the package."""


class QrsError(Exception):
    """Base class for all package errors."""


class SchemaError(QrsError):
    """Input file does not match the declared column schema."""


class ParseError(QrsError):
    """A cell could not be parsed; carries the offending row index."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptyDataError(QrsError):
    """Input file contains no data rows."""


class DomainError(QrsError):
    """Argument outside the mathematical domain of an operation."""


class CollinearityError(QrsError):
    """Design matrix is rank deficient; carries the implicated columns."""

    def __init__(self, message, columns=None):
        super().__init__(message)
        self.columns = list(columns) if columns is not None else []


class SeparationError(QrsError):
    """Perfect separation: the binary-choice likelihood is unbounded."""


class ConvergenceError(QrsError):
    """Iterative fit did not converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConfigError(QrsError):
    """Invalid or inconsistent run configuration."""


class StalenessError(QrsError):
    """Fit artifacts do not match the current configuration hash."""


class InsufficientDrawsError(QrsError):
    """Too few bootstrap draws for the requested summary."""


class DegenerateTestError(QrsError):
    """All variance estimates are zero; the test statistic is undefined."""


class BootstrapFailureError(QrsError):
    """Too many bootstrap replications failed to estimate."""
