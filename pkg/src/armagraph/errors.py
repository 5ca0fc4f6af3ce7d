"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes, so new error conditions should
subclass one of the existing kinds rather than raising bare exceptions.
"""


class ArmagraphError(Exception):
    """Base class for all package errors."""


class ConfigError(ArmagraphError):
    """Invalid model/filter/suite configuration."""


class DataError(ArmagraphError):
    """Dataset cannot be loaded or is inconsistent."""


class SchemaError(DataError):
    """A canonical dataset file violates the documented schema."""


class ChecksumError(DataError):
    """A canonical dataset file does not match its recorded SHA-256."""


class DanglingNodeError(DataError):
    """An edge or mask references a node outside 0..n_nodes-1."""


class NumericError(ArmagraphError):
    """A numeric precondition failed (pole, instability, singular system)."""


class ConvergenceError(NumericError):
    """An iteration hit its step cap; carries the last iterate."""

    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class DivergenceError(ArmagraphError):
    """Training produced a non-finite loss; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ResourceCapError(ArmagraphError):
    """A size cap (dense solve / eigensolver) was exceeded."""
