"""Exception hierarchy shared across the engine.

Exit-code contract for the CLI: usage errors map to 1, DataError to 2,
NumericError to 3.
"""


class HazardError(Exception):
    """Base class for all engine errors."""


class DataError(HazardError):
    """Invalid cohort, file, or configuration data.

    ``code`` is a stable machine-readable identifier (e.g. "negative_time",
    "dimension_mismatch", "corrupt_header").
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class NumericError(HazardError):
    """Numeric failure: divergence, non-finite values, undefined metrics."""
