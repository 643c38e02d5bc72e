"""Exception types shared across the package."""


class ExwarpError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(ExwarpError):
    """A spec, config, or argument failed validation.

    ``violations`` lists every offending key/field so callers can report
    them all at once instead of one per run.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionMismatchError(ExwarpError):
    """Two rasters that must share a shape do not."""


class DatasetFormatError(ExwarpError):
    """On-disk dataset is malformed (bad magic, missing file, bad version)."""


class ChecksumMismatchError(DatasetFormatError):
    """A dataset file does not match the checksum recorded in its manifest."""


class PoisonedNetworkError(ExwarpError):
    """A network parameter is NaN or infinite."""


class IllegalActionError(ExwarpError):
    """A policy returned an action that is not legal at the current node."""
