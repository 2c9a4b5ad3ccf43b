"""Exception hierarchy shared by all downwash modules.

The CLI maps these onto stable exit codes: ConfigError -> 2,
DataError -> 3, DomainError / ValidityError -> 4.
"""


class DownwashError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DownwashError):
    """Invalid run configuration (schema violation, unknown key, bad flag)."""


class DataError(DownwashError):
    """Malformed or inconsistent input data (files, shapes, duplicates)."""


class StitchError(DataError):
    """Adjacent field sections cannot be stitched."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DomainError(DownwashError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ValidityError(DownwashError):
    """Request outside the validity region of a model or measurement."""


class RangeError(ValidityError):
    """Coordinate outside the covered range of a dataset."""


class NotMergedError(ValidityError):
    """Merge condition never satisfied on the analyzed field."""

    def __init__(self, message, min_gap=None):
        super().__init__(message)
        self.min_gap = min_gap


class DegenerateEnvelopeError(ValidityError):
    """Contour threshold never crossed on a load surface."""


class FitError(ValidityError):
    """Regression problem is rank deficient or otherwise unsolvable."""


class FitRangeError(ValidityError):
    """Not enough far-field stations inside the configured fit range."""


class AliasingError(ValidityError):
    """Sample rate too low for the requested oscillation frequency."""

    def __init__(self, message, suggested_rate=None):
        super().__init__(message)
        self.suggested_rate = suggested_rate


class BinningError(ValidityError):
    """Phase binning produced an empty bin."""
