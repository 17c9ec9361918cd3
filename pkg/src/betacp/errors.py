"""Exception types shared across the package."""


class BetacpError(Exception):
    """Base class for package-specific failures."""


class DataError(BetacpError):
    """Malformed, inconsistent, or out-of-contract input data."""


class ModelFormatError(DataError):
    """A serialized factor model could not be decoded or validated."""


class UsageError(BetacpError):
    """Bad command-line arguments or configuration (CLI exit code 1)."""


class TrainingDiverged(BetacpError):
    """A multiplicative update produced a non-finite parameter.

    Carries the parameter group, the flat (row, column) position of the
    first offending element, and the numerator/denominator that produced
    it, so the failure is diagnosable instead of silently propagating NaN.
    """

    def __init__(self, group, index, numerator, denominator, message=None):
        self.group = group
        self.index = index
        self.numerator = numerator
        self.denominator = denominator
        super().__init__(
            message
            or f"non-finite update in group {group!r} at {index}: "
            f"numerator={numerator!r}, denominator={denominator!r}"
        )
