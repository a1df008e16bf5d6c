"""Exception types shared across the toolkit.

Categories map onto the CLI exit codes: FormatError (and plain I/O errors)
signal a bad or truncated container file, everything else under FpqtError is
a domain failure (bad shapes, bad parameters, numerical breakdown).
"""


class FpqtError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(FpqtError):
    """Dimension mismatch; the message names both offending shapes."""


class NumericalError(FpqtError):
    """Numerical failure: non-finite data, non-positive-definite matrix."""


class FormatError(FpqtError):
    """Malformed container file. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset
