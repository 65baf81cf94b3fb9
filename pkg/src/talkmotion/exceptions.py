"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: data problems (``DataError`` and
subclasses) exit with 2, numeric failures with 3.
"""


class TalkMotionError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TalkMotionError, ValueError):
    """Invalid hyperparameter or configuration value."""


class DimensionError(TalkMotionError, ValueError):
    """Array shapes do not agree."""


class NumericError(TalkMotionError, ArithmeticError):
    """A computation produced a non-finite value."""


class DataError(TalkMotionError, ValueError):
    """Malformed or inconsistent input data."""


class FormatError(DataError):
    """A file does not follow its declared layout (header, columns)."""


class ParseError(DataError):
    """A cell could not be parsed; carries the row and column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class StructureError(DataError):
    """Structurally invalid content, e.g. gaps in frame indices."""


class UnsupportedFormatError(DataError):
    """Audio encoding outside the supported PCM16 / mono / 16 kHz profile."""


class AlignmentError(DataError):
    """Audio and motion lengths disagree."""
