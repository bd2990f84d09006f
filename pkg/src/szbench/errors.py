"""
Exceptions raised by SzBench. Everything derives from ``SzBenchError`` so
that callers (and the command line) can tell toolkit failures apart from
programming errors.
"""
import typing
from pathlib import Path


class SzBenchError(Exception):
    """
    Base class of all errors raised by this package.
    """


class ContractError(SzBenchError, ValueError):
    """
    A precondition of an operation was violated by its caller.
    """


class ConfigError(SzBenchError):
    """
    The configuration file or a configuration value is invalid.
    """


class EdfParseError(SzBenchError):
    """
    An EDF file could not be decoded. ``offset`` is the byte position
    at which decoding failed.
    """

    def __init__(self, msg: str, path: typing.Optional[Path] = None, offset: int = 0):
        self.path = path
        self.offset = offset
        location = f"{path}" if path is not None else "<edf>"
        super().__init__(f"{location} @ byte {offset}: {msg}")


class AnnotationParseError(SzBenchError):
    """
    An events TSV could not be parsed. ``line`` is 1-based, 0 when the
    problem is not tied to a line.
    """

    def __init__(self, msg: str, path: typing.Optional[Path] = None, line: int = 0):
        self.path = path
        self.line = line
        location = f"{path}" if path is not None else "<tsv>"
        if line:
            location += f":{line}"
        super().__init__(f"{location}: {msg}")


class DatasetIndexError(SzBenchError):
    """
    The dataset layout is inconsistent, e.g. a recording appears twice.
    """


class StandardizationError(SzBenchError):
    """
    A recording cannot be converted to the canonical channel set.
    """

    def __init__(self, msg: str, missing: typing.Sequence[str] = ()):
        self.missing = list(missing)
        super().__init__(msg)
