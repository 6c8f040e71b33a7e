"""
A module containing the exception classes raised by the library.
"""

from __future__ import annotations

from ._helper import export


@export
class NumericalError(RuntimeError):
    """
    Raised when an iterate or an intermediate result stops being finite.

    Group:
        errors
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@export
class DivergenceError(NumericalError):
    """
    Raised when a fixed-point iteration grows instead of converging.

    Group:
        errors
    """

    def __init__(self, message: str, iteration: int):
        super().__init__(message, step=iteration)
        self.iteration = iteration


@export
class TrainingDivergedError(NumericalError):
    """
    Raised when the score-matching loss becomes non-finite during training.

    Group:
        errors
    """


@export
class ConfigError(ValueError):
    """
    Raised when a run configuration does not match the schema.

    Group:
        errors
    """


@export
class ArrayFormatError(ValueError):
    """
    Raised when an array interchange file pair is missing a field, has the wrong size or an unsupported dtype.

    Group:
        errors
    """

    def __init__(self, path, check: str):
        super().__init__(f"{path}: {check}")
        self.path = path
        self.check = check
