"""
Exceptions for reward and policy concurrent learning

:author: Doug Skrypa
"""

from pathlib import Path
from typing import TYPE_CHECKING, Union, Optional

if TYPE_CHECKING:
    from .core import TrainLog

__all__ = [
    'RpclException',
    'ConfigError',
    'DimensionMismatch',
    'InvalidAction',
    'EmptyTrajectoryError',
    'EnvMismatchError',
    'NonFiniteGradientError',
    'DemoParseError',
    'DemonstratorError',
    'EmptyInventoryError',
    'TrainingAborted',
    'MissingActions',
]


class RpclException(Exception):
    """Base exception"""


class ConfigError(RpclException):
    def __init__(self, key: str, message: str, path: Union[str, Path, None] = None):
        self.key = key
        self.message = message
        self.path = path

    def __str__(self) -> str:
        location = f' in {Path(self.path).as_posix()}' if self.path else ''
        return f'{self.__class__.__name__}: invalid {self.key!r} - {self.message}{location}'


class DimensionMismatch(RpclException):
    def __init__(self, what: str, expected: int, found: int):
        self.what = what
        self.expected = expected
        self.found = found

    def __str__(self) -> str:
        return f'Dimension mismatch for {self.what}: expected={self.expected} found={self.found}'


class InvalidAction(RpclException):
    pass


class EmptyTrajectoryError(RpclException):
    pass


class EnvMismatchError(RpclException):
    pass


class NonFiniteGradientError(RpclException):
    def __init__(self, what: str, bad_count: int, size: int):
        self.what = what
        self.bad_count = bad_count
        self.size = size

    def __str__(self) -> str:
        return f'Non-finite {self.what}: {self.bad_count} of {self.size} entries are NaN or infinite'


class MissingActions(RpclException):
    pass


class DemoParseError(RpclException):
    def __init__(self, path: Union[str, Path], line: int, message: str):
        self.path = path
        self.line = line
        self.message = message

    def __str__(self) -> str:
        return f'Unable to parse demonstrations from {Path(self.path).as_posix()} line {self.line}: {self.message}'


class DemonstratorError(RpclException):
    pass


class EmptyInventoryError(RpclException):
    pass


class TrainingAborted(RpclException):
    def __init__(self, message: str, log: Optional['TrainLog'] = None):
        super().__init__(message)
        self.message = message
        self.log = log

    def __str__(self) -> str:
        episodes = len(self.log) if self.log is not None else 0
        return f'Training aborted after {episodes} completed episodes: {self.message}'
