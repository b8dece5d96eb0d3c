"""
Utils for seeding, file output, and cache directories

:author: Doug Skrypa
"""

import os
from contextlib import contextmanager
from getpass import getuser
from pathlib import Path
from tempfile import gettempdir, NamedTemporaryFile
from typing import Union, Iterator, TextIO, Sequence

import numpy as np

from .__version__ import __title__ as pkg_name

__all__ = ['SeedStream', 'make_rng', 'atomic_write', 'get_user_cache_dir', 'format_duration']
ON_WINDOWS = os.name == 'nt'


# region Random Number Generation


def make_rng(*seed_parts: int) -> np.random.Generator:
    """
    :param seed_parts: One or more non-negative ints; the same parts always produce the same stream
    :return: A PCG64-backed generator
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed_parts))))


class SeedStream:
    """
    Derives independent PCG64 generators from a single seed by splitting its :class:`numpy.random.SeedSequence`.
    The n-th generator produced by two streams with the same seed is always the same.
    """

    def __init__(self, seed: Union[int, Sequence[int]]):
        self.seed = seed
        self._sequence = np.random.SeedSequence(seed)

    def __repr__(self) -> str:
        return f'<{self.__class__.__name__}[seed={self.seed}, spawned={self._sequence.n_children_spawned}]>'

    def generator(self) -> np.random.Generator:
        child = self._sequence.spawn(1)[0]
        return np.random.Generator(np.random.PCG64(child))

    def child_seed(self) -> int:
        """A deterministic integer seed for components that take plain ints (e.g., nested training runs)"""
        return int(self._sequence.spawn(1)[0].generate_state(1, np.uint64)[0])


# endregion


# region File Output


@contextmanager
def atomic_write(path: Union[str, Path], newline: str = '\n') -> Iterator[TextIO]:
    """
    Write to a temp file in the destination directory, and move it into place only if the block completes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = NamedTemporaryFile(
        'w', encoding='utf-8', newline=newline, dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp', delete=False
    )
    try:
        with tmp as f:
            yield f
        os.replace(tmp.name, path)
    except BaseException:
        try:
            os.unlink(tmp.name)
        except OSError:
            pass
        raise


# endregion


# region Cache Dir


def get_user_cache_dir(*sub_dirs: str) -> Path:
    """
    A per-user directory for cached artifacts such as pretrained experts, created on first use.  Lives under the
    temp dir: ``<tmp>/<user>/rpcl/...`` on Linux, or ``~/AppData/Local/Temp/rpcl/...`` on Windows.
    """
    root = Path(gettempdir())
    if not (ON_WINDOWS and root.as_posix().endswith('AppData/Local/Temp')):
        root = root.joinpath(getuser())
    path = root.joinpath(pkg_name, *sub_dirs)
    path.mkdir(parents=True, exist_ok=True)
    return path


# endregion


def format_duration(seconds: float) -> str:
    """:return: The duration as ``[-][Dd]HH:MM:SS.ss``"""
    sign = '-' if seconds < 0 else ''
    minutes, secs = divmod(abs(seconds), 60)
    hours, minutes = divmod(int(minutes), 60)
    days, hours = divmod(hours, 24)
    day_str = f'{days}d' if days else ''
    return f'{sign}{day_str}{hours:02d}:{minutes:02d}:{secs:05.2f}'
