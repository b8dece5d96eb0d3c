"""
Re-executes scripts in ``bin/`` with the project's ``venv`` / ``.venv`` interpreter when one exists and no virtual
environment is active yet.

:author: Doug Skrypa
"""

import os
import sys
from pathlib import Path
from subprocess import call
from typing import Optional

VENV_NAMES = ('venv', '.venv')


def find_venv() -> Optional[Path]:
    proj_root = Path(__file__).resolve().parents[1]
    return next((path for name in VENV_NAMES if (path := proj_root.joinpath(name)).exists()), None)


def maybe_activate_venv():
    if os.environ.get('VIRTUAL_ENV') or (venv_path := find_venv()) is None:
        return

    on_windows = os.name == 'nt'
    bin_path = venv_path.joinpath('Scripts' if on_windows else 'bin')
    os.environ.update(
        PYTHONHOME='',
        VIRTUAL_ENV=venv_path.as_posix(),
        PATH=os.pathsep.join((bin_path.as_posix(), os.environ['PATH'])),
    )
    cmd = [bin_path.joinpath('python.exe' if on_windows else 'python').as_posix()] + sys.argv
    sys.exit(call(cmd, env=os.environ))


maybe_activate_venv()
