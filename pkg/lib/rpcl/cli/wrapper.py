"""
:author: Doug Skrypa
"""

import logging
import sys
import traceback
from functools import wraps
from typing import Callable, Optional

from ..exceptions import ConfigError
from .argparser import USAGE_ERROR

__all__ = ['wrap_main', 'RUNTIME_ERROR', 'INTERRUPTED']
log = logging.getLogger(__name__)

RUNTIME_ERROR = 2
INTERRUPTED = 130


def wrap_main(main: Callable[..., Optional[int]]) -> Callable[..., int]:
    """
    Standardize exit codes and error reporting for a command handler.

    A handler that returns None succeeded (0); config errors are usage errors (1); any other exception is a runtime
    failure (2).  KeyboardInterrupt exits with 130 after a newline, and a closed pipe on stdout is not an error.
    Stack traces are logged below INFO so they are only visible with ``--verbose``.

    :param main: A command handler
    :return: The handler, wrapped so that it always returns an exit code
    """

    @wraps(main)
    def run_main(*args, **kwargs) -> int:
        try:
            return main(*args, **kwargs) or 0
        except KeyboardInterrupt:
            print()
            return INTERRUPTED
        except BrokenPipeError:
            return 0
        except ConfigError as e:
            _log_error(e)
            return USAGE_ERROR
        except Exception as e:  # noqa
            _log_error(e)
            return RUNTIME_ERROR

    return run_main


def _log_error(error: Exception):
    if _logger_has_non_null_handlers(log):
        log.log(19, traceback.format_exc())
        log.error(error, extra={'color': 'red'})
    else:  # Logging was not configured
        print(traceback.format_exc(), file=sys.stderr)


def _logger_has_non_null_handlers(logger: logging.Logger) -> bool:
    # Like logging.Logger.hasHandlers(), but ignores NullHandlers
    current = logger
    while current:
        if current.handlers and not all(isinstance(h, logging.NullHandler) for h in current.handlers):
            return True
        if not current.propagate:
            break
        current = current.parent
    return False
