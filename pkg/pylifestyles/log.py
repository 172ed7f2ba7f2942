import logging
import sys
import time
from pathlib import Path

from . import const as _const
from .core import LifestyleError
from .types import *

LOG_FORMAT = "%(asctime)s\t%(levelname)s\t%(message)s"
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class _UTCFormatter(logging.Formatter):
    converter = time.gmtime


def _level_name(loglevel: Union[int, str]) -> str:
    name = loglevel.upper() if isinstance(loglevel, str) else logging.getLevelName(loglevel)
    if name not in LOG_LEVELS:
        raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, f"Unknown log level {loglevel!r}")
    return name


def _handler(file: Optional[Path]) -> logging.Handler:
    if file is None:
        return logging.StreamHandler(sys.stderr)
    file.parent.mkdir(parents=True, exist_ok=True)
    return logging.FileHandler(file)


def get_logger(path_to_logfile: Optional[Union[Path, str]],
               loglevel: Union[int, str] = logging.INFO,
               time_utc: bool = True
               ) -> logging.Logger:
    """Get the default logging.Logger instance for pylifestyles

    One logger per (file name, level, clock); asking again returns the cached instance.

    :param path_to_logfile: Path to the logfile destination, created with its parent directories. None writes to
    stderr.
    :param loglevel: A logging level, eg. logging.INFO, or its name as given on the command line, eg. 'DEBUG'.
    :param time_utc: When True this will output the log lines in UTC time and Local time when False
    :return:
    """
    cache = get_logger.__dict__.setdefault('cache', {})
    file = Path(path_to_logfile) if path_to_logfile is not None else None
    level = _level_name(loglevel)
    name = '.'.join(['pylifestyles', file.name if file else 'stderr', level,
                     'time_utc' if time_utc else 'time_local'])
    if name not in cache:
        logger = logging.getLogger(name)
        logger.setLevel(level)
        logger.propagate = False
        handler = _handler(file)
        handler.setLevel(logging.DEBUG)
        handler.setFormatter((_UTCFormatter if time_utc else logging.Formatter)(LOG_FORMAT))
        logger.addHandler(handler)
        cache[name] = logger
    return cache[name]
