import logging
import sys
from pathlib import Path

from .helpers import LogJson
from .log import get_logger
from .state import global_state as _state
from .types import *


class session:
    def __init__(self, *,
                 logger: Union[logging.Logger, str, Path] = None,
                 raise_on_errors: bool = None,
                 n_jobs: int = None,
                 label: str = None,
                 ):
        """Context manager that scopes the package-wide behavior for a block of work using the python ``with``
        statement.

        :param logger: logging.Logger instance, or a path to a logfile. Setting the level to DEBUG will profile and
        log every logged operation.
        :param raise_on_errors: Raise LifestyleError on soft conditions (skipped rows, out-of-vocabulary documents,
        towers missing from the POI fixture) instead of logging a warning.
        :param n_jobs: Worker count for fold- and provider-level parallelism.
        :param label: Name recorded in the start/end log lines, eg. the CLI subcommand.
        :return: None
        """
        if isinstance(logger, (str, Path)):
            self._logger = get_logger(path_to_logfile=logger, loglevel=logging.INFO, time_utc=True)
        else:
            self._logger = logger
        self._raise_on_errors = raise_on_errors
        self._n_jobs = n_jobs
        self.label = label or 'session'

    def __enter__(self):
        self._state_on_enter = _state.get_state()
        _state.raise_on_errors = self.raise_on_errors
        _state.n_jobs = self.n_jobs
        _state.logger = logger = self._logger
        try:
            if logger:
                logger.info(LogJson(f'Session Start: {self.label}', {
                    'type'           : 'session_state',
                    'state'          : True,
                    'label'          : self.label,
                    'raise_on_errors': bool(self.raise_on_errors),
                    'n_jobs'         : self.n_jobs,
                }))
            return self
        except:
            self.__exit__(*sys.exc_info())
            raise

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.logger and exc_val:
            self.logger.critical(LogJson(f'UNCAUGHT EXCEPTION: {exc_val}', {
                'type'      : 'exception',
                'error_code': getattr(getattr(exc_val, 'error_code', None), 'name', None),
                'exception' : {
                    'type'   : exc_type.__name__,
                    'message': str(exc_val),
                }
            }))
        if self.logger:
            self.logger.info(LogJson(f'Session End: {self.label}', {
                'type' : 'session_state',
                'state': False,
                'label': self.label,
            }))
        _state.set_defaults(**self._state_on_enter)

    @property
    def logger(self) -> logging.Logger:
        return self._logger

    @logger.setter
    def logger(self, new_logger):
        self._logger = new_logger
        _state.logger = new_logger

    @property
    def raise_on_errors(self) -> bool:
        return bool(self._raise_on_errors)

    @raise_on_errors.setter
    def raise_on_errors(self, flag: bool):
        _state.raise_on_errors = flag
        self._raise_on_errors = flag

    @property
    def n_jobs(self) -> int:
        return self._n_jobs or 1

    @n_jobs.setter
    def n_jobs(self, n: int):
        _state.n_jobs = n
        self._n_jobs = n
