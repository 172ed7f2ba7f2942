import logging


class _GlobalState:
    """
    Borg shared state class
    """
    __shared_state = {}

    def __init__(self):
        self.__dict__ = self.__shared_state
        if 'n_jobs' not in self.__shared_state:
            self.set_defaults()

    def set_defaults(self,
                     raise_on_errors=None,
                     n_jobs=None,
                     logger=None,
                     ):
        """Initializes the instance variables and provides a method for setting the state with a single call.

        :param raise_on_errors: Raise a LifestyleError on soft conditions (skipped rows, OOV documents, ...)
        instead of logging a warning.
        :param n_jobs: Worker count for fold- and provider-level parallelism.
        :param logger: logging.Logger used by every logged operation.
        :return:
        """
        self.raise_on_errors = raise_on_errors or False
        self.n_jobs = n_jobs or 1
        self._logger = logger

    def get_state(self):
        state = dict(
            raise_on_errors=self.raise_on_errors,
            n_jobs=self.n_jobs,
            logger=self.logger,
        )
        return state

    @property
    def logger(self) -> logging.Logger:
        return self._logger

    @logger.setter
    def logger(self, new_logger: logging.Logger):
        self._logger = new_logger


global_state: _GlobalState = _GlobalState()
