import functools
import logging
import time

from . import const as _const
from . import helpers as _h
from .state import global_state as _state
from .types import *


class LifestyleError(Exception):
    """The exception class for all pylifestyles errors.

    Example:
        >>> try:
        >>>     raise LifestyleError(_const.ERROR_CODE.INVALID_PARAMS, "K must be >= 1.")
        >>> except LifestyleError as e:
        >>>     print(e.error_code, e.description)


    """

    def __init__(self, error_code: _const.ERROR_CODE, description: str):
        """

        :param error_code: ERROR_CODE member describing the failure class
        :param description: error description
        """
        super().__init__(f"{error_code.name}: {description}")
        self.errno = self.error_code = error_code
        self.strerror = self.description = description


def _timed_func(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        timer = time.perf_counter_ns()
        result = f(*args, **kwargs)
        timer = time.perf_counter_ns() - timer
        wrapper._perf_timer = round(timer / 1e6, 3)
        return result

    return wrapper


def _logged_operation(participation=True):
    def decorator(f):
        @functools.wraps(f)
        def pylifestyles_wrapped_function(*args, **kwargs):
            if not participation:
                return f(*args, **kwargs)
            logger = _state.logger
            timed_func = None
            if logger and logger.level == logging.DEBUG:
                timed_func = _timed_func(f)
            use_func = timed_func or f
            try:
                result = use_func(*args, **kwargs)
            except Exception as e:
                if logger:
                    error_code = getattr(e, 'error_code', None)
                    logger.error(_h.LogJson('EXCEPTION', {
                        'type'          : 'exception',
                        'error_code'    : error_code.name if error_code is not None else None,
                        'exception'     : {
                            'type'   : type(e).__name__,
                            'message': str(e),
                        },
                        'call_signature': dict(function=f.__name__, args=_h.args_to_str(args, kwargs)),
                    }))
                raise
            if logger and logger.level == logging.DEBUG:
                log_dict = _h.LogJson(short_message_=f'Function Debugging: {f.__name__}',
                                      type='function_debugging')
                if hasattr(use_func, '_perf_timer'):
                    log_dict['latency_ms'] = use_func._perf_timer
                log_dict['call_signature'] = dict(function=f.__name__, args=_h.args_to_str(args, kwargs))
                logger.debug(log_dict)
            return result

        if participation:
            pylifestyles_wrapped_function.__dispatch = True
        return pylifestyles_wrapped_function

    return decorator


def flag(error_code: _const.ERROR_CODE, message: str, **details):
    """Report a soft condition. Raises when the session has raise_on_errors set, otherwise logs a warning.

    :param error_code: ERROR_CODE member used if the condition is raised.
    :param message: Short human readable message.
    :param details: Extra JSON fields for the log line.
    """
    if _state.raise_on_errors:
        raise LifestyleError(error_code, message)
    logger = _state.logger
    if logger:
        logger.warning(_h.LogJson(message, {'type': 'flag', 'error_code': error_code.name, **details}))


def log_info(message: str, type_: str, **details):
    logger = _state.logger
    if logger:
        logger.info(_h.LogJson(message, {'type': type_, **details}))


def require(condition: bool, error_code: _const.ERROR_CODE, description: str):
    if not condition:
        raise LifestyleError(error_code, description)
