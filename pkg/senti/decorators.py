"""This module contains decorators for the senti package."""

import logging
import os
import time
from functools import wraps

from senti.exceptions import StageFailed


def pipeline_stage(name):
    """Log the start and end of a pipeline stage and name it in any failure.

    Args:
        name: The stage name reported in log lines and in StageFailed.

    Returns:
        The decorator.
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            level = logging.getLevelName(os.environ.get("SENTI_STAGE_LOG_LEVEL", "INFO").upper())
            if not isinstance(level, int):
                level = logging.INFO
            logging.log(level, f"stage {name} started")
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except StageFailed:
                raise
            except Exception as exc:
                logging.error(f"stage {name} failed: {exc}")
                raise StageFailed(name, str(exc)) from exc
            logging.log(level, f"stage {name} finished in {time.perf_counter() - started:.2f}s")
            return result

        return wrapper

    return decorator
