"""
sllg_fem.utils module.
"""
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional

from sllg_fem.constants import APP_ID

LOG_FORMAT = "%(asctime)s - %(relativepath)s:%(lineno)s - %(name)s:%(funcName)s - %(levelname)s - %(message)s"


class PackagePathFilter(logging.Filter):  # pylint: disable=too-few-public-methods
    """
    Logging filter to add relative path to log messages.

    Borrowed from: https://stackoverflow.com/a/52582536/576138
    """

    def filter(self, record):
        pathname = record.pathname
        record.relativepath = None
        abs_sys_paths = map(os.path.abspath, sys.path)
        for path in sorted(abs_sys_paths, key=len, reverse=True):  # longer paths first
            if not path.endswith(os.sep):
                path += os.sep
            if pathname.startswith(path):
                record.relativepath = os.path.relpath(pathname, path)
                break
        return True


def configure_logging(log_level: Optional[str], log_dir: Optional[str] = None) -> None:
    """
    Configures the package logger with a stderr handler and, if log_dir is set, a rotating file handler.
    """
    formatter = logging.Formatter(LOG_FORMAT)
    package_logger = logging.getLogger(APP_ID)
    package_logger.setLevel(logging.getLevelName(log_level) if log_level else logging.WARNING)

    # Handlers from a previous invocation in the same process (tests) are replaced
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()

    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.addFilter(PackagePathFilter())
    stderr_handler.setFormatter(formatter)
    package_logger.addHandler(stderr_handler)

    if log_dir:
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)
        rotating_file_handler = RotatingFileHandler(filename=os.path.join(log_dir, f"{APP_ID}.log"), maxBytes=5 * 1024 * 1024, backupCount=10)  # 10 files of 5 MB
        rotating_file_handler.addFilter(PackagePathFilter())
        rotating_file_handler.setFormatter(formatter)
        package_logger.addHandler(rotating_file_handler)
