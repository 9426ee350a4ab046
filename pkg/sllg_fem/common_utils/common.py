"""
sllg_fem.common_utils.common module.
"""
import hashlib
import locale
import os
from datetime import datetime
from typing import Iterable, Union

from babel.core import UnknownLocaleError
from babel.numbers import format_decimal
from dateutil.tz import tzlocal

from sllg_fem.constants import FLOAT_FORMAT


def coalesce(*arg):
    """
    Returns the first non-None value from the arguments.
    """
    return next((a for a in arg if a is not None), None)


def get_simple_default_locale() -> str:
    """
    Returns the first part of the default locale.
    """
    lang, _enc = locale.getlocale()
    if lang:
        return lang
    return "en_US"


def get_local_datetime() -> datetime:
    """
    Returns a datetime object with the current system tzinfo set.
    """
    return datetime.now().replace(tzinfo=tzlocal())


def format_float(value: float) -> str:
    """
    Formats a float with 17 significant digits, so it round-trips exactly.
    """
    return format(float(value), FLOAT_FORMAT)


def format_floats(values: Iterable[float], separator: str = " ") -> str:
    """
    Formats a sequence of floats with format_float, joined by separator.
    """
    return separator.join(format_float(x) for x in values)


def git_blob_hash(data: Union[bytes, str]) -> str:
    """
    Returns the hash git would assign to a blob with this content.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    header = f"blob {len(data)}\0".encode("ascii")
    return hashlib.sha1(header + data).hexdigest()


def ensure_dir(path: str) -> str:
    """
    Creates the directory if it doesn't exist yet, and returns it.
    """
    if not os.path.exists(path):
        os.makedirs(path)
    return path


def format_number(value: float) -> str:
    """
    Formats a number for humans with the default locale, falling back to en_US when babel doesn't know it.
    """
    try:
        return format_decimal(value, format="#,##0.##########", locale=get_simple_default_locale())
    except (UnknownLocaleError, ValueError):
        return format_decimal(value, format="#,##0.##########", locale="en_US")
