"""Cell data types and their lexers.

Classification (`infer_cell_type`) runs the lexers in a fixed order and
returns the first match, so every input maps to exactly one type. Literal
validation (`lexeme_matches`) answers a different question — "is this text
acceptable under that datatype" — and is deliberately wider: integers are
valid decimal lexemes, and the bare-year date form is accepted even though
classification always resolves a bare year to integer first.
"""

from __future__ import annotations

import re
from datetime import datetime
from enum import Enum
from urllib.parse import urlsplit


class CellType(str, Enum):
    BOOLEAN = "boolean"
    INTEGER = "integer"
    DECIMAL = "decimal"
    DATE = "date"
    URL = "url"
    EMPTY = "empty"
    STRING = "string"

    def __str__(self) -> str:  # pragma: no cover - repr convenience
        return self.value


_BOOLEAN_WORDS = frozenset({"true", "false", "yes", "no"})
_INTEGER_RE = re.compile(r"[+-]?\d+\Z")
# integer part with a dot fraction, or scientific notation
_DECIMAL_RE = re.compile(r"[+-]?(?:\d+\.\d+(?:[eE][+-]?\d+)?|\d+(?:\.\d+)?[eE][+-]?\d+)\Z")
_YEAR_RE = re.compile(r"\d{4}\Z")
_FULL_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}\Z")


def _is_boolean(text: str) -> bool:
    return text.casefold() in _BOOLEAN_WORDS


def _is_integer(text: str) -> bool:
    return _INTEGER_RE.match(text) is not None


def _is_decimal(text: str) -> bool:
    return _DECIMAL_RE.match(text) is not None


def _is_full_date(text: str) -> bool:
    if _FULL_DATE_RE.match(text) is None:
        return False
    try:
        datetime.strptime(text, "%Y-%m-%d")
    except ValueError:
        return False
    return True


def _is_date(text: str) -> bool:
    return _is_full_date(text) or _YEAR_RE.match(text) is not None


def _is_url(text: str) -> bool:
    if any(ch.isspace() for ch in text):
        return False
    try:
        parts = urlsplit(text)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.netloc)


def infer_cell_type(text: str) -> CellType:
    """Classify ``text`` as the first matching type in the documented order.

    Order: empty, boolean, integer, decimal, date, url, string. Total: every
    input yields exactly one type; surrounding whitespace is ignored.
    """
    t = text.strip()
    if not t:
        return CellType.EMPTY
    if _is_boolean(t):
        return CellType.BOOLEAN
    if _is_integer(t):
        return CellType.INTEGER
    if _is_decimal(t):
        return CellType.DECIMAL
    if _is_full_date(t):
        return CellType.DATE
    if _is_url(t):
        return CellType.URL
    return CellType.STRING


def lexeme_matches(text: str, datatype: CellType) -> bool:
    """True when ``text`` is a valid lexeme under ``datatype``.

    Wider than classification: decimal accepts integer lexemes, date accepts
    the bare-year form, and string accepts every non-empty text.
    """
    t = text.strip()
    if datatype is CellType.EMPTY:
        return not t
    if not t:
        return False
    if datatype is CellType.BOOLEAN:
        return _is_boolean(t)
    if datatype is CellType.INTEGER:
        return _is_integer(t)
    if datatype is CellType.DECIMAL:
        return _is_integer(t) or _is_decimal(t)
    if datatype is CellType.DATE:
        return _is_date(t)
    if datatype is CellType.URL:
        return _is_url(t)
    return True  # string: universal fallback for non-empty text
