"""Small text helpers shared by QA generation, filtering, and rewards."""
from __future__ import annotations

import json
import re

_WS_RE = re.compile(r"\s+")
_DECODER = json.JSONDecoder()


def normalize_text(text: str) -> str:
    """Case-fold and collapse whitespace for tolerant string comparison."""
    return _WS_RE.sub(" ", text.casefold()).strip()


def contains_normalized(haystack: str, needle: str) -> bool:
    return normalize_text(needle) in normalize_text(haystack)


def find_last_json_object(text: str) -> str | None:
    """Return the last well-formed JSON object substring, if any.

    Scans left to right; objects nested inside an already-matched object are
    not considered separately, so the outermost final object wins.
    """
    last: str | None = None
    i = text.find("{")
    while i != -1:
        try:
            obj, consumed = _DECODER.raw_decode(text[i:])
        except json.JSONDecodeError:
            i = text.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            last = text[i:i + consumed]
            i = text.find("{", i + consumed)
        else:
            i = text.find("{", i + 1)
    return last
