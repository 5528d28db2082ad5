"""Pulling structured values out of free-form model replies."""

from __future__ import annotations

import ast
import json
import re
from typing import Any

from .errors import NoJsonFoundError

_QUOTED = re.compile(r"\"((?:[^\"\\]|\\.)*)\"|'((?:[^'\\]|\\.)*)'", re.DOTALL)
_OPENERS = {"{": "}", "[": "]"}


def _match_bracket(text: str, start: int, quotes: str = "\"") -> int | None:
    """Index of the bracket closing ``text[start]``, skipping quoted spans."""
    stack = [_OPENERS[text[start]]]
    quote = None
    i = start + 1
    while i < len(text):
        c = text[i]
        if quote:
            if c == "\\":
                i += 2
                continue
            if c == quote:
                quote = None
        elif c in quotes:
            quote = c
        elif c in _OPENERS:
            stack.append(_OPENERS[c])
        elif c in "}]":
            if c != stack[-1]:
                return None
            stack.pop()
            if not stack:
                return i
        i += 1
    return None


def extract_first_json(text: str) -> Any:
    """Return the first balanced ``{...}`` / ``[...]`` region that parses as JSON."""
    for i, c in enumerate(text):
        if c not in _OPENERS:
            continue
        end = _match_bracket(text, i)
        if end is None:
            continue
        try:
            return json.loads(text[i : end + 1])
        except json.JSONDecodeError:
            continue
    raise NoJsonFoundError("no parseable JSON object or array in reply")


def _binding_start(text: str, name: str | None) -> int | None:
    if name is None:
        i = text.find("[")
        return None if i < 0 else i
    m = re.search(rf"{re.escape(name)}\s*=\s*\[", text)
    return None if m is None else m.end() - 1


def parse_list_literal(text: str, name: str | None = None) -> list[str]:
    """Strings from the first list literal in ``text``.

    With ``name`` the list must be bound as ``name = [...]``. Returns ``[]``
    when no list is present.
    """
    start = _binding_start(text, name)
    if start is None:
        return []
    end = _match_bracket(text, start, quotes="\"'")
    literal = text[start : end + 1] if end is not None else text[start:]
    try:
        value = ast.literal_eval(literal)
        if isinstance(value, (list, tuple)):
            return [str(v).strip() for v in value if isinstance(v, (str, int, float)) and str(v).strip()]
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        pass
    out = []
    for m in _QUOTED.finditer(literal):
        item = (m.group(1) if m.group(1) is not None else m.group(2)).strip()
        if item:
            out.append(item)
    return out


def extract_bracketed(text: str, name: str | None = None) -> str:
    """Raw text inside ``name = [ ... ]`` (or the first ``[...]``), unquoted.

    Model prose often breaks quoting, so the closing bracket is the last ``]``
    before the next ``identifier =`` binding or the end of the reply.
    """
    start = _binding_start(text, name)
    if start is None:
        return ""
    tail = text[start + 1 :]
    nxt = re.search(r"\n\s*[A-Za-z_][A-Za-z0-9_]*\s*=", tail)
    region = tail[: nxt.start()] if nxt else tail
    close = region.rfind("]")
    if close >= 0:
        region = region[:close]
    inner = region.strip()
    if len(inner) >= 2 and inner[0] == inner[-1] and inner[0] in "\"'":
        inner = inner[1:-1].strip()
    return inner


def extract_after(text: str, marker: str) -> str:
    """Text following the first occurrence of ``marker`` (whole text if absent)."""
    i = text.find(marker)
    return text if i < 0 else text[i + len(marker) :]
