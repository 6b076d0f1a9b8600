"""A forgiving JSON reader for hand-written workflow documents.

Accepts everything ``json.loads`` accepts, plus the slips that show up in
hand-edited documents:

* trailing commas in objects and arrays,
* a missing comma between two members,
* an object member with no key (``{"step5[image]"}``).

Objects are returned as :class:`Obj`, an ordered list of ``(key, value)``
pairs in which a key-less member has ``key=None``.
"""

from __future__ import annotations

import json.decoder
import math
import re
from typing import Any

MAX_DEPTH = 256

_NUMBER = re.compile(r"-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][+-]?\d+)?")
_WS = re.compile(r"[ \t\n\r]*")


class LenientJSONError(ValueError):
    def __init__(self, msg: str, pos: int):
        super().__init__(f"{msg} at offset {pos}")
        self.pos = pos


class Obj(list):
    """Ordered ``(key, value)`` members of a JSON object."""

    def get(self, key: str, default: Any = None) -> Any:
        for k, v in reversed(self):
            if k == key:
                return v
        return default

    def keys(self) -> list[str | None]:
        return [k for k, _ in self]

    def __contains__(self, key: object) -> bool:  # type: ignore[override]
        return any(k == key for k, _ in self)


class _Parser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def ws(self) -> None:
        self.i = _WS.match(self.s, self.i).end()

    def peek(self) -> str:
        self.ws()
        return self.s[self.i] if self.i < len(self.s) else ""

    def fail(self, msg: str) -> LenientJSONError:
        return LenientJSONError(msg, self.i)

    def value(self, depth: int) -> Any:
        if depth > MAX_DEPTH:
            raise self.fail("nesting too deep")
        c = self.peek()
        if c == "{":
            return self.obj(depth + 1)
        if c == "[":
            return self.arr(depth + 1)
        if c == '"':
            return self.string()
        for word, val in (("null", None), ("true", True), ("false", False)):
            if self.s.startswith(word, self.i):
                self.i += len(word)
                return val
        m = _NUMBER.match(self.s, self.i)
        if m and m.end() > self.i:
            self.i = m.end()
            text = m.group()
            if "." in text or "e" in text or "E" in text:
                num = float(text)
                if not math.isfinite(num):
                    raise self.fail("number out of range")
                return num
            return int(text)
        if not c:
            raise self.fail("unexpected end of document")
        raise self.fail(f"unexpected character {c!r}")

    def string(self) -> str:
        try:
            text, end = json.decoder.scanstring(self.s, self.i + 1, True)
        except json.JSONDecodeError as exc:
            raise LenientJSONError(exc.msg, exc.pos) from None
        self.i = end
        return text

    def obj(self, depth: int) -> Obj:
        self.i += 1
        out = Obj()
        while True:
            c = self.peek()
            if c == "}":
                self.i += 1
                return out
            if c == ",":
                self.i += 1
                continue
            if not c:
                raise self.fail("unterminated object")
            if c == '"':
                key = self.string()
                if self.peek() == ":":
                    self.i += 1
                    out.append((key, self.value(depth)))
                else:
                    out.append((None, key))
            else:
                out.append((None, self.value(depth)))

    def arr(self, depth: int) -> list:
        self.i += 1
        out: list = []
        while True:
            c = self.peek()
            if c == "]":
                self.i += 1
                return out
            if c == ",":
                self.i += 1
                continue
            if not c:
                raise self.fail("unterminated array")
            out.append(self.value(depth))


def loads(text: str) -> Any:
    p = _Parser(text)
    val = p.value(0)
    if p.peek():
        raise p.fail("trailing data after document")
    return val
