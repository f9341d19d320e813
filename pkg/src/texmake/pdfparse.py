"""Recovery-scan parser for the PDF object syntax.

Objects are located lexically (``N G obj ... endobj``) rather than through
the cross-reference table, so files with xref streams, broken offsets or
incremental updates all parse the same way.  Parsing is total: malformed
input yields partial results plus :class:`ParseProblem` entries, never an
exception, except :class:`NotAPdf` for input that lacks the header.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from typing import NamedTuple, Union

MAX_DEPTH = 256

_WS = b"\x00\t\n\x0c\r "
_REGULAR = re.compile(rb"[^\x00\t\n\x0c\r ()<>\[\]{}/%]+")
_NUMBER = re.compile(rb"[+-]?(?:\d+\.?\d*|\.\d+)")
_NAME = re.compile(rb"/([^\x00\t\n\x0c\r ()<>\[\]{}/%]*)")
_OBJ_HEADER = re.compile(rb"(?<![0-9])(\d{1,10})[\x00\t\n\x0c\r ]+(\d{1,5})[\x00\t\n\x0c\r ]+obj(?![^\x00\t\n\x0c\r ()<>\[\]{}/%])")
_TRAILER = re.compile(rb"(?<![^\x00\t\n\x0c\r ()<>\[\]{}/%])trailer(?![^\x00\t\n\x0c\r ()<>\[\]{}/%])")
_ENDSTREAM = re.compile(rb"\r?\n?endstream")
_HEX = frozenset(b"0123456789abcdefABCDEF")


class PdfError(Exception):
    pass


class NotAPdf(PdfError, ValueError):
    pass


class PdfSyntaxError(PdfError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class Name(str):
    """A PDF name (``/Type``), kept distinct from strings."""

    def __repr__(self) -> str:
        return f"/{str.__str__(self)}"


class PdfString(bytes):
    """Literal ``(...)`` or hex ``<...>`` string contents."""


class Ref(NamedTuple):
    number: int
    generation: int

    def __repr__(self) -> str:
        return f"{self.number} {self.generation} R"


@dataclass(frozen=True)
class Stream:
    dict: dict
    raw: bytes

    @property
    def data(self) -> bytes | None:
        """Payload when unfiltered; None when a /Filter would need decoding."""
        return None if "Filter" in self.dict else self.raw


PdfValue = Union[None, bool, int, float, Name, PdfString, Ref, list, dict, Stream]


@dataclass(frozen=True)
class PdfObject:
    number: int
    generation: int
    body: PdfValue
    span: tuple[int, int]

    @property
    def key(self) -> tuple[int, int]:
        return (self.number, self.generation)


@dataclass(frozen=True)
class ParseProblem:
    offset: int
    message: str


@dataclass
class PdfParse:
    objects: list[PdfObject] = field(default_factory=list)
    trailers: list[dict] = field(default_factory=list)
    problems: list[ParseProblem] = field(default_factory=list)

    def by_key(self) -> dict[tuple[int, int], PdfObject]:
        # later definitions win, as with incremental updates
        return {o.key: o for o in self.objects}


class _Keyword(bytes):
    pass


_KEYWORD_VALUES = {b"true": True, b"false": False, b"null": None}


class Lexer:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def skip_ws(self) -> None:
        data, end = self.data, self.end
        pos = self.pos
        while pos < end:
            c = data[pos]
            if c in _WS:
                pos += 1
            elif c == 0x25:  # %
                while pos < end and data[pos] not in b"\r\n":
                    pos += 1
            else:
                break
        self.pos = pos

    def at_eof(self) -> bool:
        self.skip_ws()
        return self.pos >= self.end

    def next(self):
        """Return ``(kind, value, start)``; kind is one of
        ``num name str kw [ ] << >> eof``."""
        self.skip_ws()
        data, pos, end = self.data, self.pos, self.end
        if pos >= end:
            return ("eof", None, pos)
        c = data[pos : pos + 1]
        if c == b"/":
            m = _NAME.match(data, pos, end)
            self.pos = m.end()
            return ("name", _decode_name(m.group(1)), pos)
        if c == b"(":
            value, self.pos = _literal_string(data, pos, end)
            return ("str", value, pos)
        if c == b"<":
            if data[pos + 1 : pos + 2] == b"<" and pos + 1 < end:
                self.pos = pos + 2
                return ("<<", None, pos)
            value, self.pos = _hex_string(data, pos, end)
            return ("str", value, pos)
        if c == b">":
            if data[pos + 1 : pos + 2] == b">" and pos + 1 < end:
                self.pos = pos + 2
                return (">>", None, pos)
            raise PdfSyntaxError("stray '>'", pos)
        if c in (b"[", b"]"):
            self.pos = pos + 1
            return (c.decode(), None, pos)
        if c in (b"{", b"}", b")"):
            raise PdfSyntaxError(f"unexpected {c!r}", pos)
        m = _REGULAR.match(data, pos, end)
        self.pos = m.end()
        tok = m.group(0)
        if _NUMBER.fullmatch(tok):
            return ("num", _number(tok), pos)
        return ("kw", _Keyword(tok), pos)


def _number(tok: bytes) -> int | float:
    if b"." in tok:
        return float(tok)
    try:
        return int(tok)
    except ValueError:  # beyond int-from-str digit limit
        return float(tok)


def _decode_name(raw: bytes) -> Name:
    out = bytearray()
    i = 0
    while i < len(raw):
        if raw[i] == 0x23 and i + 2 < len(raw) and raw[i + 1] in _HEX and raw[i + 2] in _HEX:
            out.append(int(raw[i + 1 : i + 3], 16))
            i += 3
        else:
            out.append(raw[i])
            i += 1
    return Name(out.decode("latin-1"))


_ESCAPES = {ord("n"): b"\n", ord("r"): b"\r", ord("t"): b"\t", ord("b"): b"\b", ord("f"): b"\f"}


def _literal_string(data: bytes, pos: int, end: int) -> tuple[PdfString, int]:
    start = pos
    pos += 1
    depth = 1
    out = bytearray()
    while pos < end:
        c = data[pos]
        if c == 0x5C:  # backslash
            pos += 1
            if pos >= end:
                break
            e = data[pos]
            if e in _ESCAPES:
                out += _ESCAPES[e]
                pos += 1
            elif 0x30 <= e <= 0x37:
                j = pos
                while j < end and j < pos + 3 and 0x30 <= data[j] <= 0x37:
                    j += 1
                out.append(int(data[pos:j], 8) & 0xFF)
                pos = j
            elif e == 0x0D:
                pos += 2 if data[pos + 1 : pos + 2] == b"\n" else 1
            elif e == 0x0A:
                pos += 1
            else:
                out.append(e)
                pos += 1
            continue
        if c == 0x28:
            depth += 1
        elif c == 0x29:
            depth -= 1
            if depth == 0:
                return PdfString(bytes(out)), pos + 1
        out.append(c)
        pos += 1
    raise PdfSyntaxError("unterminated literal string", start)


def _hex_string(data: bytes, pos: int, end: int) -> tuple[PdfString, int]:
    close = data.find(b">", pos + 1, end)
    if close < 0:
        raise PdfSyntaxError("unterminated hex string", pos)
    body = bytes(b for b in data[pos + 1 : close] if b not in _WS)
    if not all(b in _HEX for b in body):
        raise PdfSyntaxError("invalid character in hex string", pos)
    if len(body) % 2:
        body += b"0"
    return PdfString(bytes.fromhex(body.decode("ascii"))), close + 1


def _parse_value(lx: Lexer, depth: int = 0, tok=None) -> PdfValue:
    if depth > MAX_DEPTH:
        raise PdfSyntaxError("nesting too deep", lx.pos)
    kind, value, start = tok if tok is not None else lx.next()
    if kind == "num":
        if isinstance(value, int) and value >= 0:
            save = lx.pos
            k2, v2, _ = lx.next()
            if k2 == "num" and isinstance(v2, int) and v2 >= 0:
                k3, v3, _ = lx.next()
                if k3 == "kw" and v3 == b"R":
                    return Ref(value, v2)
            lx.pos = save
        return value
    if kind in ("name", "str"):
        return value
    if kind == "[":
        items = []
        while True:
            t = lx.next()
            if t[0] == "]":
                return items
            if t[0] == "eof":
                raise PdfSyntaxError("unterminated array", start)
            items.append(_parse_value(lx, depth + 1, t))
    if kind == "<<":
        d: dict = {}
        while True:
            t = lx.next()
            if t[0] == ">>":
                return d
            if t[0] == "eof":
                raise PdfSyntaxError("unterminated dictionary", start)
            if t[0] != "name":
                raise PdfSyntaxError("dictionary key is not a name", t[2])
            vt = lx.next()
            if vt[0] in (">>", "eof"):
                raise PdfSyntaxError("dictionary key without value", t[2])
            d[t[1]] = _parse_value(lx, depth + 1, vt)
    if kind == "kw" and bytes(value) in _KEYWORD_VALUES:
        return _KEYWORD_VALUES[bytes(value)]
    if kind == "eof":
        raise PdfSyntaxError("unexpected end of data", start)
    raise PdfSyntaxError(f"unexpected token {kind} {value!r}", start)


def parse_value(data: bytes) -> PdfValue:
    """Parse exactly one value from *data* (used by tests and tools)."""
    lx = Lexer(data)
    v = _parse_value(lx)
    if not lx.at_eof():
        raise PdfSyntaxError("trailing data after value", lx.pos)
    return v


def _read_stream(lx: Lexer, d: dict, kw_start: int) -> Stream:
    data, end = lx.data, lx.end
    pos = kw_start + len(b"stream")
    if data[pos : pos + 2] == b"\r\n":
        pos += 2
    elif data[pos : pos + 1] in (b"\n", b"\r"):
        pos += 1
    length = d.get("Length")
    if isinstance(length, int) and not isinstance(length, bool) and 0 <= length <= end - pos:
        m = _ENDSTREAM.match(data, pos + length, end)
        if m is not None:
            lx.pos = m.end()
            return Stream(d, data[pos : pos + length])
    idx = data.find(b"endstream", pos, end)
    if idx < 0:
        raise PdfSyntaxError("stream without endstream", kw_start)
    raw_end = idx
    if data[raw_end - 2 : raw_end] == b"\r\n" and raw_end - 2 >= pos:
        raw_end -= 2
    elif raw_end > pos and data[raw_end - 1 : raw_end] in (b"\n", b"\r"):
        raw_end -= 1
    lx.pos = idx + len(b"endstream")
    return Stream(d, data[pos:raw_end])


def _parse_indirect(data: bytes, header: re.Match, end: int) -> tuple[PdfObject, str | None]:
    """Parse the object whose header matched; returns (object, warning)."""
    lx = Lexer(data, header.end(), end)
    body = _parse_value(lx)
    warning = None
    body_end = lx.pos
    t = lx.next()
    if t[0] == "kw" and t[1] == b"stream":
        if not isinstance(body, dict):
            raise PdfSyntaxError("stream keyword after a non-dictionary", t[2])
        body = _read_stream(lx, body, t[2])
        body_end = lx.pos
        t = lx.next()
    if t[0] == "kw" and t[1] == b"endobj":
        span_end = lx.pos
    else:
        warning = "missing endobj"
        span_end = body_end
    obj = PdfObject(int(header.group(1)), int(header.group(2)), body, (header.start(), span_end))
    return obj, warning


def parse_object_bytes(chunk: bytes) -> PdfObject:
    """Re-parse a single ``N G obj ... endobj`` slice (span-fidelity check)."""
    m = _OBJ_HEADER.match(chunk)
    if m is None:
        raise PdfSyntaxError("not an indirect object", 0)
    obj, _ = _parse_indirect(chunk, m, len(chunk))
    return obj


def parse_pdf_objects(data: bytes) -> PdfParse:
    if not data.startswith(b"%PDF-"):
        raise NotAPdf("input does not start with %PDF-")
    result = PdfParse()
    pos = 0
    n = len(data)
    while pos < n:
        m = _OBJ_HEADER.search(data, pos)
        if m is None:
            break
        try:
            obj, warning = _parse_indirect(data, m, n)
        except PdfSyntaxError as exc:
            result.problems.append(ParseProblem(m.start(), f"object {m.group(1).decode()} {m.group(2).decode()}: {exc}"))
            pos = m.end()
            continue
        if warning:
            result.problems.append(ParseProblem(m.start(), f"object {obj.number} {obj.generation}: {warning}"))
        result.objects.append(obj)
        pos = max(obj.span[1], m.end())

    starts = [o.span[0] for o in result.objects]
    found: list[tuple[int, dict]] = []
    for m in _TRAILER.finditer(data):
        i = bisect.bisect_right(starts, m.start()) - 1
        if i >= 0 and result.objects[i].span[1] > m.start():
            continue
        lx = Lexer(data, m.end())
        try:
            value = _parse_value(lx)
        except PdfSyntaxError as exc:
            result.problems.append(ParseProblem(m.start(), f"trailer: {exc}"))
            continue
        if isinstance(value, dict):
            found.append((m.start(), value))
        else:
            result.problems.append(ParseProblem(m.start(), "trailer is not a dictionary"))
    for o in result.objects:
        if isinstance(o.body, Stream) and o.body.dict.get("Type") == "XRef":
            found.append((o.span[0], o.body.dict))
    result.trailers = [d for _, d in sorted(found, key=lambda pair: pair[0])]
    return result
