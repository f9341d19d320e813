"""The ``key,value`` CSV read by datatool, and a lint for generated fragments."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .depgraph import strip_comment

HEADER = "key,value"
_FORBIDDEN = (",", '"', "\n", "\r")


class KVFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class KeyNotFound(KeyError):
    pass


@dataclass(frozen=True)
class KeyValueTable:
    rows: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple((k, v) for k, v in self.rows))
        seen = set()
        for key, value in self.rows:
            if not key:
                raise KVFormatError("empty key")
            for text in (key, value):
                if any(c in text for c in _FORBIDDEN):
                    raise KVFormatError(f"{text!r} contains a comma, double quote or line break")
            if key in seen:
                raise KVFormatError(f"duplicate key {key!r}")
            seen.add(key)

    @property
    def keys(self) -> list[str]:
        return [k for k, _ in self.rows]

    def as_dict(self) -> dict[str, str]:
        return dict(self.rows)


def parse_kv(text: str) -> KeyValueTable:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [line[:-1] if line.endswith("\r") else line for line in lines]
    if not lines or lines[0] != HEADER:
        raise KVFormatError(f"first line must be exactly {HEADER!r}", 1)
    rows = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 2:
            raise KVFormatError(f"expected 2 fields, found {len(parts)}", lineno)
        key, value = parts
        if not key:
            raise KVFormatError("empty key", lineno)
        if '"' in line:
            raise KVFormatError("quoted fields are not supported", lineno)
        if key in seen:
            raise KVFormatError(f"duplicate key {key!r}", lineno)
        seen.add(key)
        rows.append((key, value))
    return KeyValueTable(tuple(rows))


def format_kv(t: KeyValueTable) -> str:
    return "".join(f"{k},{v}\n" for k, v in ((("key", "value"),) + t.rows))


def read_kv(path: str | Path) -> KeyValueTable:
    return parse_kv(Path(path).read_bytes().decode("utf-8"))


def write_kv(t: KeyValueTable, path: str | Path) -> None:
    Path(path).write_bytes(format_kv(t).encode("utf-8"))


def fetch(t: KeyValueTable, key: str) -> str:
    """Exact, case-sensitive lookup, the same as ``\\DTLfetch{db}{key}{<key>}{value}``."""
    for k, v in t.rows:
        if k == key:
            return v
    raise KeyNotFound(key)


@dataclass(frozen=True)
class Finding:
    kind: str  # "brace" | "environment" | "encoding"
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


_ENV = re.compile(r"\\(begin|end)\s*\{([^{}]*)\}")


def lint_tex_fragment_bytes(data: bytes) -> list[Finding]:
    findings: list[Finding] = []
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data.count(b"\n", 0, exc.start) + 1
        findings.append(Finding("encoding", line, f"non-UTF-8 byte 0x{data[exc.start]:02x} at offset {exc.start}"))
        text = data.decode("utf-8", errors="replace")

    brace_stack: list[int] = []
    env_stack: list[tuple[str, int]] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = strip_comment(raw)
        i = 0
        while i < len(line):
            c = line[i]
            if c == "\\":
                i += 2
                continue
            if c == "{":
                brace_stack.append(lineno)
            elif c == "}":
                if brace_stack:
                    brace_stack.pop()
                else:
                    findings.append(Finding("brace", lineno, "unmatched '}'"))
            i += 1
        for m in _ENV.finditer(line):
            kind, name = m.group(1), m.group(2).strip()
            if kind == "begin":
                env_stack.append((name, lineno))
            elif env_stack and env_stack[-1][0] == name:
                env_stack.pop()
            elif any(n == name for n, _ in env_stack):
                while env_stack[-1][0] != name:
                    n, at = env_stack.pop()
                    findings.append(Finding("environment", at, f"\\begin{{{n}}} closed by \\end{{{name}}} on line {lineno}"))
                env_stack.pop()
            else:
                findings.append(Finding("environment", lineno, f"\\end{{{name}}} without matching \\begin"))
    for at in brace_stack:
        findings.append(Finding("brace", at, "unmatched '{'"))
    for name, at in env_stack:
        findings.append(Finding("environment", at, f"\\begin{{{name}}} is never closed"))
    return sorted(findings, key=lambda f: f.line)


def lint_tex_fragment(path: str | Path) -> list[Finding]:
    """Problems that would break ``\\input`` of a generated fragment; [] means safe."""
    return lint_tex_fragment_bytes(Path(path).read_bytes())
