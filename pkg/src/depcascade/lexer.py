"""Grammar-agnostic masking of Python source.

Both the import scanner and the interpreter indicators run over a *masked*
copy of the source: comments are blanked and the bodies of string literals
are replaced by spaces, while quote characters, string prefixes and every
newline survive. Offsets and line numbers in the masked text therefore match
the original, and a ``print x`` inside a docstring can no longer look like
code. The scanner never fails: unterminated strings simply run to the end of
their line (single-quoted) or of the file (triple-quoted).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

__all__ = ["mask_source", "logical_lines", "LogicalLine"]

_STATEMENT_START = re.compile(r"^\s*(?:import\s|from\s+\S+\s+import\b)")


def mask_source(text: str) -> str:
    out = list(text)
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "#":
            while i < n and text[i] != "\n":
                out[i] = " "
                i += 1
            continue
        if ch in "'\"":
            quote = ch * 3 if text.startswith(ch * 3, i) else ch
            i += len(quote)
            while i < n:
                c = text[i]
                if c == "\\" and i + 1 < n:
                    out[i] = " "
                    if text[i + 1] != "\n":
                        out[i + 1] = " "
                    i += 2
                    continue
                if text.startswith(quote, i):
                    i += len(quote)
                    break
                if c == "\n":
                    if len(quote) == 1:
                        break
                else:
                    out[i] = " "
                i += 1
            continue
        i += 1
    return "".join(out)


@dataclass(frozen=True)
class LogicalLine:
    text: str
    line: int  # 1-based line of the first physical line


def logical_lines(masked: str) -> list[LogicalLine]:
    """Join physical lines on open brackets and backslash continuations."""
    result: list[LogicalLine] = []
    buf: list[str] = []
    start = 1
    depth = 0
    for lineno, raw in enumerate(masked.split("\n"), start=1):
        if buf and depth > 0 and _STATEMENT_START.match(raw):
            # an import keyword cannot occur inside brackets: the bracket was never closed
            result.append(LogicalLine(" ".join(buf), start))
            buf, depth = [], 0
        if not buf:
            start = lineno
        line = raw.rstrip()
        continued = line.endswith("\\")
        if continued:
            line = line[:-1]
        for c in line:
            if c in "([{":
                depth += 1
            elif c in ")]}":
                depth = max(0, depth - 1)
        buf.append(line)
        if continued or depth > 0:
            continue
        result.append(LogicalLine(" ".join(buf), start))
        buf = []
    if buf:
        result.append(LogicalLine(" ".join(buf), start))
    return result
