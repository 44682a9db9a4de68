"""Snippet loading and lexical import extraction.

Imports are found by scanning masked logical lines with regular expressions
rather than by parsing, so Python 2 sources (``print x``, ``except E, e``)
are handled by the same code path as Python 3 ones. Imports nested in
``try``/``if`` blocks are included on purpose: installing an optional
dependency is cheaper than missing a required one.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator

from .lexer import logical_lines, mask_source

if TYPE_CHECKING:
    from .kb import KnowledgeBase

logger = logging.getLogger(__name__)

__all__ = [
    "CorpusError",
    "Snippet",
    "ImportRecord",
    "ImportSet",
    "load_corpus",
    "load_snippet",
    "extract_imports",
    "candidate_imports",
    "sibling_modules",
]


class CorpusError(Exception):
    """The corpus directory cannot be read."""


@dataclass(frozen=True)
class Snippet:
    id: str
    source_text: str
    origin_path: Path | None = None

    def __post_init__(self) -> None:
        if not self.source_text.strip():
            raise ValueError(f"snippet {self.id!r} is empty")


@dataclass(frozen=True)
class ImportRecord:
    raw_module: str
    top_level: str
    alias: str | None
    style: str  # plain | from | star | relative
    line: int
    member: str | None = None

    @property
    def is_relative(self) -> bool:
        return self.style == "relative"


@dataclass(frozen=True)
class ImportSet:
    """Ordered, de-duplicated top-level import names.

    ``system_only`` flags the members that no pip package can provide; they
    stay in ``names`` so the unfixability estimate can see them.
    """

    names: tuple[str, ...] = ()
    system_only: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names) or any(not n for n in self.names):
            raise ValueError("import names must be unique and non-empty")

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    @property
    def installable(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n not in self.system_only)

    def as_set(self) -> frozenset[str]:
        return frozenset(self.names)


def load_snippet(path: Path, root: Path | None = None) -> Snippet:
    """Read one file; raises ``ValueError`` for empty or non-UTF-8 input."""
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ValueError(f"{path}: not valid UTF-8") from exc
    ident = path.relative_to(root).as_posix() if root is not None else path.name
    return Snippet(id=ident, source_text=text, origin_path=path)


def load_corpus(path: Path | str) -> list[Snippet]:
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"{root}: not a readable directory")
    try:
        files = sorted(p for p in root.rglob("*.py") if p.is_file())
    except OSError as exc:
        raise CorpusError(f"{root}: {exc}") from exc
    snippets = []
    for file in files:
        try:
            snippets.append(load_snippet(file, root))
        except ValueError as exc:
            logger.warning("skipping %s: %s", file, exc)
        except OSError as exc:
            logger.warning("skipping unreadable %s: %s", file, exc)
    return snippets


def sibling_modules(path: Path) -> frozenset[str]:
    """Module names importable from the snippet's own directory."""
    path = Path(path)
    parent = path.parent
    names = set()
    try:
        for entry in parent.iterdir():
            if entry == path:
                continue
            if entry.suffix == ".py":
                names.add(entry.stem)
            elif entry.is_dir() and (entry / "__init__.py").exists():
                names.add(entry.name)
    except OSError:
        pass
    return frozenset(names)


_DOTTED = re.compile(r"^[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*$")
_ALIAS = re.compile(r"^(?P<name>[\w.]+)(?:\s+as\s+(?P<alias>\w+))?$")
_PLAIN = re.compile(r"^import\s+(?P<body>.+)$")
_FROM = re.compile(r"^from\s+(?P<module>\.+[\w.]*|[\w.]+)\s+import\b\s*(?P<body>.*)$")
# compound headers that may precede an import on the same line: `try: import json`
_HEADER = re.compile(r"^(?:(?:try|else|finally)\s*:|(?:if|elif|while|for|with|except)\b[^:]*:)\s*")


def _statements(text: str) -> Iterable[str]:
    for part in text.split(";"):
        stmt = part.strip()
        while True:
            stripped = _HEADER.sub("", stmt, count=1)
            if stripped == stmt:
                break
            stmt = stripped
        if stmt:
            yield stmt


def _top(module: str) -> str:
    return module.split(".", 1)[0]


def extract_imports(source_text: str) -> list[ImportRecord]:
    records: list[ImportRecord] = []
    for logical in logical_lines(mask_source(source_text)):
        for stmt in _statements(logical.text):
            if m := _PLAIN.match(stmt):
                for chunk in m["body"].split(","):
                    am = _ALIAS.match(chunk.strip())
                    if am is None or not _DOTTED.match(am["name"]):
                        continue
                    name = am["name"]
                    records.append(ImportRecord(name, _top(name), am["alias"], "plain", logical.line))
            elif m := _FROM.match(stmt):
                module = m["module"]
                relative = module.startswith(".")
                if not relative and not _DOTTED.match(module):
                    continue
                body = m["body"].strip().strip("()").strip()
                top = "" if relative else _top(module)
                if body == "*":
                    style = "relative" if relative else "star"
                    records.append(ImportRecord(module, top, None, style, logical.line, "*"))
                    continue
                members = [c.strip() for c in body.split(",") if c.strip()]
                if not members:
                    continue
                for chunk in members:
                    am = _ALIAS.match(chunk)
                    if am is None:
                        continue
                    style = "relative" if relative else "from"
                    records.append(
                        ImportRecord(module, top, am["alias"], style, logical.line, am["name"])
                    )
    return records


def candidate_imports(
    records: Iterable[ImportRecord],
    python_version: str,
    kb: KnowledgeBase,
    local_names: Iterable[str] = (),
) -> ImportSet:
    """Reduce import records to the names a package installer has to satisfy.

    Stdlib modules of ``python_version`` and local project modules (siblings
    in ``local_names`` or names matching the KB's local patterns) are dropped.
    """
    stdlib = kb.stdlib(python_version)
    local = set(local_names)
    names: list[str] = []
    seen: set[str] = set()
    for rec in records:
        if rec.is_relative or not rec.top_level:
            continue
        name = rec.top_level
        if name in seen:
            continue
        seen.add(name)
        if name in stdlib or name in local or kb.is_local(name):
            continue
        names.append(name)
    flagged = frozenset(n for n in names if kb.is_system_only(n))
    return ImportSet(tuple(names), flagged)
