"""How a snippet uses its imports, and which interpreter it was written for."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .lexer import mask_source
from .versions import pyver_key

if TYPE_CHECKING:
    from .kb import KnowledgeBase

__all__ = [
    "IndicatorHit",
    "Py2Verdict",
    "VersionEvidence",
    "PY2_INDICATORS",
    "PY3_INDICATORS",
    "detect_python2",
    "infer_implicit_version",
    "disambiguate_usage",
    "detect_ecosystems",
]


@dataclass(frozen=True, order=True)
class IndicatorHit:
    name: str
    line: int


@dataclass(frozen=True)
class Py2Verdict:
    py2_signals: tuple[IndicatorHit, ...] = ()
    py3_signals: tuple[IndicatorHit, ...] = ()

    @property
    def forced_py2(self) -> bool:
        return bool(self.py2_signals) and not self.py3_signals

    def names(self) -> tuple[frozenset[str], frozenset[str]]:
        return (
            frozenset(h.name for h in self.py2_signals),
            frozenset(h.name for h in self.py3_signals),
        )


def _stmt(body: str) -> re.Pattern[str]:
    # statement position: start of line, or after `;` / a compound-header colon
    return re.compile(r"(?:^|[;:])[ \t]*" + body, re.MULTILINE)


_MODULE_IMPORT = r"(?:import[ \t]+(?:[\w.]+[ \t]*,[ \t]*)*|from[ \t]+)"

PY2_INDICATORS: dict[str, re.Pattern[str]] = {
    "print-stmt": _stmt(r"print(?:[ \t]+(?![\s=(.,)\]}:;])|[ \t]*$)"),
    "raw_input": re.compile(r"\braw_input\s*\("),
    "urllib2": re.compile(r"\burllib2\b"),
    "xrange": re.compile(r"\bxrange\s*\("),
    "iter-methods": re.compile(r"\.(?:iteritems|iterkeys|itervalues)\s*\("),
    "except-comma": _stmt(r"except[ \t]*(?:\([^)\n]*\)|[\w.]+)[ \t]*,[ \t]*\w+[ \t]*:"),
    "unicode-call": re.compile(r"(?<![\w.])unicode\s*\("),
    "has_key": re.compile(r"\.has_key\s*\("),
    "stringio-module": _stmt(_MODULE_IMPORT + r"c?StringIO\b"),
    "tkinter-module": _stmt(_MODULE_IMPORT + r"Tkinter\b"),
    "configparser-module": _stmt(_MODULE_IMPORT + r"ConfigParser\b"),
    "queue-module": _stmt(_MODULE_IMPORT + r"Queue\b"),
    "octal-literal": re.compile(r"(?<![\w.])0[0-7]*[1-7][0-7]*(?![\w.])"),
}

PY3_INDICATORS: dict[str, re.Pattern[str]] = {
    "f-string": re.compile(r"(?<![\w])(?:[fF][rR]?|[rR][fF])['\"]"),
    "async-def": re.compile(r"\basync[ \t]+def\b|\bawait[ \t]+[\w(]"),
    "print-kwargs": re.compile(r"\bprint\s*\([^\n]*\b(?:end|sep|file|flush)\s*="),
    "walrus": re.compile(r"\w[ \t]*:=(?!=)"),
    "kwonly-args": re.compile(r"\bdef\s+\w+\s*\([^)]*\*\s*,"),
}


def _hits(masked: str, patterns: dict[str, re.Pattern[str]]) -> tuple[IndicatorHit, ...]:
    hits = []
    for name, pattern in patterns.items():
        for m in pattern.finditer(masked):
            hits.append(IndicatorHit(name, masked.count("\n", 0, m.start()) + 1))
    return tuple(sorted(hits))


def detect_python2(source_text: str) -> Py2Verdict:
    masked = mask_source(source_text)
    return Py2Verdict(_hits(masked, PY2_INDICATORS), _hits(masked, PY3_INDICATORS))


@dataclass(frozen=True)
class VersionEvidence:
    min_version: str | None = None
    max_version: str | None = None
    signals: tuple[IndicatorHit, ...] = ()
    conflicting: bool = False

    def __post_init__(self) -> None:
        if self.min_version and self.max_version:
            if pyver_key(self.min_version) > pyver_key(self.max_version):
                raise ValueError("min_version exceeds max_version")

    @property
    def has_bounds(self) -> bool:
        return self.min_version is not None or self.max_version is not None


def infer_implicit_version(source_text: str, kb: KnowledgeBase) -> VersionEvidence:
    masked = mask_source(source_text)
    lower: str | None = None
    upper: str | None = None
    signals: list[IndicatorHit] = []
    for vp in kb.version_patterns:
        for m in vp.pattern.finditer(masked):
            signals.append(IndicatorHit(vp.name, masked.count("\n", 0, m.start()) + 1))
            if vp.min_version and (lower is None or pyver_key(vp.min_version) > pyver_key(lower)):
                lower = vp.min_version
            if vp.max_version and (upper is None or pyver_key(vp.max_version) < pyver_key(upper)):
                upper = vp.max_version
    signals.sort()
    if lower and upper and pyver_key(lower) > pyver_key(upper):
        return VersionEvidence(signals=tuple(signals), conflicting=True)
    return VersionEvidence(lower, upper, tuple(signals))


def disambiguate_usage(source_text: str, import_name: str, kb: KnowledgeBase) -> str | None:
    """Pick a package from how ``import_name`` is called, or ``None``."""
    patterns = kb.usage_patterns_for(import_name)
    if not patterns:
        return None
    masked = mask_source(source_text)
    for up in patterns:
        if up.call_pattern.search(masked):
            return up.package
    return None


def detect_ecosystems(import_names: Iterable[str], kb: KnowledgeBase) -> list[str]:
    present = set(import_names)
    return [
        eco.name
        for eco in kb.ecosystems
        if len(eco.triggers & present) >= kb.ecosystem_min_overlap
    ]
