"""Co-installation statistics mined from ``requirements.txt``-style files.

The score used by the cascade is conditional: ``score(a, b)`` is the share
of files listing ``a`` that also list ``b``. Files carry no dates of their
own, so an optional ``dates.json`` sidecar (``{"relative/path.txt":
"YYYY-MM-DD"}``) drives the cutoff filter; undated files are kept.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable

from packaging.requirements import InvalidRequirement, Requirement
from packaging.utils import canonicalize_name

logger = logging.getLogger(__name__)

__all__ = ["CooccurrenceTable", "MineStats", "parse_requirements", "mine", "count_file"]


@dataclass
class CooccurrenceTable:
    package_counts: Counter = field(default_factory=Counter)
    pair_counts: Counter = field(default_factory=Counter)  # key: sorted (a, b)
    version_counts: Counter = field(default_factory=Counter)  # key: (package, version, companion)
    file_total: int = 0

    def pair(self, a: str, b: str) -> int:
        a, b = canonicalize_name(a), canonicalize_name(b)
        return self.pair_counts[(a, b) if a <= b else (b, a)]

    def score(self, a: str, b: str) -> float:
        a, b = canonicalize_name(a), canonicalize_name(b)
        base = self.package_counts[a]
        if base == 0:
            return 0.0
        if a == b:
            return 1.0
        return self.pair(a, b) / base

    def versions_with(self, package: str, companion: str) -> dict[str, int]:
        p, c = canonicalize_name(package), canonicalize_name(companion)
        return {v: n for (pp, v, cc), n in self.version_counts.items() if pp == p and cc == c}

    def merge(self, other: CooccurrenceTable) -> CooccurrenceTable:
        return CooccurrenceTable(
            self.package_counts + other.package_counts,
            self.pair_counts + other.pair_counts,
            self.version_counts + other.version_counts,
            self.file_total + other.file_total,
        )

    def is_empty(self) -> bool:
        return self.file_total == 0

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "file_total": self.file_total,
            "package_counts": [[p, n] for p, n in sorted(self.package_counts.items())],
            "pair_counts": [[a, b, n] for (a, b), n in sorted(self.pair_counts.items())],
            "version_counts": [[p, v, c, n] for (p, v, c), n in sorted(self.version_counts.items())],
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> CooccurrenceTable:
        table = cls(file_total=int(doc["file_total"]))
        for p, n in doc["package_counts"]:
            table.package_counts[canonicalize_name(p)] = int(n)
        for a, b, n in doc["pair_counts"]:
            a, b = sorted((canonicalize_name(a), canonicalize_name(b)))
            table.pair_counts[(a, b)] = int(n)
        for p, v, c, n in doc["version_counts"]:
            table.version_counts[(canonicalize_name(p), str(v), canonicalize_name(c))] = int(n)
        for counter in (table.package_counts, table.pair_counts, table.version_counts):
            if any(n < 0 for n in counter.values()):
                raise ValueError("negative count in co-occurrence table")
        return table


@dataclass
class MineStats:
    files_seen: int = 0
    files_excluded: int = 0
    files_undated: int = 0
    skipped_lines: int = 0


def parse_requirements(text: str) -> tuple[dict[str, str | None], int]:
    """Return ``{canonical name: pinned version or None}`` and the skipped-line count."""
    packages: dict[str, str | None] = {}
    skipped = 0
    for raw in text.splitlines():
        line = raw.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("-") or "://" in line:
            skipped += 1
            continue
        try:
            req = Requirement(line)
        except InvalidRequirement:
            skipped += 1
            continue
        pinned = None
        for spec in req.specifier:
            if spec.operator in ("==", "===") and "*" not in spec.version:
                pinned = spec.version
        name = canonicalize_name(req.name)
        if packages.get(name) is None:
            packages[name] = pinned
    return packages, skipped


def count_file(packages: dict[str, str | None]) -> CooccurrenceTable:
    table = CooccurrenceTable(file_total=1)
    names = sorted(packages)
    table.package_counts.update(names)
    table.pair_counts.update(combinations(names, 2))
    for p, version in packages.items():
        if version is None:
            continue
        for companion in names:
            if companion != p:
                table.version_counts[(p, version, companion)] += 1
    return table


def _load_dates(root: Path) -> dict[str, dt.date]:
    sidecar = root / "dates.json"
    if not sidecar.exists():
        return {}
    raw = json.loads(sidecar.read_text(encoding="utf-8"))
    return {k: dt.date.fromisoformat(v) for k, v in raw.items()}


def _requirement_files(root: Path) -> Iterable[Path]:
    return sorted(p for p in root.rglob("*.txt") if p.is_file())


def mine(
    corpus: Path | str,
    cutoff_date: dt.date | None = None,
) -> tuple[CooccurrenceTable, MineStats]:
    """Count package pairs per file; files dated on or after ``cutoff_date`` are excluded."""
    root = Path(corpus)
    dates = _load_dates(root)
    stats = MineStats()
    table = CooccurrenceTable()
    for path in _requirement_files(root):
        rel = path.relative_to(root).as_posix()
        stats.files_seen += 1
        date = dates.get(rel)
        if date is None:
            stats.files_undated += 1
        elif cutoff_date is not None and date >= cutoff_date:
            stats.files_excluded += 1
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping %s: %s", path, exc)
            stats.files_excluded += 1
            continue
        packages, skipped = parse_requirements(text)
        stats.skipped_lines += skipped
        table = table.merge(count_file(packages))
    if table.is_empty():
        logger.warning("no requirement files mined from %s", root)
    if stats.skipped_lines:
        logger.info("skipped %d unparseable requirement lines", stats.skipped_lines)
    return table, stats
