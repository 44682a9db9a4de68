"""Curated resolution knowledge plus a runtime-learned mapping store.

The KB is a directory of JSON documents, one table per file, each carrying a
``schema_version``. Curated tables are frozen after load; the only mutable
part is the learned store, which accepts a mapping only together with
evidence that it works (a PyPI lookup or a successful sandbox build).
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from packaging.specifiers import InvalidSpecifier, SpecifierSet
from packaging.utils import canonicalize_name
from packaging.version import InvalidVersion, Version

from .miner import CooccurrenceTable
from .versions import SHIPPED_PYTHONS, in_bounds

logger = logging.getLogger(__name__)

__all__ = [
    "KBError",
    "Evidence",
    "ErrorRule",
    "ErrorMatch",
    "Remedy",
    "EcosystemTemplate",
    "HeuristicRule",
    "UsagePattern",
    "Ecosystem",
    "VersionPattern",
    "KnowledgeBase",
    "load_kb",
    "is_placeholder",
    "REQUIRED_FILES",
]

SCHEMA_VERSION = 1
REQUIRED_FILES = (
    "mappings.json",
    "corrections.json",
    "constraints.json",
    "error_patterns.json",
    "system_only.json",
    "apt_map.json",
    "compat_map.json",
    "templates.json",
    "heuristics.json",
    "cooccurrence.json",
    "fallbacks.json",
    "usage_patterns.json",
    "ecosystems.json",
    "version_patterns.json",
    "local_patterns.json",
)
LEARNED_FILE = "learned.json"
REMEDY_ACTIONS = frozenset({"rename", "apt", "pin", "force_python", "unfixable"})
SOURCES = frozenset({"external-doc", "dev-discovered", "runtime-learned"})
# compatibility shims importable on every interpreter
_SHIMS = frozenset({"__future__", "builtins", "__builtin__", "future_builtins"})


class KBError(Exception):
    """A KB document is missing or violates its schema."""


class Evidence(enum.Enum):
    PYPI_CONFIRMED = "pypi-confirmed"
    BUILD_SUCCESS = "build-success"


def is_placeholder(release_count: int) -> bool:
    if release_count < 0:
        raise ValueError("release_count must be non-negative")
    return release_count <= 1


@dataclass(frozen=True)
class Remedy:
    action: str
    python: str | None = None
    packages: tuple[str, ...] = ()
    by_capture: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: MappingProxyType({}))

    def apt_for(self, capture: str | None) -> tuple[str, ...]:
        if capture is not None and capture in self.by_capture:
            return self.by_capture[capture]
        return self.packages


@dataclass(frozen=True)
class ErrorRule:
    id: str
    category: str
    pattern: re.Pattern[str]
    capture: str | None
    remedy: Remedy


@dataclass(frozen=True)
class ErrorMatch:
    rule: ErrorRule
    captures: tuple[str | None, ...]
    value: str | None  # first non-empty capture group


@dataclass(frozen=True)
class EcosystemTemplate:
    name: str
    triggers: frozenset[str]
    pythons: tuple[str, ...]
    pins: tuple[tuple[str, str], ...]
    source: str = "dev-discovered"


@dataclass(frozen=True)
class HeuristicRule:
    package: str
    spec: str
    python_min: str | None = None
    python_max: str | None = None
    co_imports: frozenset[str] = frozenset()
    source: str = "external-doc"

    def applies(self, python_version: str, imports: Iterable[str]) -> bool:
        if not in_bounds(python_version, self.python_min, self.python_max):
            return False
        return self.co_imports <= set(imports)

    @property
    def specifier(self) -> SpecifierSet:
        return SpecifierSet(self.spec)


@dataclass(frozen=True)
class UsagePattern:
    import_name: str
    call_pattern: re.Pattern[str]
    package: str


@dataclass(frozen=True)
class Ecosystem:
    name: str
    triggers: frozenset[str]


@dataclass(frozen=True)
class VersionPattern:
    name: str
    pattern: re.Pattern[str]
    min_version: str | None = None
    max_version: str | None = None


@dataclass(frozen=True)
class LearnedMapping:
    import_name: str
    package: str
    evidence: Evidence


class KnowledgeBase:
    """Read-mostly lookup tables; see ``load_kb``."""

    def __init__(
        self,
        *,
        mappings: Mapping[str, tuple[str, str]],
        corrections: Mapping[str, str],
        constraints: Mapping[tuple[str, str], str],
        error_rules: tuple[ErrorRule, ...],
        system_only: frozenset[str],
        apt_map: Mapping[str, tuple[str, ...]],
        compat_map: Mapping[str, Mapping[str, str]],
        templates: tuple[EcosystemTemplate, ...],
        heuristics: tuple[HeuristicRule, ...],
        cooccurrence: CooccurrenceTable,
        fallbacks: Mapping[str, tuple[str, ...]],
        usage_patterns: tuple[UsagePattern, ...],
        ecosystems: tuple[Ecosystem, ...],
        ecosystem_min_overlap: int,
        version_patterns: tuple[VersionPattern, ...],
        local_patterns: tuple[re.Pattern[str], ...],
        stdlib: Mapping[str, frozenset[str]],
        learned_path: Path | None = None,
        persist_learned: bool = False,
    ) -> None:
        self.mappings = MappingProxyType(dict(mappings))
        self.corrections = MappingProxyType(dict(corrections))
        self._corrections_folded = MappingProxyType(
            {canonicalize_name(k): v for k, v in corrections.items()}
        )
        self.constraints = MappingProxyType(dict(constraints))
        self.error_rules = tuple(error_rules)
        self.system_only = frozenset(system_only)
        self._system_tops = frozenset(n.split(".", 1)[0] for n in system_only)
        self.apt_map = MappingProxyType(dict(apt_map))
        self.compat_map = MappingProxyType({k: MappingProxyType(dict(v)) for k, v in compat_map.items()})
        self.templates = tuple(templates)
        self.heuristics = tuple(heuristics)
        self.cooccurrence = cooccurrence
        self.fallbacks = MappingProxyType(dict(fallbacks))
        self.usage_patterns = tuple(usage_patterns)
        self.ecosystems = tuple(ecosystems)
        self.ecosystem_min_overlap = ecosystem_min_overlap
        self.version_patterns = tuple(version_patterns)
        self.local_patterns = tuple(local_patterns)
        self._stdlib = MappingProxyType(dict(stdlib))
        self._stdlib_union = frozenset().union(*stdlib.values()) if stdlib else _SHIMS
        self.learned_path = learned_path
        self.persist_learned = persist_learned
        self._learned: list[LearnedMapping] = []
        self._learned_index: dict[str, str] = {}
        self._lock = threading.Lock()

    # lookups ---------------------------------------------------------------

    def map_import(self, import_name: str) -> str | None:
        learned = self._learned_index.get(import_name)
        if learned is not None:
            return learned
        hit = self.mappings.get(import_name)
        return hit[0] if hit else None

    def learned_package(self, import_name: str) -> str | None:
        return self._learned_index.get(import_name)

    def mapping_domain(self, import_name: str) -> str | None:
        hit = self.mappings.get(import_name)
        return hit[1] if hit else None

    def correct_name(self, name: str) -> str:
        if name in self.corrections:
            return self.corrections[name]
        return self._corrections_folded.get(canonicalize_name(name), name)

    def version_constraint(self, package: str, python_version: str) -> str | None:
        return self.constraints.get((canonicalize_name(package), python_version))

    def match_error(self, output_text: str) -> ErrorMatch | None:
        if not output_text:
            return None
        for rule in self.error_rules:
            m = rule.pattern.search(output_text)
            if m:
                groups = m.groups()
                value = next((g for g in groups if g), None)
                return ErrorMatch(rule, groups, value)
        return None

    def is_system_only(self, import_name: str) -> bool:
        return import_name in self.system_only or import_name.split(".", 1)[0] in self._system_tops

    def apt_dependencies(self, package: str) -> list[str]:
        return list(self.apt_map.get(canonicalize_name(package), ()))

    def compat_pin(self, package: str, python_version: str) -> str | None:
        pins = self.compat_map.get(canonicalize_name(package))
        return pins.get(python_version) if pins else None

    def fallback_chain(self, package: str) -> tuple[str, ...]:
        return self.fallbacks.get(canonicalize_name(package), ())

    def usage_patterns_for(self, import_name: str) -> tuple[UsagePattern, ...]:
        return tuple(u for u in self.usage_patterns if u.import_name == import_name)

    def stdlib(self, python_version: str) -> frozenset[str]:
        names = self._stdlib.get(python_version)
        if names is None:
            logger.warning("no stdlib list for Python %s; using the union of all versions", python_version)
            return self._stdlib_union
        return names

    def is_local(self, import_name: str) -> bool:
        return any(p.search(import_name) for p in self.local_patterns)

    @property
    def known_packages(self) -> frozenset[str]:
        """Canonical names of every package the curated tables mention."""
        names = {canonicalize_name(p) for p, _ in self.mappings.values()}
        names.update(canonicalize_name(v) for v in self.corrections.values())
        return frozenset(names)

    # learned store ---------------------------------------------------------

    @property
    def learned(self) -> tuple[LearnedMapping, ...]:
        return tuple(self._learned)

    def learn_mapping(self, import_name: str, package: str, evidence: Evidence | None) -> None:
        if not isinstance(evidence, Evidence):
            raise ValueError("a learned mapping needs PyPI or sandbox evidence")
        if not import_name or not package:
            raise ValueError("import name and package must be non-empty")
        with self._lock:
            if self._learned_index.get(import_name) == package:
                return
            entry = LearnedMapping(import_name, package, evidence)
            self._learned.append(entry)
            self._learned_index[import_name] = package
            if self.persist_learned and self.learned_path is not None:
                self._write_learned()

    def clear_learned(self) -> None:
        with self._lock:
            self._learned.clear()
            self._learned_index.clear()

    def _write_learned(self) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "entries": [
                {"import": e.import_name, "package": e.package, "evidence": e.evidence.value,
                 "source": "runtime-learned"}
                for e in self._learned
            ],
        }
        assert self.learned_path is not None
        self.learned_path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    # misc ------------------------------------------------------------------

    def with_cooccurrence(self, table: CooccurrenceTable) -> KnowledgeBase:
        """Copy of this KB using ``table`` for co-installation scores and an empty learned store."""
        return KnowledgeBase(
            mappings=self.mappings, corrections=self.corrections, constraints=self.constraints,
            error_rules=self.error_rules, system_only=self.system_only, apt_map=self.apt_map,
            compat_map=self.compat_map, templates=self.templates, heuristics=self.heuristics,
            cooccurrence=table, fallbacks=self.fallbacks, usage_patterns=self.usage_patterns,
            ecosystems=self.ecosystems, ecosystem_min_overlap=self.ecosystem_min_overlap,
            version_patterns=self.version_patterns, local_patterns=self.local_patterns,
            stdlib=self._stdlib, learned_path=self.learned_path, persist_learned=self.persist_learned,
        )

    def fingerprint(self) -> str:
        """Digest over every curated table; unchanged by resolution runs."""
        snapshot = [
            sorted(self.mappings.items()),
            sorted(self.corrections.items()),
            sorted(self.constraints.items()),
            [(r.id, r.category, r.pattern.pattern, r.capture, r.remedy.action, r.remedy.python,
              r.remedy.packages, sorted(r.remedy.by_capture.items())) for r in self.error_rules],
            sorted(self.system_only),
            sorted(self.apt_map.items()),
            sorted((k, sorted(v.items())) for k, v in self.compat_map.items()),
            [(t.name, sorted(t.triggers), t.pythons, t.pins) for t in self.templates],
            [(h.package, h.spec, h.python_min, h.python_max, sorted(h.co_imports)) for h in self.heuristics],
            self.cooccurrence.to_json(),
            sorted(self.fallbacks.items()),
            [(u.import_name, u.call_pattern.pattern, u.package) for u in self.usage_patterns],
            [(e.name, sorted(e.triggers)) for e in self.ecosystems],
            self.ecosystem_min_overlap,
            [(v.name, v.pattern.pattern, v.min_version, v.max_version) for v in self.version_patterns],
            [p.pattern for p in self.local_patterns],
            sorted((k, sorted(v)) for k, v in self._stdlib.items()),
        ]
        blob = json.dumps(snapshot, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


# loading -----------------------------------------------------------------


class _Doc:
    """Schema checks that report file and entry on failure."""

    def __init__(self, name: str, data: Any) -> None:
        self.name = name
        if not isinstance(data, dict):
            raise KBError(f"{name}: top level must be an object")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise KBError(f"{name}: unsupported schema_version {data.get('schema_version')!r}")
        self.data = data

    def entries(self) -> list[dict[str, Any]]:
        entries = self.data.get("entries")
        if not isinstance(entries, list):
            raise KBError(f"{self.name}: 'entries' must be a list")
        for i, e in enumerate(entries):
            if not isinstance(e, dict):
                raise KBError(f"{self.name}: entry {i} must be an object")
        return entries

    def fail(self, where: str, msg: str) -> KBError:
        return KBError(f"{self.name}: {where}: {msg}")

    def text(self, entry: dict[str, Any], key: str, where: str, *, optional: bool = False) -> str | None:
        value = entry.get(key)
        if value is None and optional:
            return None
        if not isinstance(value, str) or not value:
            raise self.fail(where, f"'{key}' must be a non-empty string")
        return value

    def strings(self, entry: dict[str, Any], key: str, where: str, *, allow_empty: bool = False) -> list[str]:
        value = entry.get(key, [] if allow_empty else None)
        if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
            raise self.fail(where, f"'{key}' must be a list of non-empty strings")
        if not value and not allow_empty:
            raise self.fail(where, f"'{key}' must not be empty")
        return value

    def regex(self, entry: dict[str, Any], key: str, where: str) -> re.Pattern[str]:
        source = self.text(entry, key, where)
        try:
            return re.compile(source)  # type: ignore[arg-type]
        except re.error as exc:
            raise self.fail(where, f"pattern does not compile: {exc}") from exc

    def python(self, entry: dict[str, Any], key: str, where: str, *, optional: bool = False) -> str | None:
        value = self.text(entry, key, where, optional=optional)
        if value is not None and not re.fullmatch(r"[23]\.\d+", value):
            raise self.fail(where, f"'{key}' is not an interpreter version: {value!r}")
        return value

    def version(self, value: Any, where: str) -> str:
        try:
            Version(str(value))
        except InvalidVersion as exc:
            raise self.fail(where, f"invalid version {value!r}") from exc
        return str(value)

    def spec(self, value: Any, where: str) -> str:
        try:
            SpecifierSet(str(value))
        except InvalidSpecifier as exc:
            raise self.fail(where, f"invalid version spec {value!r}") from exc
        return str(value)

    def source(self, entry: dict[str, Any], where: str) -> str:
        value = entry.get("source", "external-doc")
        if value not in SOURCES:
            raise self.fail(where, f"unknown source {value!r}")
        return value


class _Reader:
    def __init__(self, root: Any) -> None:
        self.root = root

    def _target(self, name: str) -> Any:
        target = self.root
        for part in name.split("/"):
            target = target.joinpath(part)
        return target

    def exists(self, name: str) -> bool:
        return self._target(name).is_file()

    def load(self, name: str) -> _Doc:
        target = self._target(name)
        if not target.is_file():
            raise KBError(f"{name}: required KB file is missing")
        try:
            data = json.loads(target.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise KBError(f"{name}: malformed JSON: {exc}") from exc
        return _Doc(name, data)


def _bundled_root() -> Any:
    return resources.files("depcascade").joinpath("data").joinpath("kb")


def load_kb(
    path: Path | str | None = None,
    *,
    persist_learned: bool = False,
    load_learned: bool = False,
) -> KnowledgeBase:
    """Load and validate a KB directory (the bundled seed KB by default).

    The learned file is optional; its entries are only loaded when
    ``load_learned`` is set, since each evaluation run starts clean.
    """
    root = _bundled_root() if path is None else Path(path)
    if path is not None and not Path(path).is_dir():
        raise KBError(f"{path}: KB directory not found")
    r = _Reader(root)

    doc = r.load("mappings.json")
    mappings: dict[str, tuple[str, str]] = {}
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('import')!r})"
        imp = doc.text(e, "import", where)
        if imp in mappings:
            raise doc.fail(where, "duplicate import")
        mappings[imp] = (doc.text(e, "package", where), doc.text(e, "domain", where))  # type: ignore[assignment]
        doc.source(e, where)

    doc = r.load("corrections.json")
    corrections: dict[str, str] = {}
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('name')!r})"
        corrections[doc.text(e, "name", where)] = doc.text(e, "correct", where)  # type: ignore[index]
        doc.source(e, where)
    folded = {canonicalize_name(k): v for k, v in corrections.items()}
    for name, target in corrections.items():
        # idempotence: a target must be a fixed point of the table
        if corrections.get(target, folded.get(canonicalize_name(target), target)) != target:
            raise doc.fail(repr(name), f"correction target {target!r} is itself corrected")

    doc = r.load("constraints.json")
    constraints: dict[tuple[str, str], str] = {}
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('package')!r})"
        key = (canonicalize_name(doc.text(e, "package", where)), doc.python(e, "python", where))
        constraints[key] = doc.spec(e.get("spec"), where)  # type: ignore[index]

    doc = r.load("error_patterns.json")
    rules: list[ErrorRule] = []
    for i, e in enumerate(doc.entries()):
        rid = doc.text(e, "id", f"entry {i}")
        where = f"rule {rid!r}"
        pattern = doc.regex(e, "pattern", where)
        remedy_doc = e.get("remedy")
        if not isinstance(remedy_doc, dict) or remedy_doc.get("action") not in REMEDY_ACTIONS:
            raise doc.fail(where, "remedy.action must be one of " + ", ".join(sorted(REMEDY_ACTIONS)))
        action = remedy_doc["action"]
        python = None
        if action == "force_python":
            python = doc.python(remedy_doc, "python", where)
        packages = tuple(doc.strings(remedy_doc, "packages", where, allow_empty=True))
        by_capture_raw = remedy_doc.get("by_capture", {})
        if not isinstance(by_capture_raw, dict):
            raise doc.fail(where, "remedy.by_capture must be an object")
        by_capture = {k: tuple(doc.strings(by_capture_raw, k, where)) for k in by_capture_raw}
        if action == "apt" and not packages and not by_capture:
            raise doc.fail(where, "apt remedy lists no packages")
        capture = doc.text(e, "capture", where, optional=True)
        if capture is not None and pattern.groups == 0:
            raise doc.fail(where, "capture named but pattern has no group")
        rules.append(ErrorRule(rid, doc.text(e, "category", where), pattern, capture,  # type: ignore[arg-type]
                               Remedy(action, python, packages, MappingProxyType(by_capture))))
    if len({r_.id for r_ in rules}) != len(rules):
        raise KBError("error_patterns.json: duplicate rule id")

    doc = r.load("system_only.json")
    system_only = frozenset(
        doc.text(e, "import", f"entry {i}") for i, e in enumerate(doc.entries())  # type: ignore[misc]
    )

    doc = r.load("apt_map.json")
    apt_map = {}
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('package')!r})"
        apt_map[canonicalize_name(doc.text(e, "package", where))] = tuple(doc.strings(e, "apt", where))  # type: ignore[arg-type]
        doc.source(e, where)

    doc = r.load("compat_map.json")
    compat: dict[str, dict[str, str]] = {}
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('package')!r})"
        pkg = canonicalize_name(doc.text(e, "package", where))  # type: ignore[arg-type]
        pins = e.get("pins")
        if not isinstance(pins, dict) or not pins:
            raise doc.fail(where, "'pins' must be a non-empty object")
        for py, ver in pins.items():
            doc.python({"python": py}, "python", where)
            doc.version(ver, where)
        compat[pkg] = dict(pins)

    doc = r.load("templates.json")
    templates = []
    for i, e in enumerate(doc.entries()):
        name = doc.text(e, "name", f"entry {i}")
        where = f"template {name!r}"
        pins_raw = e.get("pins")
        if not isinstance(pins_raw, list) or not pins_raw:
            raise doc.fail(where, "pinned set must be non-empty")
        pins = []
        for p in pins_raw:
            if not (isinstance(p, list) and len(p) == 2 and isinstance(p[0], str) and p[0]):
                raise doc.fail(where, f"pin {p!r} must be [package, version]")
            pins.append((p[0], doc.version(p[1], where)))
        pythons = tuple(doc.python({"python": v}, "python", where) for v in doc.strings(e, "python", where))
        templates.append(EcosystemTemplate(name, frozenset(doc.strings(e, "triggers", where)),  # type: ignore[arg-type]
                                           pythons, tuple(pins), doc.source(e, where)))  # type: ignore[arg-type]

    doc = r.load("heuristics.json")
    heuristics = []
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('package')!r})"
        heuristics.append(HeuristicRule(
            package=doc.text(e, "package", where),  # type: ignore[arg-type]
            spec=doc.spec(e.get("spec"), where),
            python_min=doc.python(e, "python_min", where, optional=True),
            python_max=doc.python(e, "python_max", where, optional=True),
            co_imports=frozenset(doc.strings(e, "co_imports", where, allow_empty=True)),
            source=doc.source(e, where),
        ))

    doc = r.load("cooccurrence.json")
    try:
        cooccurrence = CooccurrenceTable.from_json(doc.data)
    except (KeyError, TypeError, ValueError) as exc:
        raise KBError(f"cooccurrence.json: malformed table: {exc}") from exc

    doc = r.load("fallbacks.json")
    fallbacks = {}
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('package')!r})"
        chain = tuple(doc.version(v, where) for v in doc.strings(e, "chain", where))
        if len(set(chain)) != len(chain):
            raise doc.fail(where, "fallback chain repeats a version")
        fallbacks[canonicalize_name(doc.text(e, "package", where))] = chain  # type: ignore[arg-type]

    doc = r.load("usage_patterns.json")
    usage = []
    for i, e in enumerate(doc.entries()):
        where = f"entry {i} ({e.get('import')!r})"
        usage.append(UsagePattern(doc.text(e, "import", where), doc.regex(e, "call_pattern", where),  # type: ignore[arg-type]
                                  doc.text(e, "package", where)))  # type: ignore[arg-type]

    doc = r.load("ecosystems.json")
    min_overlap = doc.data.get("min_overlap", 2)
    if not isinstance(min_overlap, int) or min_overlap < 1:
        raise KBError("ecosystems.json: 'min_overlap' must be a positive integer")
    ecosystems = tuple(
        Ecosystem(doc.text(e, "name", f"entry {i}"), frozenset(doc.strings(e, "triggers", f"entry {i}")))  # type: ignore[arg-type]
        for i, e in enumerate(doc.entries())
    )

    doc = r.load("version_patterns.json")
    vpatterns = []
    for i, e in enumerate(doc.entries()):
        name = doc.text(e, "name", f"entry {i}")
        where = f"pattern {name!r}"
        lo = doc.python(e, "min", where, optional=True)
        hi = doc.python(e, "max", where, optional=True)
        if lo is None and hi is None:
            raise doc.fail(where, "needs 'min' or 'max'")
        vpatterns.append(VersionPattern(name, doc.regex(e, "pattern", where), lo, hi))  # type: ignore[arg-type]

    doc = r.load("local_patterns.json")
    local = tuple(doc.regex(e, "pattern", f"entry {i}") for i, e in enumerate(doc.entries()))

    stdlib: dict[str, frozenset[str]] = {}
    for version in SHIPPED_PYTHONS:
        doc = r.load(f"stdlib/{version}.json")
        if doc.data.get("python") != version:
            raise KBError(f"{doc.name}: 'python' must be {version!r}")
        stdlib[version] = frozenset(doc.strings(doc.data, "modules", "modules")) | _SHIMS
    for imp in mappings:
        if any(imp in names for names in stdlib.values()) and imp not in _py2_backports(stdlib):
            raise KBError(f"mappings.json: {imp!r} is a stdlib module on every shipped interpreter")

    learned_path = Path(path) / LEARNED_FILE if path is not None else None
    kb = KnowledgeBase(
        mappings=mappings, corrections=corrections, constraints=constraints, error_rules=tuple(rules),
        system_only=system_only, apt_map=apt_map, compat_map=compat, templates=tuple(templates),
        heuristics=tuple(heuristics), cooccurrence=cooccurrence, fallbacks=fallbacks,
        usage_patterns=tuple(usage), ecosystems=ecosystems, ecosystem_min_overlap=min_overlap,
        version_patterns=tuple(vpatterns), local_patterns=local, stdlib=stdlib,
        learned_path=learned_path, persist_learned=persist_learned,
    )
    if load_learned and r.exists(LEARNED_FILE):
        doc = r.load(LEARNED_FILE)
        for i, e in enumerate(doc.entries()):
            where = f"entry {i}"
            try:
                evidence = Evidence(e.get("evidence"))
            except ValueError as exc:
                raise doc.fail(where, "evidence must be pypi-confirmed or build-success") from exc
            kb._learned.append(LearnedMapping(doc.text(e, "import", where), doc.text(e, "package", where), evidence))  # type: ignore[arg-type]
            kb._learned_index[kb._learned[-1].import_name] = kb._learned[-1].package
    return kb


def _py2_backports(stdlib: Mapping[str, frozenset[str]]) -> frozenset[str]:
    # names that are stdlib somewhere but need a pip backport on older interpreters
    every = frozenset.intersection(*stdlib.values())
    return frozenset().union(*stdlib.values()) - every

