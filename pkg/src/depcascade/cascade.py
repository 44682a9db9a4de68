"""The six-level confidence cascade.

Levels run in order and stop as soon as every required package holds a
pin. Version constraints and heuristics double as validators: a pin from
any level that violates an applicable rule is discarded and the package is
left for a later level, with the conflict recorded in the trace.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from packaging.specifiers import SpecifierSet
from packaging.utils import canonicalize_name
from packaging.version import InvalidVersion, Version

from .analysis import (
    Py2Verdict,
    VersionEvidence,
    detect_ecosystems,
    detect_python2,
    disambiguate_usage,
    infer_implicit_version,
)
from .ingest import ImportSet, Snippet, candidate_imports, extract_imports
from .kb import is_placeholder
from .llm import MAX_CANDIDATES, build_prompt
from .memory import Exact, Miss, Partial
from .plan import LEVEL_NAMES, Pin, ResolutionPlan, assign_confidence
from .pypi import IndexNetworkError, PackageMetadata, PackageNotFound
from .versions import DEFAULT_PYTHON, SHIPPED_PYTHONS, in_bounds, pyver_key

if TYPE_CHECKING:
    from .kb import KnowledgeBase
    from .llm import LlmClient
    from .memory import SessionMemory, Shortcut
    from .pypi import PackageIndex

logger = logging.getLogger(__name__)

__all__ = [
    "CascadeFlags",
    "ResolutionContext",
    "Requirement",
    "UnfixabilityVerdict",
    "Trace",
    "Conflict",
    "CascadeResult",
    "build_context",
    "resolve",
    "select_python",
    "estimate_unfixability",
    "assign_confidence",
]


@dataclass(frozen=True)
class CascadeFlags:
    disabled_levels: frozenset[int] = frozenset()
    llm_enabled: bool = True
    unfixable_threshold: float = 0.5
    cooccurrence_floor: float = 0.3
    antipattern_threshold: int = 3

    def enabled(self, level: int) -> bool:
        if level == 6 and not self.llm_enabled:
            return False
        return level not in self.disabled_levels

    @property
    def memory_enabled(self) -> bool:
        return 1 not in self.disabled_levels


@dataclass(frozen=True)
class Requirement:
    import_name: str
    package: str
    how: str  # usage | mapping | learned | name

    @property
    def key(self) -> str:
        return canonicalize_name(self.package)


@dataclass(frozen=True)
class UnfixabilityVerdict:
    unfixable: bool
    dominant_system_only_fraction: float


@dataclass
class ResolutionContext:
    snippet: Snippet
    import_set: ImportSet
    requirements: tuple[Requirement, ...]
    unresolvable: tuple[str, ...]  # imports with no index entry
    skipped: tuple[tuple[str, str], ...]  # (import, reason) filtered as placeholders etc.
    py2_verdict: Py2Verdict
    version_evidence: VersionEvidence
    ecosystems: tuple[str, ...]
    kb: KnowledgeBase
    memory: SessionMemory | None
    pypi: PackageIndex | None
    flags: CascadeFlags
    llm: LlmClient | None = None
    python_override: str | None = None
    metadata: dict[str, PackageMetadata | None] = field(default_factory=dict)

    @property
    def system_only_imports(self) -> frozenset[str]:
        return self.import_set.system_only

    @property
    def import_names(self) -> frozenset[str]:
        return self.import_set.as_set()

    def package_map(self) -> dict[str, str]:
        return {r.import_name: r.package for r in self.requirements}


@dataclass(frozen=True)
class Conflict:
    package: str
    version: str
    level: int
    rule: str


@dataclass
class Trace:
    visited: list[int] = field(default_factory=list)
    contributions: dict[int, list[str]] = field(default_factory=dict)
    conflicts: list[Conflict] = field(default_factory=list)
    vetoed: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    unpinned_after_deterministic: tuple[str, ...] = ()
    llm_calls: int = 0
    exact_reuse: Shortcut | None = None
    partial_from: Shortcut | None = None
    unfixability: UnfixabilityVerdict | None = None
    python_reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "visited": list(self.visited),
            "contributions": {str(k): list(v) for k, v in sorted(self.contributions.items())},
            "conflicts": [[c.package, c.version, c.level, c.rule] for c in self.conflicts],
            "vetoed": list(self.vetoed),
            "notes": list(self.notes),
            "unpinned_after_deterministic": list(self.unpinned_after_deterministic),
            "llm_calls": self.llm_calls,
            "python": self.python_reason,
        }


@dataclass
class CascadeResult:
    plan: ResolutionPlan | None
    trace: Trace

    @property
    def resolved(self) -> bool:
        return self.plan is not None


# context -----------------------------------------------------------------


def select_python(
    verdict: Py2Verdict,
    evidence: VersionEvidence,
    hint: str | None = None,
    override: str | None = None,
) -> tuple[str, str]:
    """Interpreter for a snippet, with the reason it was chosen."""
    if verdict.forced_py2:
        return "2.7", "python-2 indicators"
    if override is not None:
        return override, "override"
    if evidence.has_bounds:
        fitting = [v for v in SHIPPED_PYTHONS if in_bounds(v, evidence.min_version, evidence.max_version)]
        py3 = [v for v in fitting if pyver_key(v) >= (3, 0)]
        if py3:
            return min(py3, key=pyver_key), "version evidence"
        if fitting:
            return fitting[0], "version evidence"
    if hint is not None:
        return hint, "session hint"
    return DEFAULT_PYTHON, "default"


def estimate_unfixability(import_set: ImportSet, threshold: float = 0.5) -> UnfixabilityVerdict:
    total = len(import_set)
    if total == 0:
        return UnfixabilityVerdict(False, 0.0)
    fraction = len(import_set.system_only) / total
    return UnfixabilityVerdict(fraction > threshold, fraction)


def _metadata(ctx_cache: dict[str, PackageMetadata | None], pypi: PackageIndex | None, package: str
              ) -> PackageMetadata | None | PackageNotFound:
    key = canonicalize_name(package)
    if key in ctx_cache:
        return ctx_cache[key]
    if pypi is None:
        return None
    try:
        meta = pypi.get_metadata(package)
    except PackageNotFound as exc:
        return exc
    except IndexNetworkError as exc:
        logger.warning("index lookup for %s failed: %s", package, exc)
        meta = None
    ctx_cache[key] = meta
    return meta


def build_context(
    snippet: Snippet,
    kb: KnowledgeBase,
    *,
    memory: SessionMemory | None = None,
    pypi: PackageIndex | None = None,
    flags: CascadeFlags | None = None,
    llm: LlmClient | None = None,
    local_names: frozenset[str] = frozenset(),
    python_override: str | None = None,
) -> ResolutionContext:
    flags = flags or CascadeFlags()
    verdict = detect_python2(snippet.source_text)
    evidence = infer_implicit_version(snippet.source_text, kb)
    python, _ = select_python(verdict, evidence, override=python_override)
    import_set = candidate_imports(extract_imports(snippet.source_text), python, kb, local_names)

    requirements: list[Requirement] = []
    unresolvable: list[str] = []
    skipped: list[tuple[str, str]] = []
    cache: dict[str, PackageMetadata | None] = {}
    seen: set[str] = set()
    for name in import_set.installable:
        package = disambiguate_usage(snippet.source_text, name, kb)
        how = "usage"
        if package is None:
            learned = kb.learned_package(name)
            package, how = (learned, "learned") if learned else (kb.map_import(name), "mapping")
        if package is None:
            package, how = name, "name"
        package = kb.correct_name(package)
        meta = _metadata(cache, pypi, package)
        if isinstance(meta, PackageNotFound):
            if how == "name":
                unresolvable.append(name)
                continue
            # curated names are trusted when the index has no fixture for them
            meta = None
        if meta is not None and is_placeholder(meta.release_count):
            skipped.append((name, "placeholder"))
            continue
        key = canonicalize_name(package)
        if key in seen:
            continue
        seen.add(key)
        requirements.append(Requirement(name, package, how))
        cache[key] = meta
    ecosystems = tuple(detect_ecosystems(import_set.names, kb))
    return ResolutionContext(
        snippet=snippet, import_set=import_set, requirements=tuple(requirements),
        unresolvable=tuple(unresolvable), skipped=tuple(skipped), py2_verdict=verdict,
        version_evidence=evidence, ecosystems=ecosystems, kb=kb, memory=memory, pypi=pypi,
        flags=flags, llm=llm, python_override=python_override, metadata=cache,
    )


# resolution --------------------------------------------------------------


@dataclass
class _State:
    ctx: ResolutionContext
    python: str
    trace: Trace
    pins: dict[str, tuple[Pin, int, str]] = field(default_factory=dict)

    def unpinned(self) -> list[Requirement]:
        return [r for r in self.ctx.requirements if r.key not in self.pins]

    def complete(self) -> bool:
        return not self.unpinned()

    def rules_for(self, package: str) -> list[tuple[str, str]]:
        """Applicable (spec, label) pairs for ``package`` on the chosen interpreter."""
        key = canonicalize_name(package)
        out = []
        constraint = self.ctx.kb.version_constraint(package, self.python)
        if constraint:
            out.append((constraint, f"constraint {package}{constraint} on {self.python}"))
        for rule in self.ctx.kb.heuristics:
            if canonicalize_name(rule.package) == key and rule.applies(self.python, self.ctx.import_names):
                out.append((rule.spec, f"heuristic {rule.package}{rule.spec}"))
        return out

    def specifier(self, package: str) -> SpecifierSet:
        spec = SpecifierSet()
        for s, _ in self.rules_for(package):
            spec &= SpecifierSet(s)
        return spec

    def accept(self, req: Requirement, version: str, level: int, note: str) -> bool:
        try:
            parsed = Version(version)
        except InvalidVersion:
            self.trace.conflicts.append(Conflict(req.package, version, level, "invalid version"))
            return False
        for spec, label in self.rules_for(req.package):
            if not SpecifierSet(spec).contains(parsed, prereleases=True):
                self.trace.conflicts.append(Conflict(req.package, version, level, label))
                return False
        meta = self.ctx.metadata.get(req.key)
        if meta is not None:
            if version not in meta.versions:
                self.trace.conflicts.append(Conflict(req.package, version, level, "not on index"))
                return False
            if not meta.supports(version, self.python):
                self.trace.conflicts.append(Conflict(req.package, version, level, f"requires-python excludes {self.python}"))
                return False
        self.pins[req.key] = (Pin(req.package, version), level, note)
        self.trace.contributions.setdefault(level, []).append(req.package)
        return True

    def candidates(self, req: Requirement) -> list[str]:
        meta = self.ctx.metadata.get(req.key)
        if meta is None:
            return []
        spec = self.specifier(req.package)
        return [v for v in meta.candidates(self.python) if spec.contains(v, prereleases=True)]


def _level_session(state: _State, lookup: Any) -> None:
    if isinstance(lookup, Partial):
        state.trace.partial_from = lookup.shortcut
        if lookup.python_version != state.python:
            return
        by_key = {p.key: p for p in lookup.pins}
        for req in state.unpinned():
            pin = by_key.get(req.key)
            if pin is not None:
                state.accept(req, pin.version, 1, f"session hint (jaccard {lookup.similarity:.2f})")


def _level_compat(state: _State) -> None:
    for req in state.unpinned():
        version = state.ctx.kb.compat_pin(req.package, state.python)
        if version is not None:
            state.accept(req, version, 2, f"compat map for Python {state.python}")


def _level_templates(state: _State) -> None:
    names = state.ctx.import_names
    for template in state.ctx.kb.templates:
        if state.python not in template.pythons or not template.triggers <= names:
            continue
        pins = {canonicalize_name(p): v for p, v in template.pins}
        for req in state.unpinned():
            if req.key in pins:
                state.accept(req, pins[req.key], 3, f"template {template.name}")


def _level_cooccurrence(state: _State) -> None:
    table = state.ctx.kb.cooccurrence
    if table.is_empty():
        return
    memory = state.ctx.memory if state.ctx.flags.memory_enabled else None
    progress = True
    while progress:
        progress = False
        for req in state.unpinned():
            if memory is not None and memory.vetoed(req.package, state.ctx.flags.antipattern_threshold):
                if req.package not in state.trace.vetoed:
                    state.trace.vetoed.append(req.package)
                continue
            votes: dict[str, int] = {}
            for key, (pin, _, _) in sorted(state.pins.items()):
                if table.score(pin.package, req.package) < state.ctx.flags.cooccurrence_floor:
                    continue
                for version, n in table.versions_with(req.package, pin.package).items():
                    votes[version] = votes.get(version, 0) + n
            ranked = sorted(votes.items(), key=lambda kv: (kv[1], _vkey(kv[0])), reverse=True)
            for version, n in ranked:
                if state.accept(req, version, 4, f"co-installed {n}x with pinned packages"):
                    progress = True
                    break


def _vkey(v: str) -> Version:
    try:
        return Version(v)
    except InvalidVersion:
        return Version("0")


def _level_heuristics(state: _State) -> None:
    for req in state.unpinned():
        rules = state.rules_for(req.package)
        if not rules:
            continue
        exact = [s[2:] for s, _ in rules if s.startswith("==") and "*" not in s]
        labels = "; ".join(label for _, label in rules)
        if exact and state.ctx.metadata.get(req.key) is None:
            state.accept(req, exact[0], 5, labels)
            continue
        for version in state.candidates(req):
            if state.accept(req, version, 5, labels):
                break


def _level_llm(state: _State) -> None:
    ctx = state.ctx
    if ctx.llm is None:
        state.trace.notes.append("no LLM endpoint configured")
        return
    pending = state.unpinned()
    candidates = {r.package: state.candidates(r)[:MAX_CANDIDATES] for r in pending}
    asked = [r.package for r in pending if candidates[r.package]]
    if not asked:
        state.trace.notes.append("no candidate versions for the LLM level")
        return
    tips = [t.text for t in ctx.memory.tips] if ctx.memory is not None and ctx.flags.memory_enabled else []
    prompt = build_prompt(ctx.import_names, state.python, asked, candidates, tips, ctx.ecosystems)
    before = ctx.llm.calls
    proposal = ctx.llm.select(prompt)
    state.trace.llm_calls += ctx.llm.calls - before
    if proposal is None:
        state.trace.notes.append("LLM gave no usable answer")
        return
    by_key = {r.key: r for r in pending}
    for package, version in proposal.pins:
        req = by_key.get(canonicalize_name(package))
        if req is not None and req.key not in state.pins:
            state.accept(req, version, 6, "llm selection")


def _reuse_blocked(ctx: ResolutionContext, plan: ResolutionPlan) -> str | None:
    if ctx.py2_verdict.forced_py2 and plan.python_version != "2.7":
        return "python-2 indicators contradict the stored interpreter"
    ev = ctx.version_evidence
    if ev.has_bounds and not in_bounds(plan.python_version, ev.min_version, ev.max_version):
        return "version evidence contradicts the stored interpreter"
    if any(plan.pin_for(r.package) is None for r in ctx.requirements):
        return "stored plan does not cover every package"
    return None


def _finish(state: _State) -> ResolutionPlan:
    ctx = state.ctx
    ordered = [state.pins[r.key] for r in ctx.requirements]
    levels = [lvl for _, lvl, _ in ordered]
    level = max(levels) if levels else None
    apt: list[str] = []
    for pin, _, _ in ordered:
        for a in ctx.kb.apt_dependencies(pin.package):
            if a not in apt:
                apt.append(a)
    rationale = tuple((pin.package, f"L{lvl} {LEVEL_NAMES[lvl]}: {note}") for pin, lvl, note in ordered)
    confidence = assign_confidence(level) if level is not None else 10
    return ResolutionPlan(state.python, tuple(p for p, _, _ in ordered), tuple(apt), confidence, level, rationale)


def resolve(ctx: ResolutionContext) -> CascadeResult:
    """Run levels 1 through 6 in order until every required package is pinned."""
    trace = Trace()
    trace.unfixability = estimate_unfixability(ctx.import_set, ctx.flags.unfixable_threshold)
    memory = ctx.memory if ctx.flags.memory_enabled else None

    lookup: Any = Miss()
    if memory is not None and ctx.flags.enabled(1) and ctx.requirements:
        lookup = memory.lookup(ctx.import_names)
        if isinstance(lookup, Exact):
            blocked = _reuse_blocked(ctx, lookup.plan)
            if blocked is None:
                trace.visited.append(1)
                trace.exact_reuse = lookup.shortcut
                trace.contributions[1] = [p.package for p in lookup.plan.pins]
                trace.python_reason = "session reuse"
                prior = lookup.plan
                plan = ResolutionPlan(prior.python_version, prior.pins, prior.apt_packages,
                                      assign_confidence(1), 1,
                                      tuple((p.package, f"L1 {LEVEL_NAMES[1]}: reused from {lookup.shortcut.snippet_id}")
                                            for p in prior.pins))
                return CascadeResult(plan, trace)
            trace.notes.append(f"exact reuse skipped: {blocked}")
            lookup = Partial(lookup.shortcut, 1.0, lookup.plan.python_version, lookup.plan.pins)

    hint = lookup.python_version if isinstance(lookup, Partial) else None
    python, reason = select_python(ctx.py2_verdict, ctx.version_evidence, hint, ctx.python_override)
    trace.python_reason = reason
    state = _State(ctx, python, trace)

    if ctx.unresolvable:
        trace.notes.append("no index entry for: " + ", ".join(ctx.unresolvable))
    for name, why in ctx.skipped:
        trace.notes.append(f"skipped {name}: {why}")

    if not ctx.requirements:
        plan = None if ctx.unresolvable else _finish(state)
        return CascadeResult(plan, trace)

    steps = [
        (1, lambda: _level_session(state, lookup)),
        (2, lambda: _level_compat(state)),
        (3, lambda: _level_templates(state)),
        (4, lambda: _level_cooccurrence(state)),
        (5, lambda: _level_heuristics(state)),
    ]
    for level, step in steps:
        if state.complete():
            break
        if not ctx.flags.enabled(level):
            continue
        trace.visited.append(level)
        step()
    trace.unpinned_after_deterministic = tuple(r.package for r in state.unpinned())
    if not state.complete() and ctx.flags.enabled(6):
        if trace.unfixability.unfixable:
            trace.notes.append("LLM skipped: system-only imports dominate")
        elif ctx.unresolvable:
            trace.notes.append("LLM skipped: some imports have no package")
        else:
            trace.visited.append(6)
            _level_llm(state)

    if not state.complete() or ctx.unresolvable:
        return CascadeResult(None, trace)
    return CascadeResult(_finish(state), trace)
