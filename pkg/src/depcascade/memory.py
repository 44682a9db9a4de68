"""Per-session cache of proven plans, tips and per-package failure counters.

Nothing here survives ``reset``; each evaluation run starts empty.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Union

from packaging.utils import canonicalize_name

from .plan import Pin, ResolutionPlan
from .sandbox import BackendUnavailable, ExecutionOutcome, OutcomeCategory
from .versions import base_image_for

if TYPE_CHECKING:
    from .kb import KnowledgeBase

logger = logging.getLogger(__name__)

__all__ = [
    "Shortcut",
    "Tip",
    "AntiPattern",
    "Exact",
    "Partial",
    "Miss",
    "SessionMemory",
    "jaccard",
    "SIMILARITY_THRESHOLD",
]

SIMILARITY_THRESHOLD = 0.5


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass
class Shortcut:
    import_set: frozenset[str]
    plan: ResolutionPlan
    packages: Mapping[str, str]  # import name -> package
    snippet_id: str
    seq: int
    validated: bool = False
    hit_count: int = 0
    runtime_pass: bool = False


@dataclass(frozen=True)
class Tip:
    text: str
    source: str
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("tip text must be non-empty")


@dataclass
class AntiPattern:
    package: str
    failure_count: int
    last_category: OutcomeCategory


@dataclass(frozen=True)
class Exact:
    shortcut: Shortcut

    @property
    def plan(self) -> ResolutionPlan:
        return self.shortcut.plan


@dataclass(frozen=True)
class Partial:
    shortcut: Shortcut
    similarity: float
    python_version: str
    pins: tuple[Pin, ...]


@dataclass(frozen=True)
class Miss:
    pass


Lookup = Union[Exact, Partial, Miss]


@dataclass
class SessionMemory:
    kb: KnowledgeBase | None = None
    threshold: float = SIMILARITY_THRESHOLD
    shortcuts: list[Shortcut] = field(default_factory=list)
    quarantine: list[Shortcut] = field(default_factory=list)
    tips: list[Tip] = field(default_factory=list)
    antipatterns: dict[str, AntiPattern] = field(default_factory=dict)
    _seq: int = 0
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def lookup(self, import_set: Iterable[str]) -> Lookup:
        query = frozenset(import_set)
        best: Shortcut | None = None
        best_key: tuple[float, int, int] | None = None
        for sc in self.shortcuts:
            if not sc.validated:
                continue
            key = (jaccard(query, sc.import_set), sc.hit_count, -sc.seq)
            if best_key is None or key > best_key:
                best, best_key = sc, key
        if best is None or best_key is None:
            return Miss()
        score = best_key[0]
        if score == 1.0:
            return Exact(best)
        if score >= self.threshold:
            shared = query & best.import_set
            keys = {canonicalize_name(best.packages[n]) for n in shared if n in best.packages}
            pins = tuple(p for p in best.plan.pins if p.key in keys)
            return Partial(best, score, best.plan.python_version, pins)
        return Miss()

    def note_hit(self, shortcut: Shortcut) -> None:
        with self._lock:
            shortcut.hit_count += 1

    def record_outcome(
        self,
        snippet_id: str,
        import_set: Iterable[str],
        packages: Mapping[str, str],
        plan: ResolutionPlan | None,
        outcome: ExecutionOutcome,
    ) -> Shortcut | None:
        """Store a shortcut for a working plan, or count failures against the blamed packages."""
        with self._lock:
            category = outcome.category
            if category in (OutcomeCategory.SUCCESS, OutcomeCategory.RUNTIME_PASS):
                if plan is None or plan.level is None:
                    return None
                names = frozenset(import_set)
                self._seq += 1
                shortcut = Shortcut(names, plan, dict(packages), snippet_id, self._seq,
                                    runtime_pass=category is OutcomeCategory.RUNTIME_PASS)
                self.shortcuts.append(shortcut)
                self.tips.extend(self._tips_from(snippet_id, plan))
                return shortcut
            for pkg in outcome.blamed:
                key = canonicalize_name(pkg)
                entry = self.antipatterns.get(key)
                if entry is None:
                    self.antipatterns[key] = AntiPattern(pkg, 1, category)
                else:
                    entry.failure_count += 1
                    entry.last_category = category
            return None

    def _tips_from(self, snippet_id: str, plan: ResolutionPlan) -> list[Tip]:
        tips = []
        image = base_image_for(plan.python_version)
        notes = dict(plan.rationale)
        for pin in plan.pins:
            apts = self.kb.apt_dependencies(pin.package) if self.kb is not None else []
            apts = [a for a in apts if a in plan.apt_packages]
            if apts:
                text = f"{pin.package} needed apt {', '.join(apts)} on base image {image}"
                tags = ("apt", pin.key)
            else:
                text = f"{pin.requirement} worked on Python {plan.python_version} ({notes.get(pin.package, 'resolved')})"
                tags = ("pin", pin.key)
            tip = Tip(text, snippet_id, tags)
            if all(t.text != text for t in self.tips):
                tips.append(tip)
        return tips

    def validate_shortcut(self, shortcut: Shortcut, executor: Callable[[ResolutionPlan], bool]) -> bool:
        """Run a build-only check; a failing shortcut is quarantined and never returned."""
        try:
            ok = executor(shortcut.plan)
        except BackendUnavailable as exc:
            logger.warning("shortcut for %s left unvalidated: %s", shortcut.snippet_id, exc)
            return False
        with self._lock:
            if ok:
                shortcut.validated = True
            else:
                shortcut.validated = False
                if shortcut in self.shortcuts:
                    self.shortcuts.remove(shortcut)
                self.quarantine.append(shortcut)
        return ok

    def vetoed(self, package: str, threshold: int) -> bool:
        entry = self.antipatterns.get(canonicalize_name(package))
        return entry is not None and entry.failure_count >= threshold

    def reset(self) -> None:
        with self._lock:
            self.shortcuts.clear()
            self.quarantine.clear()
            self.tips.clear()
            self.antipatterns.clear()
            self._seq = 0
            if self.kb is not None:
                self.kb.clear_learned()

    def is_empty(self) -> bool:
        learned = self.kb.learned if self.kb is not None else ()
        return not (self.shortcuts or self.quarantine or self.tips or self.antipatterns or learned)

    def snapshot(self) -> dict:
        return {
            "shortcuts": [
                {"snippet": s.snippet_id, "imports": sorted(s.import_set), "plan": s.plan.to_dict(),
                 "validated": s.validated, "hit_count": s.hit_count, "runtime_pass": s.runtime_pass}
                for s in self.shortcuts
            ],
            "quarantine": [s.snippet_id for s in self.quarantine],
            "tips": [{"text": t.text, "source": t.source, "tags": list(t.tags)} for t in self.tips],
            "antipatterns": {
                k: {"failure_count": a.failure_count, "last_category": a.last_category.value}
                for k, a in sorted(self.antipatterns.items())
            },
        }

    def dump(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
