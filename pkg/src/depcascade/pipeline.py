"""One snippet from source text to a validated environment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .cascade import CascadeFlags, build_context, resolve
from .ingest import Snippet, extract_imports
from .kb import Evidence, KnowledgeBase, is_placeholder
from .memory import SessionMemory
from .plan import ResolutionPlan
from .pypi import PackageNotFound
from .sandbox import (
    Budget,
    EnvironmentSpec,
    ExecutionOutcome,
    OutcomeCategory,
    build_and_run,
    repair_loop,
)

logger = logging.getLogger(__name__)

__all__ = ["SnippetRecord", "Resolver"]

# failures by category, for the report taxonomy
TAXONOMY = {
    OutcomeCategory.BUILD_FAILURE: "build/c-extension",
    OutcomeCategory.IMPORT_FAILURE: "unresolvable-import",
    OutcomeCategory.TIMEOUT: "timeout",
    OutcomeCategory.RUNTIME_PASS: "system/platform",
    OutcomeCategory.SYSTEM_ONLY: "system/platform",
}


@dataclass
class SnippetRecord:
    snippet_id: str
    category: OutcomeCategory
    plan: ResolutionPlan | None
    level: int | None
    confidence: int
    attempts: int
    duration_s: float
    llm_calls: int
    trace: dict[str, Any] = field(default_factory=dict)
    full_cascade: bool = True  # False when an exact session match was reused

    @property
    def success(self) -> bool:
        return self.category is OutcomeCategory.SUCCESS

    def to_dict(self) -> dict[str, Any]:
        return {
            "snippet": self.snippet_id,
            "category": self.category.value,
            "success": self.success,
            "level": self.level,
            "confidence": self.confidence,
            "attempts": self.attempts,
            "duration_s": round(self.duration_s, 6),
            "llm_calls": self.llm_calls,
            "plan": self.plan.to_dict() if self.plan is not None else None,
            "full_cascade": self.full_cascade,
            "trace": self.trace,
        }


class Resolver:
    """Cascade, repair loop, and session bookkeeping for one evaluation run."""

    def __init__(
        self,
        kb: KnowledgeBase,
        backend: Any,
        *,
        pypi: Any = None,
        llm: Any = None,
        flags: CascadeFlags | None = None,
        budget: Budget | None = None,
        memory: SessionMemory | None = None,
        validation_timeout_s: float = 60.0,
        log_root: Path | None = None,
        python_override: str | None = None,
    ) -> None:
        self.kb = kb
        self.backend = backend
        self.pypi = pypi
        self.llm = llm
        self.flags = flags or CascadeFlags()
        self.budget = budget or Budget()
        self.memory = memory if memory is not None else SessionMemory(kb)
        self.validation_timeout_s = validation_timeout_s
        self.log_root = log_root
        self.python_override = python_override

    def _context(self, snippet: Snippet, local_names: frozenset[str], python: str | None = None):
        memory = self.memory if self.flags.memory_enabled else None
        return build_context(snippet, self.kb, memory=memory, pypi=self.pypi, flags=self.flags,
                             llm=self.llm, local_names=local_names,
                             python_override=python or self.python_override)

    def _validator(self, snippet: Snippet):
        quick = Budget(
            per_build_timeout_s=min(self.validation_timeout_s, self.budget.per_build_timeout_s),
            max_retries=1,
            total_timeout_s=min(self.validation_timeout_s, self.budget.per_build_timeout_s),
        )

        def check(plan: ResolutionPlan) -> bool:
            out = build_and_run(EnvironmentSpec.from_plan(plan), snippet, quick, self.backend, self.kb,
                                build_only=True)
            return out.category is OutcomeCategory.SUCCESS

        return check

    def _learn(self, renames: list[tuple[str, str]]) -> None:
        for import_name, package in renames:
            if self.pypi is not None:
                try:
                    meta = self.pypi.get_metadata(package)
                except (PackageNotFound, OSError):
                    continue
                if is_placeholder(meta.release_count):
                    continue
            self.kb.learn_mapping(import_name, package, Evidence.BUILD_SUCCESS)

    def resolve_snippet(self, snippet: Snippet, local_names: frozenset[str] = frozenset()) -> SnippetRecord:
        calls_before = self.llm.calls if self.llm is not None else 0
        ctx = self._context(snippet, local_names)
        result = resolve(ctx)
        trace = result.trace

        if result.plan is None:
            calls = (self.llm.calls if self.llm is not None else 0) - calls_before
            return SnippetRecord(snippet.id, OutcomeCategory.IMPORT_FAILURE, None, None, 0, 0, 0.0,
                                 calls, trace.to_dict(), full_cascade=trace.exact_reuse is None)

        unfixable = bool(trace.unfixability and trace.unfixability.unfixable)
        if trace.exact_reuse is not None:
            self.memory.note_hit(trace.exact_reuse)

        def replan(python: str) -> ResolutionPlan | None:
            return resolve(self._context(snippet, local_names, python)).plan

        import_lines = frozenset(r.line for r in extract_imports(snippet.source_text))
        log_dir = self.log_root / _safe(snippet.id) if self.log_root is not None else None
        repair = repair_loop(result.plan, snippet, self.budget, self.kb, self.backend,
                             packages=ctx.package_map(), index=self.pypi, replan=replan,
                             build_only=unfixable, import_lines=import_lines, log_dir=log_dir)
        outcome = repair.outcome
        if unfixable and outcome.category is OutcomeCategory.SUCCESS:
            outcome = replace(outcome, category=OutcomeCategory.SYSTEM_ONLY)
        if outcome.category in (OutcomeCategory.SUCCESS, OutcomeCategory.RUNTIME_PASS):
            self._learn(repair.renames)

        if self.flags.memory_enabled:
            self._remember(snippet, ctx, repair.plan, outcome, reused=trace.exact_reuse is not None
                           and repair.plan == result.plan)

        final = repair.plan
        level = final.level
        calls = (self.llm.calls if self.llm is not None else 0) - calls_before
        return SnippetRecord(
            snippet.id, outcome.category, final, level, final.confidence, repair.attempts,
            repair.elapsed_s, calls, trace.to_dict(), full_cascade=trace.exact_reuse is None,
        )

    def _remember(self, snippet: Snippet, ctx: Any, plan: ResolutionPlan, outcome: ExecutionOutcome,
                  reused: bool) -> None:
        if reused and outcome.category is OutcomeCategory.SUCCESS:
            return
        shortcut = self.memory.record_outcome(snippet.id, ctx.import_names, ctx.package_map(), plan, outcome)
        if shortcut is not None:
            self.memory.validate_shortcut(shortcut, self._validator(snippet))


def _safe(ident: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in ident)
