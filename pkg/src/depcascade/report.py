"""Multi-run batch evaluation and its metrics."""

from __future__ import annotations

import json
import logging
import random
import statistics
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .ingest import Snippet, sibling_modules
from .pipeline import TAXONOMY, Resolver, SnippetRecord
from .sandbox import BackendUnavailable, OutcomeCategory

logger = logging.getLogger(__name__)

__all__ = ["RunConfig", "RunReport", "run_batch", "aggregate", "summary_line", "render_text", "p90", "to_json"]

_PASS_LIKE = (OutcomeCategory.RUNTIME_PASS, OutcomeCategory.SYSTEM_ONLY)


@dataclass(frozen=True)
class RunConfig:
    runs: int = 10
    seed: int = 0
    ordering: str = "shuffled"  # or sequential

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.ordering not in ("shuffled", "sequential"):
            raise ValueError("ordering must be 'shuffled' or 'sequential'")


@dataclass
class RunReport:
    index: int
    seed: int
    records: list[SnippetRecord] = field(default_factory=list)
    valid: bool = True
    error: str | None = None

    @property
    def processed(self) -> int:
        return len(self.records)

    @property
    def resolved(self) -> int:
        return sum(r.success for r in self.records)

    @property
    def failed(self) -> int:
        return self.processed - self.resolved

    @property
    def runtime_pass(self) -> int:
        return sum(r.category in _PASS_LIKE for r in self.records)

    @property
    def cascade_evaluations(self) -> int:
        return sum(r.full_cascade for r in self.records)

    def to_dict(self) -> dict[str, Any]:
        taxonomy = {label: 0 for label in dict.fromkeys(TAXONOMY.values())}
        for r in self.records:
            if not r.success:
                taxonomy[TAXONOMY[r.category]] += 1
        return {
            "run": self.index,
            "seed": self.seed,
            "valid": self.valid,
            "error": self.error,
            "processed": self.processed,
            "resolved": self.resolved,
            "failed": self.failed,
            "runtime_pass": self.runtime_pass,
            "system_only": sum(r.category is OutcomeCategory.SYSTEM_ONLY for r in self.records),
            "cascade_evaluations": self.cascade_evaluations,
            "failure_taxonomy": taxonomy,
            "records": [r.to_dict() for r in self.records],
        }


def p90(values: Sequence[float]) -> float | None:
    """90th percentile, linear interpolation between closest ranks."""
    if not values:
        return None
    if len(values) == 1:
        return float(values[0])
    return statistics.quantiles(values, n=10, method="inclusive")[8]


def summary_line(resolved: Sequence[int], processed: int) -> str:
    mean = statistics.fmean(resolved)
    std = statistics.stdev(resolved) if len(resolved) > 1 else 0.0
    pct = 100.0 * mean / processed if processed else 0.0
    return f"{mean:.1f} ± {std:.1f} ({pct:.1f}%)"


def aggregate(runs: Sequence[RunReport]) -> dict[str, Any]:
    resolved = [r.resolved for r in runs]
    processed = runs[0].processed if runs else 0
    records = [rec for run in runs for rec in run.records]
    successes = [rec for rec in records if rec.success]
    times = sorted(rec.duration_s for rec in successes)
    taxonomy = {label: 0 for label in dict.fromkeys(TAXONOMY.values())}
    for rec in records:
        if not rec.success:
            taxonomy[TAXONOMY[rec.category]] += 1
    total = len(records)
    return {
        "runs": len(runs),
        "processed_per_run": processed,
        "resolved_mean": statistics.fmean(resolved) if resolved else 0.0,
        "resolved_std": statistics.stdev(resolved) if len(resolved) > 1 else 0.0,
        "summary": summary_line(resolved, processed) if resolved else "",
        "success_rate": len(successes) / total if total else 0.0,
        "median_resolution_s": statistics.median(times) if times else None,
        "p90_resolution_s": p90(times),
        "llm_calls_per_snippet": sum(rec.llm_calls for rec in records) / total if total else 0.0,
        "no_llm_success_rate": (sum(rec.llm_calls == 0 for rec in successes) / len(successes)
                                if successes else 0.0),
        "runtime_pass_total": sum(rec.category in _PASS_LIKE for rec in records),
        "failure_taxonomy": taxonomy,
        "cascade_evaluations_mean": (statistics.fmean(r.cascade_evaluations for r in runs) if runs else 0.0),
    }


def run_batch(
    snippets: Sequence[Snippet],
    resolver: Resolver,
    config: RunConfig,
    *,
    on_run_start: Callable[[int], None] | None = None,
) -> dict[str, Any]:
    """Evaluate ``snippets`` ``config.runs`` times, clearing all session state before each run."""
    runs: list[RunReport] = []
    valid = True
    for i in range(config.runs):
        order = list(snippets)
        if config.ordering == "shuffled":
            random.Random(config.seed + i).shuffle(order)
        resolver.memory.reset()
        if hasattr(resolver.backend, "reset"):
            resolver.backend.reset()
        if on_run_start is not None:
            on_run_start(i)
        assert resolver.memory.is_empty(), "session state leaked into a new run"
        run = RunReport(i, config.seed + i)
        try:
            for snippet in order:
                local = sibling_modules(snippet.origin_path) if snippet.origin_path else frozenset()
                run.records.append(resolver.resolve_snippet(snippet, local))
        except BackendUnavailable as exc:
            logger.error("run %d aborted: %s", i, exc)
            run.valid, run.error = False, str(exc)
            runs.append(run)
            valid = False
            break
        runs.append(run)
    return {
        "valid": valid,
        "config": {"runs": config.runs, "seed": config.seed, "ordering": config.ordering,
                   "disabled_levels": sorted(resolver.flags.disabled_levels),
                   "llm_enabled": resolver.flags.llm_enabled and resolver.llm is not None},
        "aggregate": aggregate(runs),
        "per_run": [r.to_dict() for r in runs],
    }


def to_json(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_text(report: dict[str, Any]) -> str:
    agg = report["aggregate"]

    def fmt(v: Any) -> str:
        return "n/a" if v is None else f"{v:.2f}"

    lines = [
        f"runs: {agg['runs']}  snippets per run: {agg['processed_per_run']}",
        f"resolved: {agg['summary']}",
        f"success rate: {100 * agg['success_rate']:.1f}%",
        f"median / p90 resolution (success): {fmt(agg['median_resolution_s'])} s / {fmt(agg['p90_resolution_s'])} s",
        f"LLM calls per snippet: {agg['llm_calls_per_snippet']:.2f}",
        f"no-LLM success rate: {100 * agg['no_llm_success_rate']:.1f}%",
        f"full cascade evaluations per run: {agg['cascade_evaluations_mean']:.1f}",
        "failures: " + ", ".join(f"{k} {v}" for k, v in agg["failure_taxonomy"].items()),
    ]
    if not report["valid"]:
        lines.append("REPORT INVALID: a run was aborted by a backend failure")
    return "\n".join(lines) + "\n"
