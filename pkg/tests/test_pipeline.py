from __future__ import annotations

import statistics

import pytest
from conftest import snip

from depcascade.cascade import CascadeFlags
from depcascade.ingest import Snippet
from depcascade.pipeline import Resolver
from depcascade.report import RunConfig, aggregate, p90, render_text, run_batch, summary_line, to_json
from depcascade.sandbox import BackendUnavailable, Budget, MockBackend, OutcomeCategory


def trace(exc: str, line: int = 1) -> str:
    return f'Traceback (most recent call last):\n  File "<stdin>", line {line}, in <module>\n{exc}\n'


def make(kb, index, manifest=None, **kw):
    return Resolver(kb, MockBackend(manifest), pypi=index, **kw)


def test_success_record(kb, index):
    rec = make(kb, index).resolve_snippet(snip("import numpy\n", "a.py"))
    assert rec.category is OutcomeCategory.SUCCESS and rec.success
    assert rec.level == 2 and rec.confidence == 9 and rec.attempts == 1
    assert rec.duration_s == pytest.approx(1.5) and rec.full_cascade
    d = rec.to_dict()
    assert d["plan"]["pins"] == ["numpy==1.26.4"] and d["category"] == "success"


def test_unresolved_record(kb, index):
    rec = make(kb, index).resolve_snippet(snip("import nosuchthing\n"))
    assert rec.category is OutcomeCategory.IMPORT_FAILURE
    assert rec.plan is None and rec.confidence == 0 and rec.attempts == 0


def test_unfixable_snippet_is_system_only(kb, index):
    backend = MockBackend()
    resolver = Resolver(kb, backend, pypi=index)
    rec = resolver.resolve_snippet(snip("import gtk\nimport gobject\nimport numpy\n"))
    assert rec.category is OutcomeCategory.SYSTEM_ONLY
    assert [c[0] for c in backend.calls] == ["build"]  # build-only, never run


def test_runtime_pass_from_missing_data_file(kb, index):
    manifest = [{"outcomes": [{"run": {"exit": 1, "output": trace("FileNotFoundError: [Errno 2] No such file", 5)}}]}]
    rec = make(kb, index, manifest).resolve_snippet(snip("import numpy\nopen('d.csv')\n"))
    assert rec.category is OutcomeCategory.RUNTIME_PASS and not rec.success


def test_exact_reuse_on_duplicate(kb, index):
    resolver = make(kb, index)
    first = resolver.resolve_snippet(snip("import numpy\nimport cv2\n", "a.py"))
    second = resolver.resolve_snippet(snip("import cv2\nimport numpy as np\n", "b.py"))
    assert first.full_cascade and not second.full_cascade
    assert second.level == 1 and second.confidence == 10
    assert second.plan.pins == first.plan.pins
    assert resolver.memory.shortcuts[0].hit_count == 1
    assert len(resolver.memory.shortcuts) == 1


def test_no_level1_keeps_memory_empty(kb, index):
    resolver = make(kb, index, flags=CascadeFlags(frozenset({1})))
    for name in ("a.py", "b.py"):
        rec = resolver.resolve_snippet(snip("import numpy\n", name))
        assert rec.full_cascade and rec.level == 2
    assert resolver.memory.is_empty()


def test_failed_validation_is_quarantined(kb, index):
    # first build succeeds; the build-only revalidation of the same environment fails
    manifest = [{"when_pins": ["numpy==1.26.4"], "outcomes": [{}, {"build": {"exit": 1, "output": "boom"}}]}]
    resolver = make(kb, index, manifest)
    backend = resolver.backend

    def failing_validation(spec, timeout, snippet_id=None, build_only=False):
        if build_only:
            from depcascade.sandbox import StepResult
            return StepResult(1, "boom", 1.0)
        return MockBackend.build(backend, spec, timeout, snippet_id, build_only)

    backend.build = failing_validation
    resolver.resolve_snippet(snip("import numpy\n"))
    assert resolver.memory.shortcuts == [] and len(resolver.memory.quarantine) == 1


def test_rename_is_learned_after_success(kb, index):
    # the dynamic import is invisible to analysis; the repair loop discovers it
    manifest = {"entries": [
        {"when_pins": ["opencv-python==4.8.1.78"], "outcomes": [{}]},
        {"outcomes": [{"run": {"exit": 1, "output": trace("ModuleNotFoundError: No module named 'cv2'", 2)}}]},
    ]}
    resolver = make(kb, index, manifest)
    rec = resolver.resolve_snippet(snip("import numpy\ncv = __import__('cv2')\n"))
    assert rec.category is OutcomeCategory.SUCCESS and rec.attempts == 2
    assert [p.requirement for p in rec.plan.pins] == ["numpy==1.26.4", "opencv-python==4.8.1.78"]
    assert kb.learned_package("cv2") == "opencv-python"


def test_failure_counts_antipattern(kb, index):
    manifest = [{"outcomes": [{"build": {"exit": 1, "output": "Failed building wheel for xlrd"}}]}]
    resolver = make(kb, index, manifest)
    rec = resolver.resolve_snippet(snip("import xlrd\n"))
    assert rec.category is OutcomeCategory.BUILD_FAILURE
    assert resolver.memory.antipatterns["xlrd"].failure_count == 1


# report ----------------------------------------------------------------------


def test_p90_and_summary():
    assert p90([]) is None and p90([4.0]) == 4.0
    values = list(range(1, 11))
    assert p90(values) == pytest.approx(9.1)
    assert summary_line([8, 9, 10], 10) == f"9.0 ± {statistics.stdev([8, 9, 10]):.1f} (90.0%)"
    assert summary_line([5], 10) == "5.0 ± 0.0 (50.0%)"


def corpus():
    return [
        snip("import numpy\n", "a.py"),
        snip("import numpy\n", "b.py"),
        snip("import nosuchthing\n", "c.py"),
        snip("import gtk\nimport gobject\n", "d.py"),
        snip("import requests\nopen('x')\n", "e.py"),
    ]


def test_batch_accounting(kb, index):
    manifest = [{"snippet": "e.py", "outcomes": [
        {"run": {"exit": 1, "output": trace("FileNotFoundError: [Errno 2] No such file", 2)}}]}]
    resolver = make(kb, index, manifest)
    report = run_batch(corpus(), resolver, RunConfig(runs=3, seed=7))
    assert report["valid"]
    for run in report["per_run"]:
        assert run["resolved"] + run["failed"] == run["processed"] == 5
        assert run["resolved"] == 2
        assert run["runtime_pass"] == 2  # e.py runtime pass, d.py system-only
        assert run["failure_taxonomy"] == {"build/c-extension": 0, "unresolvable-import": 1, "timeout": 0,
                                           "system/platform": 2}
        assert run["cascade_evaluations"] == 4
    agg = report["aggregate"]
    assert agg["summary"] == "2.0 ± 0.0 (40.0%)"
    assert agg["llm_calls_per_snippet"] == 0.0
    assert "resolved: 2.0 ± 0.0 (40.0%)" in render_text(report)


def test_runs_are_isolated_and_seeded(kb, index):
    resolver = make(kb, index)
    seen = []
    report = run_batch(corpus(), resolver, RunConfig(runs=2, seed=3), on_run_start=lambda i: seen.append(
        resolver.memory.is_empty()))
    assert seen == [True, True]
    for run in report["per_run"]:
        assert sorted(r["snippet"] for r in run["records"]) == ["a.py", "b.py", "c.py", "d.py", "e.py"]
    again = run_batch(corpus(), make(kb, index), RunConfig(runs=2, seed=3))
    assert to_json(again) == to_json(report)


def test_sequential_ordering(kb, index):
    report = run_batch(corpus(), make(kb, index), RunConfig(runs=1, ordering="sequential"))
    assert [r["snippet"] for r in report["per_run"][0]["records"]] == ["a.py", "b.py", "c.py", "d.py", "e.py"]


class _DeadBackend(MockBackend):
    def build(self, *a, **kw):
        raise BackendUnavailable("daemon went away")


def test_backend_loss_invalidates_report(kb, index):
    resolver = Resolver(kb, _DeadBackend(), pypi=index)
    report = run_batch(corpus(), resolver, RunConfig(runs=2, ordering="sequential"))
    assert not report["valid"] and report["per_run"][0]["error"] == "daemon went away"
    assert len(report["per_run"]) == 1
    assert "REPORT INVALID" in render_text(report)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(runs=0)
    with pytest.raises(ValueError):
        RunConfig(ordering="random")


def test_aggregate_empty():
    assert aggregate([])["runs"] == 0


def test_budget_passed_through(kb, index):
    manifest = [{"outcomes": [{"build": {"duration": 100}}]}]
    resolver = make(kb, index, manifest, budget=Budget(per_build_timeout_s=10, max_retries=3, total_timeout_s=25))
    rec = resolver.resolve_snippet(Snippet("t.py", "import numpy\n"))
    assert rec.category is OutcomeCategory.TIMEOUT
    assert rec.duration_s == pytest.approx(25)
