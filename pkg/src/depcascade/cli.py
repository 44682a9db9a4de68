"""Command-line entry point: ``resolve``, ``batch`` and ``mine``."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .cascade import CascadeFlags
from .ingest import CorpusError, load_corpus, load_snippet, sibling_modules
from .kb import KBError, load_kb
from .llm import LlmClient, LlmConfig
from .miner import mine
from .pipeline import Resolver
from .plan import LEVEL_NAMES
from .pypi import FixtureIndex, LiveIndex
from .report import RunConfig, render_text, run_batch, to_json
from .sandbox import BackendUnavailable, Budget, DockerBackend, MockBackend, OutcomeCategory

logger = logging.getLogger("depcascade")

EXIT_CODES = {
    OutcomeCategory.SUCCESS: 0,
    OutcomeCategory.IMPORT_FAILURE: 2,
    OutcomeCategory.BUILD_FAILURE: 3,
    OutcomeCategory.TIMEOUT: 4,
    OutcomeCategory.SYSTEM_ONLY: 5,
    OutcomeCategory.RUNTIME_PASS: 6,
}
EXIT_USAGE = 64
EXIT_INFRA = 70

ENV_BACKEND = "DEPCASCADE_BACKEND"
ENV_LLM_ENDPOINT = "DEPCASCADE_LLM_ENDPOINT"
ENV_MOCK_MANIFEST = "DEPCASCADE_MOCK_MANIFEST"


class UsageError(Exception):
    pass


def _add_resolution_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kb", type=Path, help="KB directory (default: bundled seed KB)")
    p.add_argument("--pypi-fixtures", type=Path, help="offline index fixture directory")
    p.add_argument("--backend", choices=("docker", "mock"), default=os.environ.get(ENV_BACKEND, "docker"))
    p.add_argument("--mock-manifest", type=Path, default=os.environ.get(ENV_MOCK_MANIFEST),
                   help="scripted outcomes for the mock backend")
    p.add_argument("--llm-endpoint", default=os.environ.get(ENV_LLM_ENDPOINT))
    p.add_argument("--llm-model", default="local-model")
    p.add_argument("--no-llm", action="store_true", help="never call the LLM level")
    p.add_argument("--no-level1", action="store_true", help="disable session memory")
    p.add_argument("--disable-level", type=int, action="append", default=[], choices=range(1, 7),
                   metavar="N", help="skip cascade level N (repeatable)")
    p.add_argument("--python", help="interpreter override; Python 2 indicators still force 2.7")
    p.add_argument("--per-build-timeout", type=float, default=180.0)
    p.add_argument("--max-retries", type=int, default=10)
    p.add_argument("--total-timeout", type=float, default=500.0)
    p.add_argument("--cooccurrence-floor", type=float, default=0.3)
    p.add_argument("--unfixable-threshold", type=float, default=0.5)
    p.add_argument("--log-dir", type=Path, help="write per-attempt logs under this directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depcascade", description="Infer runnable environments for Python snippets.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resolve", help="resolve and validate one snippet")
    p.add_argument("file", type=Path)
    p.add_argument("--json", action="store_true", help="print the record as JSON")
    _add_resolution_options(p)

    p = sub.add_parser("batch", help="evaluate a corpus over several randomized runs")
    p.add_argument("corpus", type=Path)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ordering", choices=("shuffled", "sequential"), default="shuffled")
    p.add_argument("--report", type=Path, help="JSON report path (default: stdout)")
    _add_resolution_options(p)

    p = sub.add_parser("mine", help="build a co-occurrence table from requirements files")
    p.add_argument("corpus", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--cutoff-date", type=dt.date.fromisoformat, help="exclude files dated on/after YYYY-MM-DD")
    return parser


def _make_resolver(args: argparse.Namespace) -> Resolver:
    try:
        kb = load_kb(args.kb)
    except KBError as exc:
        raise UsageError(str(exc)) from exc
    if args.pypi_fixtures is not None:
        try:
            index = FixtureIndex(args.pypi_fixtures)
        except FileNotFoundError as exc:
            raise UsageError(str(exc)) from exc
    else:
        index = LiveIndex()
    if args.backend == "mock":
        manifest = args.mock_manifest
        backend = MockBackend.from_file(manifest) if manifest else MockBackend()
    else:
        backend = DockerBackend(workdir=args.log_dir)
        backend.check_available()
    disabled = set(args.disable_level)
    if args.no_level1:
        disabled.add(1)
    flags = CascadeFlags(disabled_levels=frozenset(disabled), llm_enabled=not args.no_llm,
                         unfixable_threshold=args.unfixable_threshold,
                         cooccurrence_floor=args.cooccurrence_floor)
    llm = None
    if args.llm_endpoint and not args.no_llm:
        llm = LlmClient(LlmConfig(endpoint=args.llm_endpoint, model=args.llm_model))
    try:
        budget = Budget(args.per_build_timeout, args.max_retries, args.total_timeout)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return Resolver(kb, backend, pypi=index, llm=llm, flags=flags, budget=budget, log_root=args.log_dir,
                    python_override=args.python)


def cmd_resolve(args: argparse.Namespace) -> int:
    try:
        snippet = load_snippet(args.file)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {args.file}: {exc}") from exc
    resolver = _make_resolver(args)
    record = resolver.resolve_snippet(snippet, sibling_modules(args.file))
    if args.json:
        print(json.dumps(record.to_dict(), indent=2, sort_keys=True))
        return EXIT_CODES[record.category]
    plan = record.plan
    print(f"snippet: {snippet.id}")
    print(f"outcome: {record.category.value} after {record.attempts} attempt(s)")
    if plan is None:
        print("plan: unresolved (confidence 0)")
    else:
        level = f"L{plan.level} {LEVEL_NAMES[plan.level]}" if plan.level else "none (no packages needed)"
        print(f"python: {plan.python_version}")
        print(f"level: {level}  confidence: {plan.confidence}")
        print("pins: " + (" ".join(p.requirement for p in plan.pins) or "-"))
        print("apt: " + (" ".join(plan.apt_packages) or "-"))
        for pkg, note in plan.rationale:
            print(f"  {pkg}: {note}")
    trace = record.trace
    print("trace: levels " + " -> ".join(str(v) for v in trace["visited"]) if trace["visited"] else "trace: no levels visited")
    for c in trace["conflicts"]:
        print(f"  conflict: {c[0]}=={c[1]} from L{c[2]} rejected by {c[3]}")
    for note in trace["notes"]:
        print(f"  note: {note}")
    return EXIT_CODES[record.category]


def cmd_batch(args: argparse.Namespace) -> int:
    try:
        snippets = load_corpus(args.corpus)
        config = RunConfig(runs=args.runs, seed=args.seed, ordering=args.ordering)
    except (CorpusError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    resolver = _make_resolver(args)
    report = run_batch(snippets, resolver, config)
    text = to_json(report)
    if args.report is not None:
        args.report.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    # keep stdout pure JSON when the report goes there
    summary_stream = sys.stderr if args.report is None else sys.stdout
    summary_stream.write(render_text(report))
    return 0 if report["valid"] else EXIT_INFRA


def cmd_mine(args: argparse.Namespace) -> int:
    if not args.corpus.is_dir():
        raise UsageError(f"{args.corpus}: not a directory")
    table, stats = mine(args.corpus, args.cutoff_date)
    args.out.write_text(json.dumps(table.to_json(), indent=1) + "\n", encoding="utf-8")
    print(f"files: {stats.files_seen} seen, {stats.files_excluded} excluded, {stats.files_undated} undated; "
          f"skipped lines: {stats.skipped_lines}; packages: {len(table.package_counts)}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"resolve": cmd_resolve, "batch": cmd_batch, "mine": cmd_mine}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"depcascade: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendUnavailable as exc:
        print(f"depcascade: backend unavailable: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
