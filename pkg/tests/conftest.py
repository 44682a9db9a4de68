from __future__ import annotations

from pathlib import Path

import pytest

from depcascade.ingest import Snippet
from depcascade.kb import load_kb
from depcascade.pypi import FixtureIndex

FIXTURES = Path(__file__).parent / "fixtures"
PYPI_FIXTURES = FIXTURES / "pypi"

# (criterion id, description) -> passed, filled by tests marked `acceptance`
ACCEPTANCE_RESULTS: dict[str, tuple[str, bool, str]] = {}


@pytest.fixture
def kb():
    # fresh copy per test: learned mappings mutate the instance
    return load_kb()


@pytest.fixture
def index():
    return FixtureIndex(PYPI_FIXTURES)


def snip(source: str, ident: str = "snippet.py") -> Snippet:
    return Snippet(ident, source)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    criterion = dict(report.user_properties).get("criterion")
    if criterion is None:
        return
    cid, label = criterion
    if report.skipped:
        status = "SKIP"
    else:
        status = "PASS" if report.passed else "FAIL"
    prior = ACCEPTANCE_RESULTS.get(cid)
    # a criterion spread over several tests fails if any part fails
    if prior is not None and prior[1] in ("FAIL",):
        return
    if prior is not None and prior[1] == "PASS" and status == "SKIP":
        return
    ACCEPTANCE_RESULTS[cid] = (label, status, report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS, key=lambda c: int(c)):
        label, status, _ = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"{status} criterion {cid}: {label}")


def newest_candidate_llm():
    """LLM client whose transport always answers with each package's first candidate."""
    import json

    from depcascade.llm import LlmClient, LlmConfig

    def transport(url, body, timeout):
        prompt = json.loads(body["prompt"])
        return {"response": json.dumps({p["name"]: p["candidates"][0] for p in prompt["packages"]})}

    return LlmClient(LlmConfig("http://stub.invalid/api"), transport)


def cooccurrence(rows):
    """Table from ``[{package: version or None}, ...]`` requirement files."""
    from depcascade.miner import CooccurrenceTable, count_file

    table = CooccurrenceTable()
    for row in rows:
        table = table.merge(count_file(row))
    return table
