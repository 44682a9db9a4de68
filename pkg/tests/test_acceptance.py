"""Acceptance criteria, one test (or group) per criterion.

Each test tags itself with ``("criterion", (id, label))`` so the terminal
summary prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import json
import shutil
import statistics
import time
from collections import Counter
from itertools import combinations

import pytest
from conftest import PYPI_FIXTURES, cooccurrence, newest_candidate_llm, snip

from depcascade.analysis import detect_python2
from depcascade.cascade import CascadeFlags, build_context, resolve
from depcascade.cli import main
from depcascade.ingest import Snippet
from depcascade.kb import is_placeholder
from depcascade.memory import jaccard
from depcascade.miner import mine
from depcascade.pipeline import Resolver
from depcascade.plan import Pin, ResolutionPlan
from depcascade.report import RunConfig, run_batch, to_json
from depcascade.sandbox import BackendUnavailable, Budget, DockerBackend, MockBackend, OutcomeCategory, repair_loop

pytestmark = pytest.mark.acceptance


def criterion(request, cid: str, label: str) -> None:
    request.node.user_properties.append(("criterion", (cid, label)))


# 1 -----------------------------------------------------------------------


def test_jaccard_matches_brute_force_on_all_subset_pairs(request):
    criterion(request, "1", "jaccard equals brute force on all 4096 subset pairs")
    universe = "abcdef"
    subsets = [frozenset(c for i, c in enumerate(universe) if mask >> i & 1) for mask in range(64)]
    start = time.perf_counter()
    pairs = 0
    for a in subsets:
        for b in subsets:
            union = len(a | b)
            expected = 1.0 if union == 0 else len(a & b) / union
            assert jaccard(a, b) == expected
            pairs += 1
    assert pairs == 4096
    assert time.perf_counter() - start < 1.0


# 2 -----------------------------------------------------------------------

PY2_ONLY = [
    ("print 'hello'\n", "print-stmt"),
    ("name = raw_input('name? ')\n", "raw_input"),
    ("import urllib2\n", "urllib2"),
    ("for i in xrange(10):\n    pass\n", "xrange"),
    ("for k, v in d.iteritems():\n    pass\n", "iter-methods"),
    ("try:\n    pass\nexcept ValueError, e:\n    pass\n", "except-comma"),
    ("s = unicode(x)\n", "unicode-call"),
    ("if d.has_key('a'):\n    pass\n", "has_key"),
    ("from cStringIO import StringIO\n", "stringio-module"),
    ("import Tkinter as tk\n", "tkinter-module"),
    ("import ConfigParser\n", "configparser-module"),
    ("import Queue\n", "queue-module"),
    ("os.chmod(path, 0755)\n", "octal-literal"),
]
DECOYS = [
    "# print 'hello'\n",
    "s = 'print foo'\n",
    'doc = """\nprint x\nfor i in xrange(3): pass\n"""\n',
    "# import urllib2\n",
    "msg = 'use raw_input() in py2'\n",
    'x = "d.iteritems()"\n',
    "# except ValueError, e:\n",
    "label = 'unicode(x)'\n",
    "'''d.has_key(k)'''\n",
    "# import Tkinter\n",
    "name = 'ConfigParser'\nimport configparser\n",
    "import queue\n",
    "from io import StringIO\n",
    "print('hello')\n",
    "mode = 0o755\n",
    "x = 0\ny = 10\nz = 3.0755\n",
    "my_xrange(3)\n",
    "obj.unicode(x)\n",
]
MIXED = [
    ("print 'x'\ny = f'{x}'\n", "print-stmt", "f-string"),
    ("for i in xrange(3):\n    pass\nasync def f():\n    await g()\n", "xrange", "async-def"),
    ("import urllib2\nprint('a', end='')\n", "urllib2", "print-kwargs"),
    ("d.has_key(1)\nif (n := 10):\n    pass\n", "has_key", "walrus"),
    ("import Queue\ndef f(a, *, b):\n    pass\n", "queue-module", "kwonly-args"),
]
# source -> (py2 indicator names, py3 indicator names, forced_py2)
PY2_LABELS = {
    **{src: ({name}, set(), True) for src, name in PY2_ONLY},
    **{src: (set(), set(), False) for src in DECOYS},
    **{src: ({p2}, {p3}, False) for src, p2, p3 in MIXED},
}


def test_python2_detection_suite(request):
    criterion(request, "2", "36-case Python 2 suite agrees with hand labels")
    assert len(PY2_LABELS) == 36
    disagreements = []
    for src, (py2, py3, forced) in PY2_LABELS.items():
        v = detect_python2(src)
        got = ({h.name for h in v.py2_signals}, {h.name for h in v.py3_signals}, v.forced_py2)
        if got != (py2, py3, forced):
            disagreements.append((src, got))
        assert v.forced_py2 == (len(v.py2_signals) > 0 and len(v.py3_signals) == 0)
    assert disagreements == []


# 3 -----------------------------------------------------------------------


def test_kb_lookups(request, kb, index):
    criterion(request, "3", "KB lookups for cv2, Image, py2.7 constraints, placeholders")
    assert kb.correct_name(kb.map_import("cv2")) == "opencv-python"
    ctx = build_context(snip("import Image\nim = Image.open('a.png')\n"), kb, pypi=index)
    assert [r.package for r in ctx.requirements] == ["Pillow"]
    assert kb.version_constraint("tensorflow", "2.7") == "==1.15.5"
    assert kb.version_constraint("keras", "2.7") == "==2.2.4"
    assert [is_placeholder(n) for n in (0, 1, 2)] == [True, True, False]


# 4 -----------------------------------------------------------------------

# (designed level, source); levels 2-5 each own a subset, the rest needs the LLM
CORPUS = [
    (2, "import numpy\nprint(numpy.zeros(3))\n"),
    (2, "import pandas as pd\n"),
    (2, "import requests\nr = requests.get('http://example.com')\n"),
    (2, "import scipy.stats\n"),
    (2, "import numpy\nimport cv2\n"),
    (2, "import yaml\n"),
    (2, "from bs4 import BeautifulSoup\n"),
    (2, "import matplotlib.pyplot as plt\n"),
    (2, "from sklearn.linear_model import LinearRegression\n"),
    (2, "import flask\n"),
    (3, "import tweepy\n"),
    (3, "import praw\n"),
    (3, "import flask\nimport flask_login\n"),
    (3, "import tweepy\nimport json\n"),
    (3, "import praw\nimport os\n"),
    (3, "from flask import Flask\nfrom flask_login import LoginManager\n"),
    (3, "import tweepy\nimport requests\n"),
    (3, "import praw\nimport pandas\n"),
    (4, "import numpy\nimport tabulate\n"),
    (4, "import requests\nimport xmltodict\n"),
    (4, "from tabulate import tabulate\nimport numpy as np\n"),
    (4, "import xmltodict, requests\n"),
    (4, "import numpy\nfrom tabulate import tabulate\nimport sys\n"),
    (4, "import requests\nimport xmltodict\nimport json\n"),
    (4, "import numpy as np\nimport tabulate as tb\n"),
    (4, "import requests\nfrom xmltodict import parse\n"),
    (5, "import xlrd\n"),
    (5, "import PyPDF2\n"),
    (5, "import gym\n"),
    (5, "import openai\n"),
    (5, "from moviepy.editor import VideoFileClip\n"),
    (5, "import imageio\n"),
    (5, "import paho.mqtt.client as mqtt\n"),
    (6, "import colorama\n"),
    (6, "import termcolor\n"),
    (6, "import arrow\n"),
    (6, "import pyfiglet\n"),
    (6, "import emoji\n"),
    (6, "import schedule\n"),
    (6, "import humanize\n"),
    (6, "import pyperclip\n"),
    (6, "from colorama import Fore\nimport sys\n"),
    (6, "from termcolor import colored\n"),
    (6, "import arrow\nimport datetime\n"),
    (6, "import pyfiglet\nimport os\n"),
    (6, "import emoji\nimport re\n"),
    (6, "import schedule\nimport time\n"),
    (6, "import humanize\nimport datetime\n"),
    (6, "import pyperclip\nimport sys\n"),
    (6, "import colorama\nimport termcolor\n"),
]

# co-installation evidence that only the level-4 subset can use
TABLE_ROWS = [{"numpy": None, "tabulate": "0.9.0"}] * 3 + [{"requests": None, "xmltodict": "0.13.0"}] * 3

# each level-6 snippet needs exactly one prompt: 17 of 50 snippets
EXPECTED_LLM_CALLS_PER_SNIPPET = 0.34


def corpus_snippets(extra_duplicates: int = 0) -> list[Snippet]:
    snippets = [Snippet(f"s{i:02d}.py", src) for i, (_, src) in enumerate(CORPUS)]
    for i in range(extra_duplicates):
        _, src = CORPUS[i * 5 % len(CORPUS)]
        snippets.append(Snippet(f"dup{i:02d}.py", src))
    return snippets


@pytest.fixture
def table_kb(kb):
    return kb.with_cooccurrence(cooccurrence(TABLE_ROWS))


def test_cascade_contract(request, table_kb, index):
    criterion(request, "4", "cascade trace contract and designed LLM calls per snippet")
    assert len(CORPUS) == 50
    llm = newest_candidate_llm()
    for designed, src in CORPUS:
        ctx = build_context(snip(src), table_kb, pypi=index, flags=CascadeFlags(frozenset({1})), llm=llm)
        result = resolve(ctx)
        visited = result.trace.visited
        assert visited == sorted(set(visited)), src
        assert result.plan is not None and result.plan.level == designed, src
        assert visited[-1] == designed, src  # stops at the first complete plan
        if designed < 6:
            assert result.trace.llm_calls == 0, src

    counts = Counter(level for level, _ in CORPUS)
    for level in (2, 3, 4, 5):
        # the owning level is needed: without it, nothing deterministic covers the subset
        flags = CascadeFlags(frozenset({1, level}), llm_enabled=False)
        for designed, src in CORPUS:
            if designed != level:
                continue
            r = resolve(build_context(snip(src), table_kb, pypi=index, flags=flags))
            assert r.plan is None or r.plan.level != level, src
        assert counts[level] > 0

    resolver = Resolver(table_kb, MockBackend(), pypi=index, llm=newest_candidate_llm(),
                        flags=CascadeFlags(frozenset({1})))
    report = run_batch(corpus_snippets(), resolver, RunConfig(runs=1, seed=1))
    assert report["aggregate"]["llm_calls_per_snippet"] == pytest.approx(EXPECTED_LLM_CALLS_PER_SNIPPET)
    assert counts[6] / len(CORPUS) == pytest.approx(EXPECTED_LLM_CALLS_PER_SNIPPET)


# 5 -----------------------------------------------------------------------


def _resolver(kb, index, level1: bool) -> Resolver:
    flags = CascadeFlags() if level1 else CascadeFlags(frozenset({1}))
    return Resolver(kb, MockBackend(), pypi=index, llm=newest_candidate_llm(), flags=flags)


def test_order_invariance_without_memory(request, table_kb, index):
    criterion(request, "5", "order invariance and memory savings")
    report = run_batch(corpus_snippets(), _resolver(table_kb, index, False), RunConfig(runs=10, seed=11))
    orders = set()
    multisets = set()
    for run in report["per_run"]:
        orders.add(tuple(r["snippet"] for r in run["records"]))
        plans = sorted(json.dumps([r["snippet"], r["plan"]], sort_keys=True) for r in run["records"])
        multisets.add("\n".join(plans).encode())
    assert len(orders) > 1  # the shuffles really differ
    assert len(multisets) == 1


def test_memory_saves_cascade_evaluations(request, table_kb, index):
    criterion(request, "5", "order invariance and memory savings")
    snippets = corpus_snippets(extra_duplicates=10)
    config = RunConfig(runs=3, seed=5)
    off = run_batch(snippets, _resolver(table_kb, index, False), config)
    on = run_batch(snippets, _resolver(table_kb, index, True), config)
    for a, b in zip(off["per_run"], on["per_run"]):
        resolved_a = {r["snippet"] for r in a["records"] if r["success"]}
        resolved_b = {r["snippet"] for r in b["records"] if r["success"]}
        assert resolved_a == resolved_b and len(resolved_a) == 60
        assert b["cascade_evaluations"] < a["cascade_evaluations"] == 60


# 6 -----------------------------------------------------------------------

NUMPY_SNIPPET = Snippet("n.py", "import numpy\nprint(numpy.__version__)\n")


def _numpy_plan() -> ResolutionPlan:
    return ResolutionPlan("3.10", (Pin("numpy", "1.26.4"),), (), 9, 2)


def _failing_numpy(*versions: str) -> MockBackend:
    return MockBackend([
        {"when_pins": [f"numpy=={v}"], "outcomes": [{"build": {"exit": 1, "output": "Failed building wheel for numpy"}}]}
        for v in versions
    ])


def test_repair_walks_numpy_chain(request, kb):
    criterion(request, "6", "repair loop fallbacks and budgets")
    result = repair_loop(_numpy_plan(), NUMPY_SNIPPET, Budget(), kb, _failing_numpy("1.26.4", "1.16.6"))
    assert [h[0] for h in result.history] == [("numpy==1.26.4",), ("numpy==1.16.6",), ("numpy==1.15.4",)]
    assert result.outcome.category is OutcomeCategory.SUCCESS and result.attempts == 3


def test_repair_chain_exhaustion(request, kb):
    criterion(request, "6", "repair loop fallbacks and budgets")
    backend = _failing_numpy("1.26.4", "1.16.6", "1.15.4", "1.14.6")
    result = repair_loop(_numpy_plan(), NUMPY_SNIPPET, Budget(), kb, backend)
    assert result.outcome.category is OutcomeCategory.BUILD_FAILURE
    assert result.history[-1][0] == ("numpy==1.14.6",)
    assert result.attempts <= 10


def test_repair_wall_clock_budget(request, kb):
    criterion(request, "6", "repair loop fallbacks and budgets")
    slow = MockBackend([{"outcomes": [{"build": {"duration": 3.0}}]}], realtime=True)
    start = time.monotonic()
    result = repair_loop(_numpy_plan(), NUMPY_SNIPPET, Budget(per_build_timeout_s=2, max_retries=10, total_timeout_s=5),
                         kb, slow)
    wall = time.monotonic() - start
    assert result.outcome.category is OutcomeCategory.TIMEOUT
    assert wall <= 5 + 1.0


# 7 -----------------------------------------------------------------------


def _confidence_ok(record: dict) -> bool:
    level, conf = record["level"], record["confidence"]
    if record["plan"] is None:
        return conf == 0
    if level is None:
        return conf == 10  # nothing to install
    if level == 6:
        return conf == 3
    return conf >= 7


def test_accounting_and_confidence_invariant(request, table_kb, index):
    criterion(request, "7", "report accounting and confidence invariant")
    extra = [
        Snippet("rt.py", "import numpy\nopen('data.csv')\n"),
        Snippet("none.py", "import nosuchthing\n"),
        Snippet("gtk.py", "import gtk\nimport gobject\n"),
        Snippet("std.py", "import os\n"),
    ]
    missing = ('Traceback (most recent call last):\n  File "<stdin>", line 2, in <module>\n'
               "FileNotFoundError: [Errno 2] No such file or directory: 'data.csv'\n")
    backend = MockBackend([{"snippet": "rt.py", "outcomes": [{"run": {"exit": 1, "output": missing}}]}])
    resolver = Resolver(table_kb, backend, pypi=index, llm=newest_candidate_llm())
    report = run_batch(corpus_snippets(extra_duplicates=5) + extra, resolver, RunConfig(runs=3, seed=2))
    records = 0
    for run in report["per_run"]:
        assert run["resolved"] + run["failed"] == run["processed"] == 59
        by_id = {r["snippet"]: r for r in run["records"]}
        assert by_id["rt.py"]["category"] == OutcomeCategory.RUNTIME_PASS.value
        assert by_id["gtk.py"]["category"] == OutcomeCategory.SYSTEM_ONLY.value
        assert run["failed"] == sum(1 for r in run["records"] if not r["success"]) == 3
        for r in run["records"]:
            assert _confidence_ok(r), r["snippet"]
            records += 1
    assert records == 3 * 59


# 8 -----------------------------------------------------------------------


def test_batch_determinism(request, tmp_path):
    criterion(request, "8", "seeded mock batch reports are byte-identical")
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for s in corpus_snippets(extra_duplicates=5):
        (corpus / s.id).write_text(s.source_text, encoding="utf-8")
    outputs = []
    for name in ("first.json", "second.json"):
        out = tmp_path / name
        code = main(["batch", str(corpus), "--runs", "1", "--seed", "42", "--backend", "mock",
                     "--pypi-fixtures", str(PYPI_FIXTURES), "--report", str(out)])
        assert code == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert json.loads(outputs[0])["config"]["seed"] == 42


# 9 -----------------------------------------------------------------------

TOY_FILES = {
    "a.txt": ["numpy==1.16.6", "pandas==0.24.2", "scipy"],
    "b.txt": ["numpy==1.16.6", "scipy==1.2.3"],
    "c.txt": ["numpy==1.15.4", "pandas"],
    "d.txt": ["requests==2.22.0", "flask==1.1.1"],
    "e.txt": ["flask==1.1.1", "jinja2==2.10"],
    "f.txt": ["numpy", "matplotlib==3.0.3"],
    "g.txt": ["requests==2.31.0", "numpy==1.26.4"],
    "h.txt": ["pandas==2.2.2", "numpy==1.26.4", "tabulate==0.9.0"],
    "i.txt": ["tabulate==0.9.0"],
    "j.txt": ["numpy==1.26.4", "xmltodict==0.13.0", "requests"],
}
DATES = {"g.txt": "2024-02-01", "h.txt": "2024-05-01", "a.txt": "2019-01-01"}


def _oracle(files: dict[str, list[str]]):
    def parse(line):
        name, _, version = line.partition("==")
        return name, version or None

    docs = [dict(parse(line) for line in lines) for lines in files.values()]
    names = sorted({n for d in docs for n in d})
    counts = {n: sum(1 for d in docs if n in d) for n in names}
    pairs = {(a, b): sum(1 for d in docs if a in d and b in d) for a in names for b in names if a < b}
    versions = Counter()
    for d in docs:
        for p, v in d.items():
            for c in d:
                if c != p and v is not None:
                    versions[(p, v, c)] += 1
    return names, counts, pairs, versions


def _check_against_oracle(table, files):
    names, counts, pairs, versions = _oracle(files)
    assert table.file_total == len(files)
    assert dict(table.package_counts) == counts
    assert {k: v for k, v in table.pair_counts.items() if v} == {k: v for k, v in pairs.items() if v}
    assert {k: v for k, v in table.version_counts.items() if v} == dict(versions)
    for a, b in combinations(names, 2):
        key = (a, b) if a < b else (b, a)
        assert table.score(a, b) == pairs[key] / counts[a]


def test_miner_oracle_and_cutoff(request, tmp_path):
    criterion(request, "9", "miner matches brute-force oracle; cutoff excludes flagged files")
    for name, lines in TOY_FILES.items():
        (tmp_path / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    (tmp_path / "dates.json").write_text(json.dumps(DATES), encoding="utf-8")
    table, stats = mine(tmp_path)
    _check_against_oracle(table, TOY_FILES)
    assert stats.files_seen == 10 and stats.files_excluded == 0

    import datetime as dt
    table, stats = mine(tmp_path, dt.date(2024, 1, 1))
    kept = {k: v for k, v in TOY_FILES.items() if k not in ("g.txt", "h.txt")}
    _check_against_oracle(table, kept)
    assert stats.files_excluded == 2


# 10 ----------------------------------------------------------------------


def test_end_to_end_docker_smoke(request, kb, tmp_path):
    criterion(request, "10", "live container smoke run (environment-gated)")
    if shutil.which("docker") is None:
        pytest.skip("no container runtime on PATH")
    backend = DockerBackend(workdir=tmp_path)
    try:
        backend.check_available()
    except BackendUnavailable as exc:
        pytest.skip(f"container daemon unavailable: {exc}")
    src = "import cv2\nimport tensorflow as tf\nprint(cv2.__version__, tf.__version__)\n"
    durations = []
    resolver = Resolver(kb, backend)
    record = resolver.resolve_snippet(Snippet("worked.py", src))
    durations.append(record.duration_s)
    assert record.plan is not None and "libgl1-mesa-glx" in record.plan.apt_packages
    assert record.category in (OutcomeCategory.SUCCESS, OutcomeCategory.RUNTIME_PASS)
    print(f"median resolution time: {statistics.median(durations):.1f} s")
