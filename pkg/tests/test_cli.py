from __future__ import annotations

import json

import pytest
from conftest import PYPI_FIXTURES

from depcascade.cli import EXIT_INFRA, EXIT_USAGE, main

MOCK = ["--backend", "mock", "--pypi-fixtures", str(PYPI_FIXTURES), "--no-llm"]


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_resolve_success_human(tmp_path, capsys):
    f = write(tmp_path / "a.py", "import numpy\n")
    assert main(["resolve", f, *MOCK]) == 0
    out = capsys.readouterr().out
    assert "outcome: success" in out and "pins: numpy==1.26.4" in out
    assert "level: L2 compat-map  confidence: 9" in out


def test_resolve_json_and_exit_codes(tmp_path, capsys):
    f = write(tmp_path / "a.py", "import nosuchthing\n")
    assert main(["resolve", f, "--json", *MOCK]) == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["category"] == "import-failure" and doc["plan"] is None
    g = write(tmp_path / "g.py", "import gtk\nimport gobject\n")
    assert main(["resolve", g, *MOCK]) == 5


@pytest.mark.parametrize("output,code", [
    ("Failed building wheel for numpy", 3),
    ('Traceback (most recent call last):\n  File "x", line 3, in <module>\nNameError: name \'q\' is not defined', 6),
])
def test_resolve_failure_codes(tmp_path, output, code):
    manifest = tmp_path / "m.json"
    stage = "run" if "Traceback" in output else "build"
    manifest.write_text(json.dumps({"default": {stage: {"exit": 1, "output": output}}}))
    f = write(tmp_path / "a.py", "import numpy\n\nq\n")
    assert main(["resolve", f, "--mock-manifest", str(manifest), "--max-retries", "1", *MOCK]) == code


def test_resolve_timeout_code(tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps([{"outcomes": [{"build": {"duration": 999}}]}]))
    f = write(tmp_path / "a.py", "import numpy\n")
    assert main(["resolve", f, "--mock-manifest", str(manifest), *MOCK]) == 4


def test_env_vars_select_backend_and_manifest(tmp_path, monkeypatch):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps([{"outcomes": [{"build": {"exit": 1, "output": "error: command 'gcc' failed"}}]}]))
    monkeypatch.setenv("DEPCASCADE_BACKEND", "mock")
    monkeypatch.setenv("DEPCASCADE_MOCK_MANIFEST", str(manifest))
    f = write(tmp_path / "a.py", "import numpy\n")
    assert main(["resolve", f, "--pypi-fixtures", str(PYPI_FIXTURES), "--no-llm", "--max-retries", "1"]) == 3


def test_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["resolve", str(tmp_path / "missing.py"), *MOCK]) == EXIT_USAGE
    assert main(["batch", str(tmp_path / "nope"), *MOCK]) == EXIT_USAGE
    assert main(["batch", str(tmp_path), "--runs", "0", *MOCK]) == EXIT_USAGE
    f = write(tmp_path / "a.py", "import numpy\n")
    assert main(["resolve", f, "--kb", str(tmp_path / "nokb"), *MOCK]) == EXIT_USAGE
    assert main(["resolve", f, "--max-retries", "0", *MOCK]) == EXIT_USAGE
    assert main(["resolve", f, "--disable-level", "9", *MOCK]) == EXIT_USAGE
    assert main(["--help"]) == 0
    capsys.readouterr()


def test_docker_backend_unavailable(tmp_path, monkeypatch):
    monkeypatch.setenv("PATH", str(tmp_path))  # no docker binary reachable
    f = write(tmp_path / "a.py", "import numpy\n")
    assert main(["resolve", f, "--backend", "docker", "--pypi-fixtures", str(PYPI_FIXTURES)]) == EXIT_INFRA


def test_batch_report_file(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    write(corpus / "a.py", "import numpy\n")
    write(corpus / "b.py", "import nosuchthing\n")
    report = tmp_path / "r.json"
    assert main(["batch", str(corpus), "--runs", "2", "--seed", "1", "--report", str(report), *MOCK]) == 0
    doc = json.loads(report.read_text())
    assert doc["valid"] and doc["aggregate"]["summary"] == "1.0 ± 0.0 (50.0%)"
    assert "resolved: 1.0 ± 0.0 (50.0%)" in capsys.readouterr().out


def test_batch_to_stdout_is_pure_json(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    write(corpus / "a.py", "import numpy\n")
    assert main(["batch", str(corpus), "--runs", "1", *MOCK]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["config"]["runs"] == 1
    assert "resolved:" in captured.err


def test_mine(tmp_path, capsys):
    corpus = tmp_path / "reqs"
    corpus.mkdir()
    write(corpus / "one.txt", "numpy==1.26.4\ntabulate==0.9.0\n")
    write(corpus / "two.txt", "numpy\n-e .\n")
    out = tmp_path / "table.json"
    assert main(["mine", str(corpus), "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert dict(table["package_counts"]) == {"numpy": 2, "tabulate": 1}
    assert "files: 2 seen" in capsys.readouterr().out
    assert main(["mine", str(tmp_path / "none"), "--out", str(out)]) == EXIT_USAGE
    assert main(["mine", str(corpus), "--out", str(out), "--cutoff-date", "yesterday"]) == EXIT_USAGE
