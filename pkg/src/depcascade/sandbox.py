"""Sandboxed build-and-run of candidate environments and the repair loop.

Two backends share one interface. ``DockerBackend`` builds a child image
per environment (apt packages, then one ``pip install`` of every pin) and
executes the snippet with networking disabled. ``MockBackend`` replays
scripted outcomes from a manifest so the loop can be exercised without a
container daemon; durations it reports are virtual unless ``realtime`` is set.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import shutil
import subprocess
import tempfile
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterable, Mapping, Protocol

from packaging.utils import canonicalize_name

from .plan import ResolutionPlan
from .versions import base_image_for

if TYPE_CHECKING:
    from .ingest import Snippet
    from .kb import KnowledgeBase
    from .pypi import PackageIndex

logger = logging.getLogger(__name__)

__all__ = [
    "OutcomeCategory",
    "BackendUnavailable",
    "Budget",
    "EnvironmentSpec",
    "StepResult",
    "ExecutionOutcome",
    "Classification",
    "MockBackend",
    "DockerBackend",
    "classify_outcome",
    "build_and_run",
    "repair_loop",
    "next_fallback",
    "RepairResult",
]


class OutcomeCategory(str, enum.Enum):
    SUCCESS = "success"
    IMPORT_FAILURE = "import-failure"
    BUILD_FAILURE = "build-failure"
    RUNTIME_PASS = "runtime-pass"
    TIMEOUT = "timeout"
    SYSTEM_ONLY = "system-only"


TERMINAL = frozenset({OutcomeCategory.SUCCESS, OutcomeCategory.RUNTIME_PASS, OutcomeCategory.SYSTEM_ONLY})


class BackendUnavailable(RuntimeError):
    """The execution backend itself failed; not a verdict on the snippet."""


@dataclass(frozen=True)
class Budget:
    per_build_timeout_s: float = 180.0
    max_retries: int = 10
    total_timeout_s: float = 500.0

    def __post_init__(self) -> None:
        if self.per_build_timeout_s <= 0 or self.max_retries <= 0 or self.total_timeout_s <= 0:
            raise ValueError("budget values must be positive")
        if self.total_timeout_s < self.per_build_timeout_s:
            raise ValueError("total timeout must be at least the per-build timeout")


@dataclass(frozen=True)
class EnvironmentSpec:
    base_image: str
    python_version: str
    pins: tuple[str, ...]
    apt_packages: tuple[str, ...] = ()
    network: str = "restricted"
    env: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.network not in ("restricted", "open"):
            raise ValueError("network policy must be 'restricted' or 'open'")
        if not self.base_image.startswith(f"python:{self.python_version}"):
            raise ValueError(f"base image {self.base_image} does not match Python {self.python_version}")
        names = [canonicalize_name(re.split(r"[=<>!~ ]", p, maxsplit=1)[0]) for p in self.pins]
        if len(set(names)) != len(names):
            raise ValueError("a package is pinned twice")

    @classmethod
    def from_plan(cls, plan: ResolutionPlan, network: str = "restricted") -> EnvironmentSpec:
        return cls(
            base_image=base_image_for(plan.python_version),
            python_version=plan.python_version,
            pins=tuple(p.requirement for p in plan.pins),
            apt_packages=tuple(plan.apt_packages),
            network=network,
        )

    def fingerprint(self) -> str:
        return env_fingerprint(self.python_version, self.pins, self.apt_packages)


def env_fingerprint(python_version: str, pins: Iterable[str], apt_packages: Iterable[str]) -> str:
    doc = {"python": python_version, "pins": sorted(pins), "apt": sorted(apt_packages)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class StepResult:
    exit_status: int
    output: str
    duration_s: float
    timed_out: bool = False


@dataclass(frozen=True)
class ExecutionOutcome:
    category: OutcomeCategory
    exit_status: int | None
    output_excerpt: str
    duration_s: float
    attempt: int
    phase: str = "run"
    rule_id: str | None = None
    blamed: tuple[str, ...] = ()
    plan_fingerprint: str = ""
    capture: str | None = None


class Backend(Protocol):
    def build(self, spec: EnvironmentSpec, timeout: float) -> StepResult: ...

    def run(self, spec: EnvironmentSpec, snippet: Snippet, timeout: float) -> StepResult: ...


# mock backend ------------------------------------------------------------


@dataclass
class _Entry:
    outcomes: list[dict[str, Any]]
    fingerprint: str | None = None
    when_pins: frozenset[str] = frozenset()
    when_apt: frozenset[str] = frozenset()
    when_python: str | None = None
    snippet: str | None = None

    def matches(self, spec: EnvironmentSpec, snippet_id: str | None) -> bool:
        if self.fingerprint is not None and self.fingerprint != spec.fingerprint():
            return False
        if self.snippet is not None and self.snippet != snippet_id:
            return False
        if self.when_python is not None and self.when_python != spec.python_version:
            return False
        pins = {_norm_req(p) for p in spec.pins}
        if not {_norm_req(p) for p in self.when_pins} <= pins:
            return False
        return self.when_apt <= set(spec.apt_packages)


def _norm_req(req: str) -> str:
    name, sep, rest = req.partition("==")
    return f"{canonicalize_name(name)}{sep}{rest}"


class MockBackend:
    """Replays scripted results keyed by environment.

    Manifest: a list of entries, or ``{"entries": [...], "default": {...}}``.
    An entry selects environments by ``plan_fingerprint`` or by the
    ``when_pins`` / ``when_apt`` / ``when_python`` / ``snippet`` filters and
    lists ``outcomes``; each outcome is ``{"build": step, "run": step}`` with
    ``step = {"exit": int, "output": str, "duration": seconds}``. Successive
    builds of the same environment advance through the list and the last
    outcome repeats. Unmatched environments build and run cleanly.
    """

    DEFAULT_BUILD = {"exit": 0, "output": "Successfully installed", "duration": 1.0}
    DEFAULT_RUN = {"exit": 0, "output": "", "duration": 0.5}

    def __init__(self, manifest: Any = None, *, realtime: bool = False) -> None:
        manifest = manifest if manifest is not None else []
        if isinstance(manifest, dict):
            entries = manifest.get("entries", [])
            default = manifest.get("default") or {}
        else:
            entries, default = manifest, {}
        self.entries = [self._parse_entry(i, e) for i, e in enumerate(entries)]
        self.default = {"build": {**self.DEFAULT_BUILD, **default.get("build", {})},
                        "run": {**self.DEFAULT_RUN, **default.get("run", {})}}
        self.realtime = realtime
        self._positions: dict[tuple[int, str, str | None], int] = {}
        self._current: dict[tuple[str, str | None], dict[str, Any]] = {}
        self.calls: list[tuple[str, str, str | None]] = []

    @classmethod
    def from_file(cls, path: Path | str, **kwargs: Any) -> MockBackend:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), **kwargs)

    @staticmethod
    def _parse_entry(i: int, raw: Any) -> _Entry:
        if not isinstance(raw, dict) or not isinstance(raw.get("outcomes"), list) or not raw["outcomes"]:
            raise ValueError(f"mock manifest entry {i}: needs a non-empty 'outcomes' list")
        return _Entry(
            outcomes=raw["outcomes"],
            fingerprint=raw.get("plan_fingerprint"),
            when_pins=frozenset(raw.get("when_pins", ())),
            when_apt=frozenset(raw.get("when_apt", ())),
            when_python=raw.get("when_python"),
            snippet=raw.get("snippet"),
        )

    def reset(self) -> None:
        self._positions.clear()
        self._current.clear()
        self.calls.clear()

    def _select(self, spec: EnvironmentSpec, snippet_id: str | None, advance: bool) -> dict[str, Any]:
        fp = spec.fingerprint()
        for i, entry in enumerate(self.entries):
            if entry.matches(spec, snippet_id):
                key = (i, fp, snippet_id)
                pos = self._positions.get(key, 0)
                if advance:
                    self._positions[key] = pos + 1
                else:
                    pos = max(0, pos - 1)
                outcome = entry.outcomes[min(pos, len(entry.outcomes) - 1)]
                return {"build": {**self.DEFAULT_BUILD, **outcome.get("build", {})},
                        "run": {**self.DEFAULT_RUN, **outcome.get("run", {})}}
        return self.default

    def _step(self, step: dict[str, Any], timeout: float) -> StepResult:
        duration = float(step.get("duration", 0.0))
        timed_out = duration > timeout
        duration = min(duration, timeout)
        if self.realtime:
            time.sleep(duration)
        if timed_out:
            return StepResult(-1, step.get("output", ""), duration, True)
        return StepResult(int(step.get("exit", 0)), step.get("output", ""), duration)

    def build(self, spec: EnvironmentSpec, timeout: float, snippet_id: str | None = None,
              build_only: bool = False) -> StepResult:
        scripted = self._select(spec, snippet_id, advance=not build_only)
        self._current[(spec.fingerprint(), snippet_id)] = scripted
        self.calls.append(("build", spec.fingerprint(), snippet_id))
        return self._step(scripted["build"], timeout)

    def run(self, spec: EnvironmentSpec, snippet: Snippet, timeout: float) -> StepResult:
        scripted = self._current.get((spec.fingerprint(), snippet.id)) or self._select(spec, snippet.id, True)
        self.calls.append(("run", spec.fingerprint(), snippet.id))
        return self._step(scripted["run"], timeout)


# container backend -------------------------------------------------------


class DockerBackend:
    """Child containers through the host daemon's CLI.

    The build phase needs the network for apt and pip; the run phase gets
    ``--network none`` unless the environment requests an open policy.
    """

    def __init__(self, docker: str = "docker", workdir: Path | str | None = None) -> None:
        self.docker = docker
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="depcascade-"))

    def check_available(self) -> None:
        if shutil.which(self.docker) is None:
            raise BackendUnavailable(f"{self.docker}: not found on PATH")
        try:
            proc = subprocess.run([self.docker, "info"], capture_output=True, text=True, timeout=20)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailable(f"container daemon unreachable: {exc}") from exc
        if proc.returncode != 0:
            raise BackendUnavailable(f"container daemon unreachable: {proc.stderr.strip()}")

    @staticmethod
    def dockerfile(spec: EnvironmentSpec) -> str:
        lines = [f"FROM {spec.base_image}"]
        if spec.apt_packages:
            apt = " ".join(spec.apt_packages)
            lines.append(
                "RUN apt-get update && apt-get install -y --no-install-recommends "
                f"{apt} && rm -rf /var/lib/apt/lists/*"
            )
        if spec.pins:
            pins = " ".join(f'"{p}"' for p in spec.pins)
            lines.append(f"RUN pip install --no-cache-dir {pins}")
        for key, value in spec.env:
            lines.append(f"ENV {key}={json.dumps(value)}")
        lines.append("WORKDIR /app")
        return "\n".join(lines) + "\n"

    def _tag(self, spec: EnvironmentSpec) -> str:
        return f"depcascade-env:{spec.fingerprint()[:16]}"

    def build(self, spec: EnvironmentSpec, timeout: float, snippet_id: str | None = None,
              build_only: bool = False) -> StepResult:
        context = self.workdir / spec.fingerprint()[:16]
        context.mkdir(parents=True, exist_ok=True)
        (context / "Dockerfile").write_text(self.dockerfile(spec), encoding="utf-8")
        cmd = [self.docker, "build", "-t", self._tag(spec), str(context)]
        return self._exec(cmd, timeout)

    def run(self, spec: EnvironmentSpec, snippet: Snippet, timeout: float) -> StepResult:
        name = f"depcascade-run-{uuid.uuid4().hex[:12]}"
        cmd = [self.docker, "run", "--rm", "-i", "--name", name]
        if spec.network == "restricted":
            cmd += ["--network", "none"]
        cmd += [self._tag(spec), "python", "-"]
        result = self._exec(cmd, timeout, stdin=snippet.source_text)
        if result.timed_out:
            subprocess.run([self.docker, "rm", "-f", name], capture_output=True, timeout=30)
        return result

    def _exec(self, cmd: list[str], timeout: float, stdin: str | None = None) -> StepResult:
        start = time.monotonic()
        try:
            proc = subprocess.run(cmd, input=stdin, capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            out = (exc.stdout or b"") + (exc.stderr or b"")
            text = out.decode(errors="replace") if isinstance(out, bytes) else str(out)
            return StepResult(-1, text, time.monotonic() - start, True)
        except OSError as exc:
            raise BackendUnavailable(str(exc)) from exc
        return StepResult(proc.returncode, proc.stdout + proc.stderr, time.monotonic() - start)


# classification ----------------------------------------------------------

_EXC_LINE = re.compile(
    r"^([A-Za-z_][\w.]*(?:Error|error|Exception|Exit|Interrupt|Failure)|error)\b[ \t]*(?::[ \t]*(.*))?$",
    re.MULTILINE,
)
_NO_MODULE = re.compile(r"No module named '?([\w.]+)'?")
_FRAME = re.compile(r'File "(?:<stdin>|[^"]*snippet\.py)", line (\d+)')
_ERRNO2 = re.compile(r"\[Errno 2\]")
_RUNTIME_PASS = frozenset({
    "NameError", "ConnectionError", "ConnectionRefusedError", "ConnectionResetError",
    "ConnectionAbortedError", "FileNotFoundError", "NewConnectionError", "MaxRetryError",
    "gaierror",
})
_IMPORT_ERRORS = frozenset({"ImportError", "ModuleNotFoundError"})
# module names that Pillow serves only as PIL.<name>
LEGACY_PIL = frozenset({
    "Image", "ImageDraw", "ImageFont", "ImageFilter", "ImageOps", "ImageEnhance", "ImageChops",
    "ImageTk", "ImageGrab", "ImageColor", "ImageStat", "ImageFile",
})


@dataclass(frozen=True)
class Classification:
    category: OutcomeCategory
    rule_id: str | None = None
    blamed: tuple[str, ...] = ()
    capture: str | None = None


def _last_pin_mentioned(output: str, pins: Iterable[str]) -> str | None:
    lowered = output.lower()
    best, best_pos = None, -1
    for req in pins:
        name = re.split(r"[=<>!~ ]", req, maxsplit=1)[0]
        forms = {name.lower(), canonicalize_name(name), canonicalize_name(name).replace("-", "_")}
        pos = max(lowered.rfind(f) for f in forms)
        if pos > best_pos:
            best, best_pos = name, pos
    return best


def _blame(kb: KnowledgeBase, match: Any, output: str, pins: tuple[str, ...]) -> tuple[str, ...]:
    pin_names = {canonicalize_name(re.split(r"[=<>!~ ]", p, maxsplit=1)[0]): re.split(r"[=<>!~ ]", p, maxsplit=1)[0]
                 for p in pins}
    if match is not None and match.value:
        capture = match.rule.capture
        if capture == "package":
            key = canonicalize_name(match.value)
            return (pin_names.get(key, match.value),)
        if capture == "module":
            top = match.value.split(".", 1)[0]
            pkg = kb.correct_name(kb.map_import(top) or top)
            return (pin_names.get(canonicalize_name(pkg), pkg),)
    last = _last_pin_mentioned(output, pins)
    return (last,) if last else ()


def classify_outcome(
    exit_status: int | None,
    output_text: str,
    kb: KnowledgeBase,
    *,
    pins: tuple[str, ...] = (),
    phase: str = "run",
    timed_out: bool = False,
    import_lines: frozenset[int] = frozenset(),
) -> Classification:
    """Map a finished build or run step to an outcome category."""
    if timed_out:
        return Classification(OutcomeCategory.TIMEOUT, None, _blame(kb, None, output_text, pins) if phase == "build" else ())
    match = kb.match_error(output_text) if exit_status else None
    rule_id = match.rule.id if match else None
    capture = match.value if match else None
    if phase == "build":
        if exit_status == 0:
            return Classification(OutcomeCategory.SUCCESS)
        return Classification(OutcomeCategory.BUILD_FAILURE, rule_id, _blame(kb, match, output_text, pins), capture)
    if exit_status == 0:
        return Classification(OutcomeCategory.SUCCESS)
    exc = _EXC_LINE.findall(output_text or "")
    name, message = (exc[-1][0], exc[-1][1]) if exc else ("", "")
    short = name.rsplit(".", 1)[-1]
    if short in _IMPORT_ERRORS:
        m = _NO_MODULE.search(message)
        if m:
            top = m.group(1).split(".", 1)[0]
            if kb.is_system_only(top):
                return Classification(OutcomeCategory.SYSTEM_ONLY, rule_id)
            pinned = {canonicalize_name(re.split(r"[=<>!~ ]", p, maxsplit=1)[0]) for p in pins}
            if top in LEGACY_PIL and "pillow" in pinned:
                return Classification(OutcomeCategory.RUNTIME_PASS, rule_id)
        return Classification(OutcomeCategory.IMPORT_FAILURE, rule_id, _blame(kb, match, output_text, pins), capture)
    if short in _RUNTIME_PASS or (short in ("IOError", "OSError") and _ERRNO2.search(message)):
        return Classification(OutcomeCategory.RUNTIME_PASS, rule_id)
    if match is not None and match.rule.remedy.action == "unfixable":
        return Classification(OutcomeCategory.RUNTIME_PASS, rule_id)
    if short in ("SyntaxError", "TabError", "IndentationError"):
        # the interpreter rejected the source: nothing ran, so this is an environment fault
        return Classification(OutcomeCategory.BUILD_FAILURE, rule_id, (), capture)
    frames = _FRAME.findall(output_text or "")
    if frames and import_lines:
        innermost_snippet_frame = int(frames[-1])
        if innermost_snippet_frame in import_lines:
            # raised while importing a dependency
            return Classification(OutcomeCategory.IMPORT_FAILURE, rule_id, _blame(kb, match, output_text, pins), capture)
    return Classification(OutcomeCategory.SUCCESS, rule_id)


# execution ---------------------------------------------------------------


def _excerpt(text: str, limit: int = 2000) -> str:
    return text if len(text) <= limit else text[-limit:]


def build_and_run(
    spec: EnvironmentSpec,
    snippet: Snippet,
    budget: Budget,
    backend: Any,
    kb: KnowledgeBase,
    *,
    attempt: int = 1,
    build_only: bool = False,
    remaining: float | None = None,
    import_lines: frozenset[int] = frozenset(),
) -> ExecutionOutcome:
    """Build ``spec``, then run the snippet in it, within the per-build and remaining budgets."""
    fp = spec.fingerprint()
    remaining = budget.total_timeout_s if remaining is None else remaining
    timeout = min(budget.per_build_timeout_s, remaining)
    if timeout <= 0:
        return ExecutionOutcome(OutcomeCategory.TIMEOUT, None, "", 0.0, attempt, "build", plan_fingerprint=fp)
    built = backend.build(spec, timeout, snippet_id=snippet.id, build_only=build_only)
    c = classify_outcome(built.exit_status, built.output, kb, pins=spec.pins, phase="build",
                         timed_out=built.timed_out)
    if c.category is not OutcomeCategory.SUCCESS or build_only:
        return ExecutionOutcome(c.category, built.exit_status, _excerpt(built.output), built.duration_s,
                                attempt, "build", c.rule_id, c.blamed, fp, c.capture)
    run_timeout = min(budget.per_build_timeout_s, remaining - built.duration_s)
    if run_timeout <= 0:
        return ExecutionOutcome(OutcomeCategory.TIMEOUT, None, "", built.duration_s, attempt, "run",
                                plan_fingerprint=fp)
    ran = backend.run(spec, snippet, run_timeout)
    c = classify_outcome(ran.exit_status, ran.output, kb, pins=spec.pins, phase="run",
                         timed_out=ran.timed_out, import_lines=import_lines)
    return ExecutionOutcome(c.category, ran.exit_status, _excerpt(ran.output),
                            built.duration_s + ran.duration_s, attempt, "run", c.rule_id, c.blamed, fp,
                            c.capture)


def next_fallback(kb: KnowledgeBase, package: str, tried: Iterable[str]) -> str | None:
    done = set(tried)
    return next((v for v in kb.fallback_chain(package) if v not in done), None)


@dataclass
class RepairResult:
    plan: ResolutionPlan
    outcome: ExecutionOutcome
    attempts: int
    history: list[tuple[tuple[str, ...], OutcomeCategory]] = field(default_factory=list)
    renames: list[tuple[str, str]] = field(default_factory=list)
    elapsed_s: float = 0.0


def _latest_version(index: PackageIndex | None, package: str, python_version: str) -> str | None:
    if index is None:
        return None
    try:
        meta = index.get_metadata(package)
    except Exception:  # noqa: BLE001 - any index failure just means no version
        return None
    cands = meta.candidates(python_version)
    return cands[0] if cands else None


def _apply_remedy(
    plan: ResolutionPlan,
    outcome: ExecutionOutcome,
    kb: KnowledgeBase,
    tried: dict[str, list[str]],
    packages: dict[str, str],
    index: PackageIndex | None,
    replan: Callable[[str], ResolutionPlan | None] | None,
    renames: list[tuple[str, str]],
) -> ResolutionPlan | None:
    rule = next((r for r in kb.error_rules if r.id == outcome.rule_id), None)
    value = outcome.capture
    if rule is not None:
        remedy = rule.remedy
        if remedy.action == "unfixable":
            return None
        if remedy.action == "apt":
            new = [a for a in remedy.apt_for(value) if a not in plan.apt_packages]
            if new:
                return plan.with_apt(new, f"rule {rule.id}")
        elif remedy.action == "force_python":
            if remedy.python and plan.python_version != remedy.python and replan is not None:
                fresh = replan(remedy.python)
                if fresh is not None:
                    for p in fresh.pins:
                        tried[p.key] = [p.version]
                    return fresh
        elif remedy.action == "rename" and value:
            top = value.split(".", 1)[0]
            target = kb.correct_name(kb.map_import(top) or top)
            current = packages.get(top)
            if plan.pin_for(target) is None:
                version = kb.compat_pin(target, plan.python_version) or _latest_version(
                    index, target, plan.python_version)
                if version is not None:
                    renames.append((top, target))
                    packages[top] = target
                    tried.setdefault(canonicalize_name(target), []).append(version)
                    if current is not None and plan.pin_for(current) is not None:
                        return plan.with_rename(current, target, version, f"rule {rule.id}")
                    return plan.with_pin(target, version, f"rule {rule.id}")
        elif remedy.action == "pin":
            pass  # handled by the fallback step below
    for pkg in outcome.blamed:
        pin = plan.pin_for(pkg)
        if pin is None:
            continue
        history = tried.setdefault(pin.key, [pin.version])
        version = next_fallback(kb, pin.package, history)
        if version is not None:
            history.append(version)
            return plan.with_pin(pin.package, version, "version fallback")
    return None


def repair_loop(
    plan: ResolutionPlan,
    snippet: Snippet,
    budget: Budget,
    kb: KnowledgeBase,
    backend: Any,
    *,
    packages: Mapping[str, str] | None = None,
    index: PackageIndex | None = None,
    replan: Callable[[str], ResolutionPlan | None] | None = None,
    build_only: bool = False,
    import_lines: frozenset[int] = frozenset(),
    log_dir: Path | None = None,
) -> RepairResult:
    """Build and run ``plan``, applying remedies after each failure.

    Remedy order: the matched error rule's remedy, then the next fallback
    version of the blamed package. A timeout with nothing to change is
    retried as is. Stops on a passing category, after ``max_retries``
    attempts, or once the total budget is spent.
    """
    tried: dict[str, list[str]] = {p.key: [p.version] for p in plan.pins}
    pkg_map = dict(packages or {})
    renames: list[tuple[str, str]] = []
    history: list[tuple[tuple[str, ...], OutcomeCategory]] = []
    elapsed = 0.0
    wall_start = time.monotonic()
    virtual = isinstance(backend, MockBackend) and not backend.realtime
    outcome: ExecutionOutcome | None = None
    attempt = 0
    while attempt < budget.max_retries:
        spent = elapsed if virtual else max(elapsed, time.monotonic() - wall_start)
        remaining = budget.total_timeout_s - spent
        if remaining <= 0:
            break
        attempt += 1
        spec = EnvironmentSpec.from_plan(plan)
        outcome = build_and_run(spec, snippet, budget, backend, kb, attempt=attempt, build_only=build_only,
                                remaining=remaining, import_lines=import_lines)
        elapsed += outcome.duration_s
        history.append((spec.pins, outcome.category))
        if log_dir is not None:
            log_dir.mkdir(parents=True, exist_ok=True)
            (log_dir / f"attempt-{attempt}.log").write_text(
                f"pins: {' '.join(spec.pins)}\napt: {' '.join(spec.apt_packages)}\n"
                f"category: {outcome.category.value}\n\n{outcome.output_excerpt}\n", encoding="utf-8")
        if outcome.category in TERMINAL:
            break
        fixed = _apply_remedy(plan, outcome, kb, tried, pkg_map, index, replan, renames)
        if fixed is None:
            if outcome.category is OutcomeCategory.TIMEOUT:
                continue
            break
        plan = fixed
    if outcome is None:
        outcome = ExecutionOutcome(OutcomeCategory.TIMEOUT, None, "", 0.0, 0, "build")
    elif outcome.category not in TERMINAL and elapsed >= budget.total_timeout_s:
        outcome = replace(outcome, category=OutcomeCategory.TIMEOUT)
    return RepairResult(plan, outcome, attempt, history, renames, elapsed)
