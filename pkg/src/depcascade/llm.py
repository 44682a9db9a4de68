"""Last-resort version selection through a text-generation endpoint.

The model only ever chooses among versions the caller already vetted:
anything outside the offered candidates, or for a package that was not
asked about, is discarded.
"""

from __future__ import annotations

import json
import logging
import re
import socket
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Sequence

from packaging.utils import canonicalize_name

logger = logging.getLogger(__name__)

__all__ = ["LlmConfig", "LlmProposal", "LlmClient", "build_prompt", "extract_text", "parse_reply", "MAX_CANDIDATES"]

MAX_CANDIDATES = 10

Transport = Callable[[str, dict, float], dict]


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str = "local-model"
    temperature: float = 0.7
    max_tokens: int = 256
    timeout_s: float = 60.0
    max_concurrent: int = 1

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be at least 1")


@dataclass(frozen=True)
class LlmProposal:
    pins: tuple[tuple[str, str], ...]
    raw_text: str


def build_prompt(
    imports: Iterable[str],
    python_version: str,
    unpinned: Sequence[str],
    candidates: Mapping[str, Sequence[str]],
    tips: Iterable[str] = (),
    ecosystems: Iterable[str] = (),
) -> dict[str, Any]:
    """JSON prompt document; candidate lists are capped newest-first."""
    doc: dict[str, Any] = {
        "task": "Choose one version for each package so that the snippet's imports install together.",
        "python_version": python_version,
        "imports": sorted(imports),
        "packages": [
            {"name": pkg, "candidates": list(candidates.get(pkg, ()))[:MAX_CANDIDATES]}
            for pkg in unpinned
        ],
        "rules": [
            "Standard-library modules are already excluded; never propose them as packages.",
            "Use only versions listed in a package's candidates.",
            "Answer with a single JSON object mapping package name to version, and nothing else.",
        ],
        "response_schema": {"type": "object", "additionalProperties": {"type": "string"}},
    }
    eco = list(ecosystems)
    if eco:
        doc["ecosystems"] = eco
    tip_list = [t for t in tips if t]
    if tip_list:
        doc["tips"] = tip_list
    return doc


def extract_text(response: Any) -> str | None:
    """Generated text from the response shapes common local servers use."""
    if not isinstance(response, dict):
        return None
    for key in ("response", "text", "content", "output"):
        if isinstance(response.get(key), str):
            return response[key]
    choices = response.get("choices")
    if isinstance(choices, list) and choices and isinstance(choices[0], dict):
        first = choices[0]
        if isinstance(first.get("text"), str):
            return first["text"]
        message = first.get("message")
        if isinstance(message, dict) and isinstance(message.get("content"), str):
            return message["content"]
    return None


_FENCE = re.compile(r"^```(?:json)?\s*|\s*```$", re.MULTILINE)


def parse_reply(text: str) -> dict[str, str] | None:
    cleaned = _FENCE.sub("", text.strip())
    start, end = cleaned.find("{"), cleaned.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        data = json.loads(cleaned[start : end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(data, dict):
        return None
    out = {}
    for k, v in data.items():
        if isinstance(k, str) and isinstance(v, (str, int, float)) and not isinstance(v, bool):
            out[k] = str(v)
    return out


def _urllib_transport(url: str, body: dict, timeout: float) -> dict:
    req = urllib.request.Request(url, data=json.dumps(body).encode(), method="POST",
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.load(resp)


class LlmClient:
    def __init__(self, config: LlmConfig, transport: Transport | None = None) -> None:
        self.config = config
        self.transport = transport or _urllib_transport
        self.calls = 0
        self._sem = threading.BoundedSemaphore(config.max_concurrent)
        self._count_lock = threading.Lock()

    def _request(self, prompt_text: str) -> str | None:
        body = {
            "model": self.config.model,
            "prompt": prompt_text,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "stream": False,
        }
        with self._count_lock:
            self.calls += 1
        with self._sem:
            try:
                response = self.transport(self.config.endpoint, body, self.config.timeout_s)
            except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError, OSError,
                    json.JSONDecodeError) as exc:
                logger.warning("LLM endpoint failed: %s", exc)
                raise _Unreachable from exc
        return extract_text(response)

    def select(self, prompt: dict[str, Any]) -> LlmProposal | None:
        """Ask once, reprompt once on an unparseable reply, then give up."""
        allowed = {
            canonicalize_name(p["name"]): (p["name"], set(p["candidates"])) for p in prompt.get("packages", [])
        }
        text_prompt = json.dumps(prompt, indent=1)
        for attempt in range(2):
            try:
                text = self._request(text_prompt)
            except _Unreachable:
                return None
            reply = parse_reply(text) if text is not None else None
            if reply is not None:
                pins = []
                for pkg, version in reply.items():
                    hit = allowed.get(canonicalize_name(pkg))
                    if hit is None or version not in hit[1]:
                        logger.info("dropping out-of-set LLM pin %s==%s", pkg, version)
                        continue
                    pins.append((hit[0], version))
                return LlmProposal(tuple(pins), text or "")
            if attempt == 0:
                retry = dict(prompt)
                retry["correction"] = "The previous reply was not a JSON object. Reply with JSON only."
                text_prompt = json.dumps(retry, indent=1)
        return None


class _Unreachable(Exception):
    pass
