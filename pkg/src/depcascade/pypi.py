"""Read-only package-index metadata, live or from a fixture directory.

Fixtures are files named ``<canonical-name>.json`` shaped like the index's
``/pypi/<name>/json`` response; only ``info.name`` and ``releases`` are read.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from packaging.specifiers import InvalidSpecifier, SpecifierSet
from packaging.utils import canonicalize_name
from packaging.version import InvalidVersion, Version

logger = logging.getLogger(__name__)

__all__ = [
    "PackageMetadata",
    "PackageNotFound",
    "IndexNetworkError",
    "PackageIndex",
    "FixtureIndex",
    "LiveIndex",
    "parse_index_document",
]

INDEX_URL = "https://pypi.org/pypi/{name}/json"


class PackageNotFound(LookupError):
    """The index has no project by that name."""


class IndexNetworkError(OSError):
    """The index could not be reached; the call may be retried."""


@dataclass(frozen=True)
class PackageMetadata:
    name: str
    versions: tuple[str, ...]  # ascending, final releases and pre-releases alike
    release_count: int
    requires_python: dict[str, str] = field(default_factory=dict, compare=False)

    def supports(self, version: str, python_version: str) -> bool:
        spec = self.requires_python.get(version)
        if not spec:
            return True
        try:
            # compare against a late micro release of the minor line
            return SpecifierSet(spec).contains(f"{python_version}.99", prereleases=True)
        except InvalidSpecifier:
            return True

    def candidates(self, python_version: str | None = None, *, prereleases: bool = False) -> list[str]:
        """Versions newest first, optionally filtered by interpreter support."""
        out = []
        for v in reversed(self.versions):
            if not prereleases and Version(v).is_prerelease:
                continue
            if python_version is not None and not self.supports(v, python_version):
                continue
            out.append(v)
        return out


def parse_index_document(doc: dict[str, Any]) -> PackageMetadata:
    info = doc.get("info") or {}
    releases = doc.get("releases") or {}
    parsed: dict[Version, str] = {}
    requires: dict[str, str] = {}
    released = 0
    for raw, files in releases.items():
        try:
            version = Version(raw)
        except InvalidVersion:
            continue
        live = [f for f in (files or []) if not f.get("yanked", False)]
        if not live:
            continue
        released += 1
        parsed[version] = raw
        spec = next((f.get("requires_python") for f in live if f.get("requires_python")), None)
        if spec:
            requires[raw] = spec
    ordered = tuple(parsed[v] for v in sorted(parsed))
    return PackageMetadata(str(info.get("name", "")), ordered, released, requires)


class PackageIndex(Protocol):
    def get_metadata(self, package: str) -> PackageMetadata: ...


class _CachedIndex:
    def __init__(self) -> None:
        self._cache: dict[str, PackageMetadata | PackageNotFound] = {}
        self._lock = threading.Lock()
        self.fetches = 0

    def get_metadata(self, package: str) -> PackageMetadata:
        key = canonicalize_name(package)
        with self._lock:
            hit = self._cache.get(key)
            if hit is None:
                try:
                    hit = self._fetch(key)
                except PackageNotFound as exc:
                    hit = exc
                self.fetches += 1
                self._cache[key] = hit
        if isinstance(hit, PackageNotFound):
            raise hit
        return hit

    def exists(self, package: str) -> bool:
        try:
            self.get_metadata(package)
        except PackageNotFound:
            return False
        return True

    def _fetch(self, key: str) -> PackageMetadata:
        raise NotImplementedError


class FixtureIndex(_CachedIndex):
    """Offline index; never touches the network."""

    def __init__(self, directory: Path | str) -> None:
        super().__init__()
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FileNotFoundError(f"{self.directory}: fixture directory not found")

    def _fetch(self, key: str) -> PackageMetadata:
        path = self.directory / f"{key}.json"
        if not path.is_file():
            raise PackageNotFound(key)
        meta = parse_index_document(json.loads(path.read_text(encoding="utf-8")))
        return meta if meta.name else PackageMetadata(key, meta.versions, meta.release_count, meta.requires_python)


class LiveIndex(_CachedIndex):
    def __init__(self, timeout: float = 10.0, url_template: str = INDEX_URL) -> None:
        super().__init__()
        self.timeout = timeout
        self.url_template = url_template

    def _fetch(self, key: str) -> PackageMetadata:
        url = self.url_template.format(name=key)
        req = urllib.request.Request(url, headers={"Accept": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                doc = json.load(resp)
        except urllib.error.HTTPError as exc:
            if exc.code == 404:
                raise PackageNotFound(key) from exc
            raise IndexNetworkError(f"{url}: HTTP {exc.code}") from exc
        except (urllib.error.URLError, socket.timeout, TimeoutError, ConnectionError) as exc:
            raise IndexNetworkError(f"{url}: {exc}") from exc
        return parse_index_document(doc)
