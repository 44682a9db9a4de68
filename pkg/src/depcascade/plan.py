"""Resolution plans and the level-to-confidence table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from packaging.utils import canonicalize_name

__all__ = ["Pin", "ResolutionPlan", "CONFIDENCE", "assign_confidence", "LEVEL_NAMES"]

CONFIDENCE = {1: 10, 2: 9, 3: 8, 4: 7, 5: 7, 6: 3}
LEVEL_NAMES = {
    1: "session-memory",
    2: "compat-map",
    3: "ecosystem-template",
    4: "co-occurrence",
    5: "heuristics",
    6: "llm",
}


def assign_confidence(level: int | None) -> int:
    """Confidence for a plan finished at ``level``; ``None`` means unresolved."""
    if level is None:
        return 0
    try:
        return CONFIDENCE[level]
    except KeyError:
        raise ValueError(f"no such cascade level: {level}") from None


@dataclass(frozen=True, order=True)
class Pin:
    package: str
    version: str

    @property
    def key(self) -> str:
        return canonicalize_name(self.package)

    @property
    def requirement(self) -> str:
        return f"{self.package}=={self.version}"


@dataclass(frozen=True)
class ResolutionPlan:
    python_version: str
    pins: tuple[Pin, ...]
    apt_packages: tuple[str, ...] = ()
    confidence: int = 0
    level: int | None = None
    rationale: tuple[tuple[str, str], ...] = ()  # (package, provenance note)

    def __post_init__(self) -> None:
        if not 0 <= self.confidence <= 10:
            raise ValueError("confidence must be within 0..10")
        keys = [p.key for p in self.pins]
        if len(set(keys)) != len(keys):
            raise ValueError("a package may be pinned only once")

    def pin_for(self, package: str) -> Pin | None:
        key = canonicalize_name(package)
        return next((p for p in self.pins if p.key == key), None)

    def with_pin(self, package: str, version: str, note: str) -> ResolutionPlan:
        key = canonicalize_name(package)
        pins = tuple(Pin(p.package, version) if p.key == key else p for p in self.pins)
        if all(p.key != key for p in self.pins):
            pins += (Pin(package, version),)
        return ResolutionPlan(self.python_version, pins, self.apt_packages, self.confidence,
                              self.level, self.rationale + ((package, note),))

    def with_apt(self, packages: tuple[str, ...] | list[str], note: str) -> ResolutionPlan:
        added = tuple(a for a in dict.fromkeys(packages) if a not in self.apt_packages)
        return ResolutionPlan(self.python_version, self.pins, self.apt_packages + added,
                              self.confidence, self.level, self.rationale + (("apt", note),))

    def with_rename(self, old: str, new: str, version: str, note: str) -> ResolutionPlan:
        key = canonicalize_name(old)
        pins = tuple(Pin(new, version) if p.key == key else p for p in self.pins)
        if all(p.key != key for p in self.pins):
            pins += (Pin(new, version),)
        seen: dict[str, Pin] = {}
        for p in pins:
            seen.setdefault(p.key, p)
        return ResolutionPlan(self.python_version, tuple(seen.values()), self.apt_packages,
                              self.confidence, self.level, self.rationale + ((new, note),))

    def to_dict(self) -> dict[str, Any]:
        return {
            "python_version": self.python_version,
            "pins": [p.requirement for p in self.pins],
            "apt_packages": list(self.apt_packages),
            "confidence": self.confidence,
            "level": self.level,
            "rationale": [[pkg, note] for pkg, note in self.rationale],
        }

    def fingerprint_fields(self) -> dict[str, Any]:
        """The parts of a plan that determine the built environment."""
        return {
            "python_version": self.python_version,
            "pins": sorted(p.requirement for p in self.pins),
            "apt_packages": sorted(self.apt_packages),
        }
