"""Interpreter version helpers and base-image naming."""

from __future__ import annotations

SHIPPED_PYTHONS: tuple[str, ...] = ("2.7", "3.5", "3.6", "3.7", "3.8", "3.9", "3.10", "3.11")
DEFAULT_PYTHON = "3.10"

_BASE_IMAGES = {
    "2.7": "python:2.7",
    "3.10": "python:3.10.12-slim",
}


def pyver_key(version: str) -> tuple[int, int]:
    """Return a sortable (major, minor) tuple for ``"3.10"``-style strings."""
    major, _, minor = version.partition(".")
    return int(major), int(minor or 0)


def base_image_for(python_version: str) -> str:
    return _BASE_IMAGES.get(python_version, f"python:{python_version}-slim")


def in_bounds(version: str, lower: str | None, upper: str | None) -> bool:
    key = pyver_key(version)
    if lower is not None and key < pyver_key(lower):
        return False
    if upper is not None and key > pyver_key(upper):
        return False
    return True
