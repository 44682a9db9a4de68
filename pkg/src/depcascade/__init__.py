"""Deterministic-first dependency resolution for Python snippets."""

from __future__ import annotations

__version__ = "0.1.0"
