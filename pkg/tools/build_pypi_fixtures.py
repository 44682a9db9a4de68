"""Regenerate tests/fixtures/pypi from the bundled KB plus a few extra releases.

Every version the seed KB can pin for the listed packages is published, so
offline tests exercise the same version space as the curated tables.
"""

from __future__ import annotations

import json
from pathlib import Path

from packaging.utils import canonicalize_name
from packaging.version import Version

from depcascade.kb import load_kb

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "pypi"

EXTRA = {
    "numpy": ["1.13.3", "2.0.0", "2.1.0"],
    "pandas": ["2.2.3"],
    "requests": ["2.0.0"],
    "tensorflow": ["2.16.1"],
    "Flask": ["2.3.3", "3.0.3"],
    "Flask-Login": ["0.5.0", "0.6.3"],
    "Werkzeug": ["2.3.8", "3.0.3"],
    "tweepy": ["3.10.0", "4.14.0"],
    "praw": ["6.5.1", "7.7.1"],
    "xlrd": ["1.1.0", "1.2.0", "2.0.1"],
    "PyPDF2": ["1.26.0", "2.12.1", "3.0.1"],
    "gym": ["0.21.0", "0.25.2", "0.26.2"],
    "openai": ["0.27.8", "0.28.1", "1.3.0"],
    "moviepy": ["1.0.3", "2.0.0"],
    "imageio": ["2.34.0", "3.0.0"],
    "paho-mqtt": ["1.6.1", "2.1.0"],
    "tabulate": ["0.8.10", "0.9.0"],
    "xmltodict": ["0.12.0", "0.13.0"],
    "colorama": ["0.4.4", "0.4.6"],
    "termcolor": ["2.3.0", "2.4.0"],
    "arrow": ["1.2.3", "1.3.0"],
    "pyfiglet": ["0.8.post1", "1.0.2"],
    "emoji": ["2.8.0", "2.10.1"],
    "schedule": ["1.1.0", "1.2.1"],
    "humanize": ["4.8.0", "4.9.0"],
    "pyperclip": ["1.8.1", "1.8.2"],
    "pyserial": ["2.7", "3.4", "3.5"],
    "squatlib": ["0.0.1"],
}

REQUIRES = {
    ("numpy", "1.26.4"): ">=3.9",
    ("numpy", "2.0.0"): ">=3.9",
    ("numpy", "2.1.0"): ">=3.10",
    ("pandas", "2.2.2"): ">=3.9",
    ("pandas", "2.2.3"): ">=3.9",
    ("tensorflow", "2.15.1"): ">=3.9",
    ("tensorflow", "2.16.1"): ">=3.9",
}


def main() -> None:
    kb = load_kb()
    versions: dict[str, set[str]] = {name: set(extra) for name, extra in EXTRA.items()}
    for name in ["scikit-learn", "scipy", "matplotlib", "seaborn", "keras", "opencv-python", "Pillow",
                 "beautifulsoup4", "pyserial", "PyYAML", *EXTRA]:
        versions.setdefault(name, set())
        for py in kb.compat_map.get(canonicalize_name(name), {}).values():
            versions[name].add(py)
        versions[name].update(kb.fallback_chain(name))
        for t in kb.templates:
            for p, v in t.pins:
                if canonicalize_name(p) == canonicalize_name(name):
                    versions[name].add(v)
        for (p, _), spec in kb.constraints.items():
            if canonicalize_name(p) == canonicalize_name(name) and spec.startswith("=="):
                versions[name].add(spec[2:])
    OUT.mkdir(parents=True, exist_ok=True)
    for name, vs in sorted(versions.items()):
        releases = {
            v: [{"filename": f"{name}-{v}.tar.gz", "yanked": False,
                 "requires_python": REQUIRES.get((name, v))}]
            for v in sorted(vs, key=Version)
        }
        doc = {"info": {"name": name, "version": max(vs, key=Version)}, "releases": releases}
        (OUT / f"{canonicalize_name(name)}.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(versions)} fixtures to {OUT}")


if __name__ == "__main__":
    main()
