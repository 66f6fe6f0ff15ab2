"""Bundled example systems in the JSON system-file format."""

from __future__ import annotations

import json
from importlib import resources

from ..system import System


def names() -> list[str]:
    """Names of the bundled systems, sorted."""
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def path(name: str):
    """Traversable for the bundled file ``<name>.json``."""
    p = resources.files(__name__) / f"{name}.json"
    if not p.is_file():
        raise KeyError(f"no bundled system named {name!r}; available: {', '.join(names())}")
    return p


def load(name: str, check: bool = True) -> System:
    return System.from_dict(json.loads(path(name).read_text(encoding="utf-8")), check=check)


def load_all(check: bool = True) -> dict[str, System]:
    return {name: load(name, check) for name in names()}
