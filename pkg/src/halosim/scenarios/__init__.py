"""Bundled scenario files shipped with the package."""
from __future__ import annotations

from importlib import resources
from pathlib import Path


def bundled_names() -> list[str]:
    root = resources.files(__name__)
    return sorted(
        entry.name[: -len(".yaml")]
        for entry in root.iterdir()
        if entry.name.endswith(".yaml")
    )


def bundled_path(name: str) -> Path:
    candidate = resources.files(__name__) / f"{name}.yaml"
    if not candidate.is_file():
        raise FileNotFoundError(
            f"no bundled scenario named {name!r}; available: {bundled_names()}"
        )
    return Path(str(candidate))
