"""Problem documents shipped with the package."""

from importlib import resources
from pathlib import Path


def path(name: str) -> Path:
    p = resources.files(__name__) / f"{name}.prob"
    return Path(str(p))


def names() -> list:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".prob"))
