"""Curated example instances, one TOML file per member under data/zoo/."""

import glob
import os
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from typing import Dict, List

from src.config import SessionConfig, settings
from src.errors import NotFound
from src.ingest import Problem, load_problem

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
PREFIX = "zoo:"


@dataclass(frozen=True)
class ZooEntry:
    name: str
    path: str
    version: int
    description: str
    provenance: str


def zoo_directory(config: SessionConfig = settings) -> str:
    path = config.zoo_path
    return path if os.path.isabs(path) else os.path.join(ROOT, path)


def _entry(path: str) -> ZooEntry:
    with open(path, "rb") as handle:
        raw = tomllib.load(handle)
    stem = os.path.splitext(os.path.basename(path))[0]
    return ZooEntry(
        name=str(raw.get("name", stem)),
        path=path,
        version=int(raw.get("version", 1)),
        description=str(raw.get("description", "")),
        provenance=str(raw.get("provenance", "")),
    )


def zoo(config: SessionConfig = settings) -> List[ZooEntry]:
    """All members, sorted by name."""
    paths = glob.glob(os.path.join(zoo_directory(config), "*.toml"))
    return sorted((_entry(path) for path in paths), key=lambda e: e.name)


def zoo_entry(name: str, config: SessionConfig = settings) -> ZooEntry:
    entries: Dict[str, ZooEntry] = {e.name: e for e in zoo(config)}
    if name not in entries:
        raise NotFound(f"no zoo member named {name!r}", {"members": sorted(entries)})
    return entries[name]


def load_member(name: str, config: SessionConfig = settings) -> Problem:
    return load_problem(zoo_entry(name, config).path, config)


def resolve(reference: str, config: SessionConfig = settings) -> Problem:
    """A problem from a file path or a `zoo:NAME` reference."""
    if reference.startswith(PREFIX):
        return load_member(reference[len(PREFIX):], config)
    return load_problem(reference, config)
