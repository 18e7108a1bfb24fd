"""Bundled example sessions and types."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .dsl import SpecFile, parse_spec

FILES = (
    "election",
    "modular_election",
    "connectors",
    "negatives",
    "composition",
    "sequencing",
    "interleaving",
    "conditions",
)


def corpus_text(name: str) -> str:
    return resources.files("modsess").joinpath("corpus", f"{name}.sess").read_text(encoding="utf-8")


def corpus_path(name: str):
    return resources.files("modsess").joinpath("corpus", f"{name}.sess")


@lru_cache(maxsize=None)
def load(name: str) -> SpecFile:
    return parse_spec(corpus_text(name))


def session(file: str, name: str):
    return load(file).session(name)
