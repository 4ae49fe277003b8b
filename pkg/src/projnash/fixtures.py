"""Shipped example problems, loadable by name."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .cli import parse_problem
from .game import GameInstance

FIXTURE_NAMES = (
    "expand", "selfmap", "spin", "chase", "corner", "offside",
    "vacuous", "disk", "table",
)

#: the utility-reducible instances used by the equivalence diagnostics
EQUIVALENCE_FIXTURES = ("expand", "selfmap", "chase", "corner", "offside")


def fixture_text(name: str) -> str:
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; known: {FIXTURE_NAMES}")
    return resources.files("projnash").joinpath(f"fixtures/{name}.gnep").read_text()


def fixture_path(name: str) -> Path:
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; known: {FIXTURE_NAMES}")
    return Path(str(resources.files("projnash").joinpath(f"fixtures/{name}.gnep")))


def load_fixture(name: str) -> GameInstance:
    return parse_problem(fixture_text(name))
