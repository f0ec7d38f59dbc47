"""Bundled example problems with their known minimizers and multipliers."""
from __future__ import annotations

import shutil
from importlib import resources
from pathlib import Path

from .model import ProblemSpec
from .problemfile import load_multipliers_data, loads_problem
from .processes import ExtendedProcess, read_extended_csv

__all__ = ["EXAMPLES", "example_ids", "load_example", "load_example_minimizer",
           "example_multiplier_text", "example_files", "export_example"]

EXAMPLES = {
    "ex1": "scalar impulse with integral state; abnormal minimizer, infimum gap of 1",
    "ex2": "nonholonomic integrator with drift; normal minimizer, no gap",
    "ex3": "driftless nonholonomic integrator, half-plane cone; abnormal minimizer, no gap",
}

_SUFFIXES = (".toml", "_minimizer.csv", "_multipliers.toml")


def example_ids() -> list[str]:
    return sorted(EXAMPLES)


def _check(example_id: str) -> None:
    if example_id not in EXAMPLES:
        raise KeyError(f"unknown example {example_id!r}; known: {', '.join(example_ids())}")


def _text(name: str) -> str:
    return resources.files("impgap").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load_example(example_id: str) -> ProblemSpec:
    """Problem of a bundled example."""
    _check(example_id)
    return loads_problem(_text(f"{example_id}.toml"), f"{example_id}.toml")


def load_example_minimizer(example_id: str) -> ExtendedProcess:
    """Known extended minimizer sampled on 80 uniform intervals of ``[0, 2]``."""
    _check(example_id)
    return read_extended_csv(_text(f"{example_id}_minimizer.csv"))


def example_multiplier_text(example_id: str) -> str:
    _check(example_id)
    return _text(f"{example_id}_multipliers.toml")


def example_multiplier_data(example_id: str, n: int) -> dict:
    return load_multipliers_data(example_multiplier_text(example_id), n)


def example_files(example_id: str) -> list[str]:
    _check(example_id)
    return [example_id + s for s in _SUFFIXES]


def export_example(example_id: str, directory) -> list[Path]:
    """Copy the problem, minimizer and multiplier files to ``directory``.

    Raises
    ------
    KeyError
        Unknown example.
    OSError
        The directory cannot be created or written.
    """
    _check(example_id)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in example_files(example_id):
        src = resources.files("impgap").joinpath("data").joinpath(name)
        with resources.as_file(src) as path:
            shutil.copyfile(path, out / name)
        written.append(out / name)
    return written
