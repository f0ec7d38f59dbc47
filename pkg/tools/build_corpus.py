"""Regenerate the bundled example corpus from closed-form expressions.

Run from the repository root::

    python3 tools/build_corpus.py

Trajectories and multiplier paths are written from their closed forms, not
from the package integrators, so the corpus is an independent oracle for
the integration and residual tests.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from impgap.problemfile import dumps_multipliers
from impgap.processes import ExtendedProcess, write_extended_csv

DATA = Path(__file__).resolve().parents[1] / "src" / "impgap" / "data"
N = 80
S = np.linspace(0.0, 2.0, N + 1)
MID = 0.5 * (S[:-1] + S[1:])
FIRST = MID < 1.0

EX1 = '''name = "ex1"
description = "Scalar impulse with integral state: extended infimum -1, strict infimum 0"
n = 2
m = 1
K = 1.0
cost = "-x2_1"

[fields]
f = ["0", "x1"]
g = [["1", "0"]]

[cone]
kind = "orthant"
tags = ["nonneg"]

[target]
t1 = 0.0
x1 = [0.0, 0.0]
t2 = 1.0
x2 = ["free", [-inf, 0.0]]
epigraph = false
'''

EX2 = '''name = "ex2"
description = "Nonholonomic integrator with drift: normal extremal, no gap"
n = 3
m = 2
K = 2.0
cost = "-x2_1"

[fields]
f = ["0", "x2", "0"]
g = [["1", "0", "x2"], ["0", "1", "-x1"]]

[cone]
kind = "full"

[target]
t1 = 0.0
x1 = [1.0, 0.0, 0.0]
t2 = 1.0
x2 = [[-inf, 0.0], [-inf, 0.0], [-inf, 0.0]]
epigraph = false
'''

EX3 = EX2.replace('"ex2"', '"ex3"').replace(
    "Nonholonomic integrator with drift: normal extremal, no gap",
    "Driftless nonholonomic integrator on a half-plane cone: abnormal, no gap").replace(
    'f = ["0", "x2", "0"]', 'f = ["0", "0", "0"]').replace(
    'kind = "full"', 'kind = "orthant"\ntags = ["free", "nonneg"]')


def ex1_minimizer() -> ExtendedProcess:
    y0 = np.minimum(S, 1.0)
    x1 = np.maximum(S - 1.0, 0.0)
    y = np.column_stack([x1, np.zeros_like(S)])
    nu = np.maximum(S - 1.0, 0.0)
    w0 = np.where(FIRST, 1.0, 0.0)
    w = np.where(FIRST, 0.0, 1.0)[:, None]
    return ExtendedProcess(s=S, y0=y0, y=y, nu=nu, w0=w0, w=w)


def ex23_minimizer() -> ExtendedProcess:
    y0 = np.minimum(S, 1.0)
    x1 = np.minimum(2.0 - S, 1.0)
    y = np.column_stack([x1, np.zeros_like(S), np.zeros_like(S)])
    nu = np.maximum(S - 1.0, 0.0)
    w0 = np.where(FIRST, 1.0, 0.0)
    w = np.column_stack([np.where(FIRST, 0.0, -1.0), np.zeros(N)])
    return ExtendedProcess(s=S, y0=y0, y=y, nu=nu, w0=w0, w=w)


def ex1_multipliers(c: float = -1.0) -> np.ndarray:
    """p0 = 0, p1 = c (1 - s) on [0, 1] and 0 after, p2 = c with c < 0."""
    p1 = c * np.maximum(1.0 - S, 0.0)
    return np.column_stack([np.zeros_like(S), p1, np.full_like(S, c)])


def ex3_multipliers(gamma: float = 1.0, beta: float = 3.0) -> np.ndarray:
    """p3 = -gamma, p2 = gamma - beta on [0, 1] and gamma (2 - s) - beta on [1, 2]."""
    p2 = np.where(S <= 1.0, gamma - beta, gamma * (2.0 - S) - beta)
    return np.column_stack([np.zeros_like(S), np.zeros_like(S), p2, np.full_like(S, -gamma)])


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    for name, text in (("ex1", EX1), ("ex2", EX2), ("ex3", EX3)):
        (DATA / f"{name}.toml").write_text(text, encoding="utf-8")
    write_extended_csv(ex1_minimizer(), DATA / "ex1_minimizer.csv")
    write_extended_csv(ex23_minimizer(), DATA / "ex2_minimizer.csv")
    write_extended_csv(ex23_minimizer(), DATA / "ex3_minimizer.csv")
    (DATA / "ex1_multipliers.toml").write_text(dumps_multipliers(
        0.0, 0.0, S, ex1_multipliers(),
        comment="Abnormal set: p0 = 0, p2 = -1, p1 = -(1 - s) on [0, 1], 0 on [1, 2]."),
        encoding="utf-8")
    (DATA / "ex2_multipliers.toml").write_text(dumps_multipliers(
        1.0, 0.0, S, np.zeros((N + 1, 4)),
        comment="Normal set: lambda = 1, p = 0, pi = 0."), encoding="utf-8")
    (DATA / "ex3_multipliers.toml").write_text(dumps_multipliers(
        0.0, 0.0, S, ex3_multipliers(),
        comment="Abnormal set with alpha = 0, gamma = 1, beta = 3."), encoding="utf-8")


if __name__ == "__main__":
    main()
