import math

import numpy as np
import pytest

from impgap.corpus import example_ids, example_multiplier_text, load_example
from impgap.problemfile import (ProblemFileError, dumps_multipliers, dumps_problem,
                                load_multipliers_data, load_problem, loads_problem)
from impgap.processes import (read_extended_csv, read_strict_csv, write_extended_csv,
                              write_strict_csv)
from impgap.dynamics import integrate_strict

GOOD = """
n = 1
m = 1
K = inf
cost = "x2_1^2"
[fields]
f = ["-x1"]
g = [["1"]]
[target]
t1 = 0.0
x1 = [1.0]
t2 = [0.5, 2.0]
x2 = ["free"]
"""


def test_minimal_file_defaults():
    p = loads_problem(GOOD)
    assert p.cone.kind == "full" and math.isinf(p.K)
    assert p.target.lo[2] == 0.5 and p.target.hi[2] == 2.0


@pytest.mark.parametrize("eid", example_ids())
def test_dump_load_round_trip(eid):
    p = load_example(eid)
    q = loads_problem(dumps_problem(p))
    assert dumps_problem(q) == dumps_problem(p)
    assert q.target == p.target and q.cone == p.cone and q.K == p.K


@pytest.mark.parametrize("text, fragment", [
    ("n = 1\n", "missing key"),
    (GOOD.replace('f = ["-x1"]', 'f = ["-x1", "0"]'), "f has 2 entries"),
    (GOOD.replace('"-x1"', '"-y"'), "undeclared"),
    (GOOD.replace('"-x1"', '"-x1 +"'), "expression"),
    (GOOD.replace("K = inf", "K = -1"), "K must be positive"),
    (GOOD.replace("[target]", '[cone]\nkind = "orthant"\ntags = ["sideways"]\n[target]'),
     "cone"),
    ("n = [", ""),
])
def test_malformed_files(text, fragment):
    with pytest.raises(ProblemFileError) as info:
        loads_problem(text)
    assert fragment in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ProblemFileError):
        load_problem(tmp_path / "nope.toml")


def test_multiplier_round_trip():
    s = np.linspace(0, 2, 5)
    P = np.arange(15, dtype=float).reshape(5, 3)
    text = dumps_multipliers(0.0, -0.5, s=s, P=P, comment="test")
    d = load_multipliers_data(text, 2)
    np.testing.assert_array_equal(d["P"], P)
    assert d["pi"] == -0.5 and d["lambda"] == 0.0
    d = load_multipliers_data(dumps_multipliers(1.0, 0.0, terminal=[1, 2, 3]), 2)
    np.testing.assert_array_equal(d["terminal"], [1, 2, 3])
    with pytest.raises(ProblemFileError):
        load_multipliers_data("lambda = 1\n", 2)
    with pytest.raises(ProblemFileError):
        load_multipliers_data(dumps_multipliers(1.0, 0.0, terminal=[1, 2]), 2)


def test_bundled_multiplier_files_parse():
    for eid in example_ids():
        p = load_example(eid)
        d = load_multipliers_data(example_multiplier_text(eid), p.n)
        assert d["pi"] <= 0 and d["lambda"] >= 0


def test_trajectory_csv_round_trips(examples):
    _, ep = examples["ex2"]
    back = read_extended_csv(write_extended_csv(ep))
    for name in ("s", "y0", "y", "nu", "w0", "w"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ep, name))
    p, _ = examples["ex1"]
    sp = integrate_strict(p, np.ones((4, 1)), [0.0, 0.0], np.linspace(0, 1, 5))
    back = read_strict_csv(write_strict_csv(sp))
    np.testing.assert_array_equal(back.x, sp.x)
    np.testing.assert_array_equal(back.du, sp.du)


def test_trajectory_csv_errors():
    with pytest.raises(ValueError):
        read_extended_csv("a,b\n1,2\n3,4\n")
    with pytest.raises(ValueError):
        read_extended_csv("s,y0,y_1,nu,w0,w_1\n0,0,0,0,1,0\n1,1,0,0,1,0\n")
