import numpy as np
import pytest

from impgap.corpus import (EXAMPLES, example_files, example_ids, example_multiplier_data,
                           export_example, load_example, load_example_minimizer)
from impgap.model import validate, violation
from impgap.problemfile import dumps_problem, load_problem, loads_problem

EXPECTED_COST = {"ex1": -1.0, "ex2": 0.0, "ex3": 0.0}


def test_ids():
    assert example_ids() == ["ex1", "ex2", "ex3"]
    assert set(EXAMPLES) == set(example_ids())


@pytest.mark.parametrize("key", ["ex1", "ex2", "ex3"])
def test_minimizer_feasible_with_known_cost(key):
    p = load_example(key)
    ep = load_example_minimizer(key)
    assert ep.N == 80 and ep.S == pytest.approx(2.0)
    assert violation(p, ep.endpoint, ep.nu[-1]) <= 1e-12
    assert p.cost.value(ep.extended_endpoint) == pytest.approx(EXPECTED_COST[key], abs=1e-12)
    np.testing.assert_allclose(ep.w0 + np.linalg.norm(ep.w, axis=1), 1.0)
    for w in ep.w:
        assert p.cone.contains(w)


@pytest.mark.parametrize("key", ["ex1", "ex2", "ex3"])
def test_problem_validates_and_roundtrips(key):
    p = load_example(key)
    assert validate(p).ok
    q = loads_problem(dumps_problem(p))
    assert dumps_problem(q) == dumps_problem(p)


def test_multiplier_data_signs():
    for key in example_ids():
        n = load_example(key).n
        data = example_multiplier_data(key, n)
        assert data["pi"] <= 0 and data["lambda"] >= 0


def test_unknown_example():
    with pytest.raises(KeyError, match="unknown example"):
        load_example("ex9")
    with pytest.raises(KeyError):
        example_files("ex9")


def test_export(tmp_path):
    paths = export_example("ex3", tmp_path / "sub")
    assert [p.name for p in paths] == example_files("ex3")
    p = load_problem(paths[0])
    assert p.n == 3 and p.m == 2
    assert dumps_problem(p) == dumps_problem(load_example("ex3"))
