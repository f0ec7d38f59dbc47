import math

import numpy as np
import pytest

from impgap.problemfile import loads_problem
from impgap.solver import (Candidate, SolveConfig, brute_force_oracle, minimize_violation,
                           solve_extended, solve_strict_restricted)

FAST = SolveConfig(N=20, multistarts=2, outer_iterations=8, inner_iterations=200)

UNREACHABLE = """
n = 1
m = 1
cost = "0"
[fields]
f = ["0"]
g = [["0"]]
[target]
t1 = 0.0
x1 = [0.0]
t2 = 1.0
x2 = [1.0]
"""


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(N=0)
    with pytest.raises(ValueError):
        SolveConfig(penalty_growth=1.0)
    with pytest.raises(ValueError):
        SolveConfig(gradient="bfgs")


def test_extended_example1_reaches_minus_one(examples):
    p, _ = examples["ex1"]
    c = solve_extended(p, FAST)
    assert c.feasible
    assert c.cost <= -0.95
    assert c.residual <= FAST.tol_feas
    assert c.process.nu[-1] <= p.K + 1e-6


def test_strict_restricted_respects_lower_bound(examples):
    p, _ = examples["ex1"]
    eps = 0.1
    c = solve_strict_restricted(p, eps, FAST)
    assert c.feasible
    assert c.eps == eps
    assert c.process.w0.min() >= eps - 1e-12
    assert c.cost == pytest.approx(0.0, abs=1e-4)


def test_strict_eps_outside_range(examples):
    p, _ = examples["ex1"]
    for eps in (0.0, 1.0):
        with pytest.raises(ValueError):
            solve_strict_restricted(p, eps, FAST)


def test_deterministic_for_fixed_seed(examples):
    p, _ = examples["ex2"]
    a = solve_extended(p, FAST)
    b = solve_extended(p, FAST)
    assert a.cost == b.cost
    np.testing.assert_array_equal(a.process.Z, b.process.Z)


def test_candidate_invariants(examples):
    p, _ = examples["ex2"]
    c = solve_extended(p, FAST)
    assert isinstance(c, Candidate)
    ep = c.process
    np.testing.assert_allclose(ep.w0 + np.linalg.norm(ep.w, axis=1), 1.0, atol=1e-12)
    assert c.recompute_residual(p) == pytest.approx(c.residual, abs=1e-12)
    assert len(c.runs) == FAST.multistarts
    assert c.log
    assert c.feasible == (c.residual <= FAST.tol_feas)
    assert c.cost == pytest.approx(p.cost.value(np.r_[ep.Z[0], ep.Z[-1], ep.nu[-1]]), abs=1e-12)


def test_unreachable_target_is_reported_infeasible():
    p = loads_problem(UNREACHABLE)
    c = solve_extended(p, FAST)
    assert not c.feasible
    assert c.residual == pytest.approx(1.0, abs=1e-6)


def test_restricted_cost_monotone_in_eps(examples):
    """Smaller ``eps`` enlarges the feasible set."""
    p, _ = examples["ex1"]
    costs = [solve_strict_restricted(p, e, FAST).cost for e in (0.4, 0.2, 0.1)]
    assert all(b <= a + 1e-4 for a, b in zip(costs, costs[1:]))


def test_fd_gradient_option_agrees(examples):
    p, _ = examples["ex2"]
    base = dict(N=10, multistarts=2, outer_iterations=6, inner_iterations=150)
    a = solve_extended(p, SolveConfig(**base))
    b = solve_extended(p, SolveConfig(gradient="fd", **base))
    assert a.feasible and b.feasible
    assert b.cost == pytest.approx(a.cost, abs=1e-4)
    assert b.cost == pytest.approx(0.0, abs=1e-4)


# frozen brute-force values

def test_brute_force_example1_extended(examples):
    p, _ = examples["ex1"]
    r = brute_force_oracle(p, levels=(0.0, 1.0), N_bf=4)
    assert r.feasible
    assert r.cost == pytest.approx(-1.0, abs=1e-12)
    assert r.total == 15  # the all-impulse sequence cannot span the horizon


def test_brute_force_example1_strict(examples):
    p, _ = examples["ex1"]
    r = brute_force_oracle(p, levels=(0.0, 0.5, 0.9), N_bf=4, eps=0.05)
    assert r.feasible
    assert r.cost == pytest.approx(0.0, abs=1e-12)
    r0 = brute_force_oracle(p, levels=(0.0,), N_bf=4)
    assert r0.cost == pytest.approx(0.0, abs=1e-12)
    assert r0.feasible_count == 1


def test_brute_force_bounds_solver(examples):
    p, _ = examples["ex1"]
    bf = brute_force_oracle(p, levels=(0.0, 0.5, 1.0), N_bf=4)
    c = solve_extended(p, FAST)
    assert c.cost <= bf.cost + 1e-4


def test_brute_force_budget(examples):
    p, _ = examples["ex1"]
    with pytest.raises(ValueError, match="budget"):
        brute_force_oracle(p, levels=np.linspace(0, 1, 100), N_bf=6)
    with pytest.raises(ValueError):
        brute_force_oracle(p, levels=(0.0,), N_bf=7)


def test_brute_force_infeasible():
    r = brute_force_oracle(loads_problem(UNREACHABLE), levels=(0.0, 1.0), N_bf=3)
    assert not r.feasible
    assert math.isinf(r.cost)


def test_minimize_violation_frozen_value(examples):
    """Independent SLSQP oracle on the free-initial-point formulation gave
    0.01338 (N=40) and 0.01359 (N=20) at eps=0.05, delta=0.1."""
    p, ep = examples["ex1"]
    cfg = SolveConfig(N=40, multistarts=2)
    c = minimize_violation(p, ep, 0.1, 0.05, cfg)
    assert c.ball_distance is not None and c.ball_distance <= 0.1 + 1e-9
    assert c.cost == pytest.approx(0.0134, abs=6e-4)


def test_generated_cone_solve():
    p = loads_problem("""
n = 2
m = 2
cost = "x2_2"
[fields]
f = ["0", "0"]
g = [["1", "0"], ["0", "1"]]
[cone]
kind = "generated"
generators = [[1.0, 0.0], [1.0, 1.0]]
[target]
t1 = 0.0
x1 = [0.0, 0.0]
t2 = 1.0
x2 = [1.0, "free"]
""")
    c = solve_extended(p, FAST)
    assert c.feasible
    assert c.cost == pytest.approx(0.0, abs=1e-4)
    for w in c.process.w:
        assert p.cone.contains(w, tol=1e-8)
