import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from impgap.model import (ControlCone, CostSpec, ProblemSpec, TargetSpec, VectorFieldSet,
                          normal_cone_generators, project_cone, validate)


def _dense_directions(m, count, rng):
    d = rng.normal(size=(count, m))
    return d / np.linalg.norm(d, axis=1)[:, None]


def test_example1_is_valid(examples):
    p, _ = examples["ex1"]
    assert validate(p).ok
    assert p.cone.kind == "orthant" and p.K == 1.0 and (p.n, p.m) == (2, 1)


def test_nonpositive_K_reported(examples):
    p, _ = examples["ex1"]
    bad = ProblemSpec(p.fields, p.cone, p.target, p.cost, K=0.0)
    assert any("K must be positive" in s for s in validate(bad).issues)


def test_decreasing_cost_in_v_reported(examples):
    p, _ = examples["ex1"]
    bad = ProblemSpec(p.fields, p.cone, p.target, CostSpec.from_string("-v", 2), K=1.0)
    assert any("non-decreasing" in s for s in validate(bad).issues)


def test_empty_target_reported(examples):
    p, _ = examples["ex1"]
    t = TargetSpec.from_parts("free", ["free", "free"], "free", ["free", "free"],
                              halfspaces=[([0, 1, 0, 0, 0, 0], -1.0), ([0, -1, 0, 0, 0, 0], -1.0)])
    bad = ProblemSpec(p.fields, p.cone, t, p.cost, K=1.0)
    assert any("empty" in s for s in validate(bad).issues)


def test_generated_cone_dimension_limit():
    gens = np.eye(7)
    cone = ControlCone.generated(gens)
    with pytest.raises(ValueError):
        project_cone(cone, np.ones(7))


def test_projection_examples():
    assert project_cone(ControlCone.orthant(["nonneg"]), [-2.0])[0] == 0.0
    np.testing.assert_allclose(project_cone(ControlCone.orthant(["free", "nonneg"]), [1.0, -3.0]),
                               [1.0, 0.0])
    s = 1 / math.sqrt(2)
    cone = ControlCone.generated([[1.0, 0.0], [s, s]])
    p = project_cone(cone, [0.0, 1.0])
    np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-12)
    # grid search over the cone's directions at resolution 1e-4
    ang = np.arange(0.0, math.pi / 4 + 1e-12, 1e-4)
    dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    r = np.clip(dirs @ np.array([0.0, 1.0]), 0.0, None)
    best = (r[:, None] * dirs)[np.argmin(np.linalg.norm(r[:, None] * dirs - [0, 1], axis=1))]
    np.testing.assert_allclose(p, best, atol=1e-4)


cones = st.one_of(
    st.integers(1, 3).map(ControlCone.full),
    st.lists(st.sampled_from(["free", "nonneg", "nonpos", "zero"]), min_size=1, max_size=3).map(
        ControlCone.orthant),
    st.integers(0, 10_000).map(lambda s: ControlCone.generated(
        np.random.default_rng(s).normal(size=(np.random.default_rng(s).integers(1, 5), 3)))),
)


@settings(max_examples=60, deadline=None)
@given(cone=cones, seed=st.integers(0, 10_000))
def test_projection_optimality_conditions(cone, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=cone.m)
    p = project_cone(cone, q)
    r = q - p
    assert abs(r @ p) <= 1e-10
    for g in cone.generator_matrix:
        assert r @ g <= 1e-10
    assert cone.contains(p, 1e-9)


@settings(max_examples=30, deadline=None)
@given(cone=cones, seed=st.integers(0, 10_000))
def test_max_unit_matches_grid_search(cone, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=cone.m)
    val, d = cone.max_unit(q)
    if cone.is_trivial:
        assert val == -math.inf
        return
    assert abs(np.linalg.norm(d) - 1.0) <= 1e-12 and cone.contains(d, 1e-9)
    assert abs(q @ d - val) <= 1e-12
    # sample the cone by projecting random directions and normalizing
    P = np.array([cone.project(x) for x in _dense_directions(cone.m, 3000, rng)])
    P = P[np.linalg.norm(P, axis=1) > 1e-9]
    sample = np.vstack([P / np.linalg.norm(P, axis=1)[:, None], cone.generator_matrix])
    assert (sample @ q).max() <= val + 1e-9
    if np.linalg.norm(cone.project(q)) > 1e-9:
        assert abs(val - np.linalg.norm(cone.project(q))) <= 1e-12


def test_normal_cone_examples(examples):
    p1, ep1 = examples["ex1"]
    nc = normal_cone_generators(p1.target, ep1.endpoint)
    # x2_2 <= 0 active: ray +e in the x2 block; x2_1 free: no ray
    assert nc.rays.shape[0] == 1
    np.testing.assert_array_equal(nc.rays[0], [0, 0, 0, 0, 0, 1])
    assert nc.lineality.shape[0] == 4  # t1, x1 (2 coords) and t2 fixed
    p3, ep3 = examples["ex3"]
    nc = normal_cone_generators(p3.target, ep3.endpoint)
    np.testing.assert_array_equal(nc.rays[:, 5:], np.eye(3))


def test_normal_cone_rejects_points_off_target(examples):
    p1, _ = examples["ex1"]
    with pytest.raises(ValueError):
        normal_cone_generators(p1.target, [0, 0, 0, 1, 0, 0.5])


def test_normal_cone_inequality_on_sampled_target_points():
    rng = np.random.default_rng(3)
    t = TargetSpec.from_parts([0.0, 1.0], ["free", [-1.0, 0.0]], 2.0, [[0.0, 1.0], "free"],
                              halfspaces=[([1, 1, 0, 0, 1, 1], 1.0)])
    z = np.array([0.0, 0.5, 0.0, 2.0, 0.0, 0.5])
    assert t.contains(z)
    nc = normal_cone_generators(t, z)
    for _ in range(300):
        zp = t.project(z + 0.3 * rng.normal(size=6))
        for r in nc.rays:
            assert r @ (zp - z) <= 1e-7 * max(1.0, np.linalg.norm(zp - z))
        for lvec in nc.lineality:
            assert abs(lvec @ (zp - z)) <= 1e-7


def test_target_projection_distance():
    t = TargetSpec.from_parts(0.0, ["free"], "free", [[-math.inf, 0.0]],
                              halfspaces=[([0, 1, 1, 0], 1.0)])
    z = np.array([1.0, 2.0, 3.0, 4.0])
    pz = t.project(z)
    assert t.contains(pz, 1e-9)
    # brute-force check that no sampled target point is closer
    rng = np.random.default_rng(0)
    d = np.linalg.norm(z - pz)
    for _ in range(2000):
        c = t.project(pz + rng.normal(size=4))
        assert np.linalg.norm(z - c) >= d - 1e-9


def test_vector_field_flags():
    vf = VectorFieldSet.from_strings(["0", "0"], [["1", "x1"]])
    assert vf.drift_free and vf.g_time_invariant
    vf = VectorFieldSet.from_strings(["x1", "0"], [["t", "0"]])
    assert not vf.drift_free and not vf.g_time_invariant
