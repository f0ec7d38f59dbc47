import numpy as np
import pytest

from impgap.dynamics import (IntegrationError, integrate_adjoint, integrate_controls,
                             integrate_extended, integrate_strict, transition_map, vjp)
from impgap.problemfile import loads_problem
from impgap.reparam import embed

from conftest import random_canonical_controls, random_problem

LINEAR = """
n = 2
m = 1
cost = "0"
[fields]
f = ["0", "0"]
g = [["1", "1"]]
"""

BLOWUP = """
n = 1
m = 1
cost = "0"
[fields]
f = ["x1^2"]
g = [["0"]]
"""


def test_trivial_drift():
    p = loads_problem(LINEAR)
    s = np.linspace(0, 1.5, 7)
    ep = integrate_extended(p, np.ones(6), np.zeros((6, 1)), [0.3, 1.0, 2.0], s)
    np.testing.assert_allclose(ep.y0, 0.3 + s)
    np.testing.assert_allclose(ep.y, [[1.0, 2.0]] * 7)
    np.testing.assert_allclose(ep.nu, 0.0)


def test_bundled_minimizers_reproduce(examples):
    for key, (p, ep) in examples.items():
        out = integrate_extended(p, ep.w0, ep.w, ep.Z[0], ep.s)
        np.testing.assert_allclose(out.Z, ep.Z, atol=1e-12, err_msg=key)
        np.testing.assert_allclose(out.nu, ep.nu, atol=1e-12)
        assert out.s_identity_error() <= 1e-9
    p, ep = examples["ex2"]
    s = ep.s
    np.testing.assert_allclose(ep.y[:, 0], np.where(s <= 1, 1.0, 2.0 - s), atol=1e-12)
    np.testing.assert_allclose(ep.y0, np.minimum(s, 1.0), atol=1e-12)
    _, ep1 = examples["ex1"]
    np.testing.assert_allclose(ep1.y[:, 0], np.clip(ep1.s - 1, 0, None), atol=1e-12)
    np.testing.assert_allclose(ep1.y[:, 1], 0.0, atol=1e-12)


def test_strict_example1_hand_integration(examples):
    p, _ = examples["ex1"]
    sp = integrate_strict(p, np.ones((10, 1)), [0.0, 0.0], np.linspace(0, 1, 11))
    assert sp.x[-1, 0] == pytest.approx(1.0, abs=1e-12)
    assert sp.x[-1, 1] == pytest.approx(0.5, abs=1e-12)
    assert sp.v[-1] == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_strict_matches_embedded_extended(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n=2, m=2)
    t = np.linspace(0, 1, 9)
    du = rng.normal(size=(8, 2))
    sp = integrate_strict(p, du, rng.normal(size=2), t, substeps=32)
    ep = embed(sp)
    out = integrate_extended(p, ep.w0, ep.w, ep.Z[0], ep.s, substeps=32)
    assert np.abs(out.Z[-1] - ep.Z[-1]).max() <= 1e-8


def test_safety_box_and_canonical_form_errors():
    p = loads_problem(BLOWUP)
    with pytest.raises(IntegrationError, match="safety box|non-finite"):
        integrate_controls(p, np.ones(10), np.zeros((10, 1)), np.full(10, 0.5), [0.0, 2.0])
    q = loads_problem(LINEAR)
    with pytest.raises(ValueError, match="canonical"):
        integrate_extended(q, [0.5], [[0.2]], [0, 0, 0], [0.0, 1.0])


def test_adjoint_constant_for_zero_jacobians():
    p = loads_problem(LINEAR)
    ep = integrate_extended(p, np.full(4, 0.5), np.full((4, 1), 0.5), [0, 0, 0],
                            np.linspace(0, 1, 5))
    path = integrate_adjoint(p, ep, [1.0, -2.0, 3.0])
    np.testing.assert_allclose(path.P, [[1.0, -2.0, 3.0]] * 5)
    tm = transition_map(p, ep)
    for L in tm.nodes:
        np.testing.assert_allclose(L, np.eye(3), atol=1e-15)


def test_adjoint_example1_closed_form(examples):
    p, ep = examples["ex1"]
    c = 0.7
    path = integrate_adjoint(p, ep, [0.0, 0.0, c])
    np.testing.assert_allclose(path.p[:, 1], c, atol=1e-14)
    np.testing.assert_allclose(path.p[:, 0], c * np.clip(1 - ep.s, 0, None), atol=1e-12)
    np.testing.assert_allclose(path.p0, 0.0, atol=1e-14)


def test_adjoint_example2_zero_terminal(examples):
    p, ep = examples["ex2"]
    path = integrate_adjoint(p, ep, np.zeros(4))
    assert np.abs(path.P).max() == 0.0


def test_transition_map_properties(examples):
    p, ep = examples["ex2"]
    tm = transition_map(p, ep)
    np.testing.assert_allclose(tm.nodes[-1], np.eye(4), atol=1e-15)
    for i in range(4):
        e = np.eye(4)[i]
        np.testing.assert_allclose(tm.nodes @ e, integrate_adjoint(p, ep, e).P, atol=1e-12)
    assert np.abs(tm.apply(np.zeros(4)).P).max() == 0.0


def _fd_check(seed, rel=1e-3):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n=2, m=2)
    N = 20
    w0, w = random_canonical_controls(rng, N, 2)
    z0 = np.r_[0.0, rng.normal(size=2) * 0.5]
    ep = integrate_extended(p, w0, w, z0, np.linspace(0, 2, N + 1))
    c = rng.normal(size=3)
    path = integrate_adjoint(p, ep, c)
    h = 1e-5
    worst = 0.0
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        zp = integrate_extended(p, w0, w, z0 + e, ep.s).Z[-1]
        zm = integrate_extended(p, w0, w, z0 - e, ep.s).Z[-1]
        fd = c @ (zp - zm) / (2 * h)
        worst = max(worst, abs(fd - path.P[0, i]) / max(abs(fd), 1e-8))
    return worst


@pytest.mark.parametrize("seed", range(5))
def test_adjoint_matches_finite_differences(seed):
    assert _fd_check(seed) <= 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_pairing_is_conserved(seed):
    """``P . dZ`` is constant along the variational equation."""
    rng = np.random.default_rng(50 + seed)
    p = random_problem(rng, n=2, m=1)
    N = 30
    w0, w = random_canonical_controls(rng, N, 1)
    z0 = np.r_[0.0, rng.normal(size=2)]
    s = np.linspace(0, 1.5, N + 1)
    ep = integrate_extended(p, w0, w, z0, s, substeps=32)
    path = integrate_adjoint(p, ep, rng.normal(size=3), substeps=32)
    dz0 = rng.normal(size=3)
    h = 1e-6
    Zp = integrate_extended(p, w0, w, z0 + h * dz0, s, substeps=32).Z
    Zm = integrate_extended(p, w0, w, z0 - h * dz0, s, substeps=32).Z
    pair = np.einsum("ki,ki->k", path.P, (Zp - Zm) / (2 * h))
    assert np.abs(np.diff(pair)).max() <= 1e-7 * max(1.0, np.abs(pair).max())


def test_fourth_order_convergence():
    rng = np.random.default_rng(7)
    p = random_problem(rng, n=2, m=1)
    w0, w = random_canonical_controls(rng, 5, 1)
    ds = np.full(5, 0.4)
    z0 = np.r_[0.0, 0.5, -0.3]
    ref, _ = integrate_controls(p, w0, w, ds, z0, substeps=256)
    e1 = np.abs(integrate_controls(p, w0, w, ds, z0, substeps=2)[0][-1] - ref[-1]).max()
    e2 = np.abs(integrate_controls(p, w0, w, ds, z0, substeps=4)[0][-1] - ref[-1]).max()
    assert e1 / e2 >= 8.0


@pytest.mark.parametrize("seed", range(3))
def test_vjp_matches_finite_differences(seed):
    rng = np.random.default_rng(300 + seed)
    p = random_problem(rng, n=2, m=2)
    N = 6
    w0, w = random_canonical_controls(rng, N, 2)
    ds = rng.uniform(0.1, 0.3, N)
    z0 = np.r_[0.0, rng.normal(size=2)]
    zbar = rng.normal(size=(N + 1, 3))

    def J(a, b, d, z):
        Z, _ = integrate_controls(p, a, b, d, z)
        return float(np.sum(zbar * Z))

    Z, abar, bbar, dsbar, z0bar = vjp(p, w0, w, ds, z0, zbar)
    h = 1e-6
    for k in range(N):
        e = np.zeros(N)
        e[k] = h
        assert (J(w0 + e, w, ds, z0) - J(w0 - e, w, ds, z0)) / (2 * h) == pytest.approx(
            abar[k], rel=1e-6, abs=1e-8)
        assert (J(w0, w, ds + e, z0) - J(w0, w, ds - e, z0)) / (2 * h) == pytest.approx(
            dsbar[k], rel=1e-6, abs=1e-8)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        assert (J(w0, w, ds, z0 + e) - J(w0, w, ds, z0 - e)) / (2 * h) == pytest.approx(
            z0bar[i], rel=1e-6, abs=1e-8)
    E = np.zeros_like(w)
    E[2, 1] = h
    assert (J(w0, w + E, ds, z0) - J(w0, w - E, ds, z0)) / (2 * h) == pytest.approx(
        bbar[2, 1], rel=1e-6, abs=1e-8)


def test_forward_batch_matches_forward(examples):
    p, ep = examples["ex2"]
    kern = p.kernels
    a = np.stack([ep.w0, np.ones(ep.N)])
    b = np.stack([ep.w, np.zeros_like(ep.w)])
    Zend, status = kern.forward_batch(np.stack([ep.Z[0]] * 2), a, b,
                                      np.stack([ep.ds] * 2), 8)
    assert list(status) == [0, 0]
    np.testing.assert_allclose(Zend[0], ep.Z[-1], atol=1e-14)
