import math

import numpy as np
import pytest

from impgap.analysis import (GAP_DETECTED, INCONCLUSIVE, NO_GAP_CERTIFIED, certify_no_gap,
                             drift_controllability, gap_probe, isolation_probe,
                             quick_1_controllability)
from impgap.dynamics import integrate_extended
from impgap.pmp import classify_normality
from impgap.problemfile import loads_problem
from impgap.solver import SolveConfig

FAST = SolveConfig(N=20, multistarts=2, outer_iterations=8, inner_iterations=200)


def _scalar(f, g, cone="full", x2="[-inf, 0.0]", epigraph="false"):
    cone_doc = 'kind = "full"' if cone == "full" else f'kind = "orthant"\ntags = ["{cone}"]'
    return loads_problem(f"""
n = 1
m = 1
cost = "0"
[fields]
f = ["{f}"]
g = [["{g}"]]
[cone]
{cone_doc}
[target]
t1 = 0.0
x1 = [0.0]
t2 = 1.0
x2 = [{x2}]
epigraph = {epigraph}
""")


def test_quick_controllability_holds_for_full_cone():
    p = _scalar("0", "1")
    r = quick_1_controllability(p, [0.0, 0.0, 1.0, 0.0])
    assert r.holds and not r.vacuous
    assert str(r) == "Holds"


def test_quick_controllability_fails_for_wrong_sign():
    p = _scalar("0", "1", cone="nonneg")
    r = quick_1_controllability(p, [0.0, 0.0, 1.0, 0.0])
    assert not r.holds
    assert r.witness[3] > 0
    assert r.value == pytest.approx(1.0)
    assert str(r).startswith("Fails (zeta = [")


def test_quick_controllability_holds_for_pushing_cone():
    p = _scalar("0", "1", cone="nonpos")
    assert quick_1_controllability(p, [0.0, 0.0, 1.0, 0.0]).holds


def test_free_target_is_vacuous():
    p = _scalar("0", "1", x2='"free"')
    r = quick_1_controllability(p, [0.0, 0.0, 1.0, 3.0])
    assert r.holds and r.vacuous and r.checked == 0
    assert str(r) == "Holds (vacuous)"


def test_drift_controllability():
    assert drift_controllability(_scalar("-x1", "1", x2="[-inf, 1.0]"),
                                 [0.0, 0.0, 1.0, 1.0]).holds
    r = drift_controllability(_scalar("0", "1"), [0.0, 0.0, 1.0, 0.0])
    assert not r.holds and r.value == pytest.approx(0.0)


def test_endpoint_off_target():
    with pytest.raises(ValueError, match="not on the target"):
        quick_1_controllability(_scalar("0", "1"), [0.0, 0.0, 1.0, 0.5])


def test_bundled_minimizers_fail_both_tests(examples):
    for key in ("ex1", "ex2", "ex3"):
        p, ep = examples[key]
        assert not quick_1_controllability(p, ep.endpoint).holds, key
        assert not drift_controllability(p, ep.endpoint).holds, key


def test_example1_drift_value(examples):
    p, ep = examples["ex1"]
    r = drift_controllability(p, ep.endpoint)
    assert r.value == pytest.approx(1.0)


def test_certify_examples(examples):
    p1, ep1 = examples["ex1"]
    c1 = certify_no_gap(p1, ep1, classify_normality(p1, ep1))
    assert c1.tag == INCONCLUSIVE and not c1.certified
    p2, ep2 = examples["ex2"]
    c2 = certify_no_gap(p2, ep2, classify_normality(p2, ep2))
    assert c2.certified and c2.reason == "normality"
    p3, ep3 = examples["ex3"]
    c3 = certify_no_gap(p3, ep3)
    assert c3.certified and c3.reason == "no-drift"


def test_certify_without_classification_notes(examples):
    p, ep = examples["ex1"]
    c = certify_no_gap(p, ep)
    assert not c.certified
    assert any("normality not evaluated" in n for n in c.notes)


def _drifting_process(p, S=1.0, N=10):
    return integrate_extended(p, np.ones(N), np.zeros((N, p.m)), [0.0, 0.0],
                              np.linspace(0, S, N + 1))


def test_certify_by_quick_controllability():
    p = _scalar("1", "1", cone="nonpos", x2="[-inf, 1.0]")
    ep = _drifting_process(p)
    c = certify_no_gap(p, ep)
    assert c.certified and c.reason == "QC"


def test_certify_by_epigraph():
    xT = 2.0 * (1.0 - math.exp(-1.0))
    bound = f"[{xT!r}, inf]"
    p = _scalar("-x1 + 2", "1", cone="nonpos", x2=bound, epigraph="true")
    ep = integrate_extended(p, np.ones(10), np.zeros((10, 1)), [0.0, 0.0],
                            np.linspace(0, 1, 11), substeps=64)
    assert ep.y[-1, 0] == pytest.approx(xT, abs=1e-9)
    c = certify_no_gap(p, ep, tol=1e-6)
    assert c.qc is not None and not c.qc.holds
    assert c.dc.holds
    assert c.certified and c.reason == "epigraph"
    plain = _scalar("-x1 + 2", "1", cone="nonpos", x2=bound)
    assert not certify_no_gap(plain, ep, tol=1e-6).certified


def test_gap_probe_example1(examples):
    p, ep = examples["ex1"]
    rep = gap_probe(p, FAST, eps_grid=(0.1, 0.05), minimizer=ep)
    assert rep.extended_cost == pytest.approx(-1.0, abs=1e-3)
    assert all(J == pytest.approx(0.0, abs=1e-4) for _, J, _ in rep.strict)
    assert rep.estimate == pytest.approx(1.0, abs=1e-3)
    assert rep.conclusion == GAP_DETECTED and rep.tag == GAP_DETECTED
    text = rep.to_text()
    assert "[conclusion]" in text and "GapDetected" in text
    rows = rep.to_csv().strip().splitlines()
    assert rows[0] == "eps,J,feasible"
    assert len(rows) == 4
    assert float(rows[1].split(",")[1]) == pytest.approx(-1.0, abs=1e-3)


def test_gap_probe_example3_certified(examples):
    p, ep = examples["ex3"]
    rep = gap_probe(p, FAST, eps_grid=(0.1, 0.05))
    assert rep.tag == f"{NO_GAP_CERTIFIED}(no-drift)"
    assert rep.classification is None
    assert not any("SOLVER FAILURE" in f for f in rep.flags)


def test_gap_probe_rejects_bad_grid(examples):
    p, _ = examples["ex3"]
    with pytest.raises(ValueError):
        gap_probe(p, FAST, eps_grid=(0.0,))


def test_gap_probe_ignores_infeasible_minimizer(examples):
    p, ep = examples["ex2"]
    bad = integrate_extended(p, np.ones(4), np.zeros((4, 2)), [0.0, 0.0, 0.0, 0.0],
                             np.linspace(0, 1, 5))
    rep = gap_probe(p, FAST, eps_grid=(0.1,), minimizer=bad, classify=False)
    assert any("supplied minimizer not used" in f for f in rep.flags)


def test_isolation_example3_not_isolated(examples):
    p, ep = examples["ex3"]
    r = isolation_probe(p, ep, 0.1, SolveConfig(N=40, multistarts=2))
    assert not r.isolated
    assert r.value <= 1e-4
    assert "not isolated" in str(r)


def test_isolation_example1_frozen(examples):
    """Independent SLSQP oracle: 0.00781 (eps=0.03) and 0.01338 (eps=0.05) at N=40."""
    p, ep = examples["ex1"]
    cfg = SolveConfig(N=40, multistarts=2)
    r = isolation_probe(p, ep, 0.1, cfg, eps=0.03)
    assert r.value == pytest.approx(0.0078, abs=5e-4)
    assert r.isolated


def test_isolation_rejects_infeasible_reference(examples):
    p, ep = examples["ex2"]
    bad = integrate_extended(p, np.ones(4), np.zeros((4, 2)), [0.0, 1.0, 0.0, 0.0],
                             np.linspace(0, 1, 5))
    with pytest.raises(ValueError, match="infeasible"):
        isolation_probe(p, bad, 0.1, FAST)


def test_isolation_reachable_target():
    p = _scalar("0", "1", x2="[-inf, 0.0]")
    ep = integrate_extended(p, np.ones(4), np.zeros((4, 1)), [0.0, 0.0], np.linspace(0, 1, 5))
    r = isolation_probe(p, ep, 0.05, FAST, eps=0.5)
    assert r.value <= 1e-6 and not r.isolated


def test_isolation_empty_ball_reports_inf(examples):
    """With ``w0 >= 0.5`` no process stays within 0.1 of the unit jump."""
    p, ep = examples["ex1"]
    r = isolation_probe(p, ep, 0.1, FAST, eps=0.5)
    assert math.isinf(r.value) and r.isolated and r.process is None
    assert "no strict process" in str(r)


def test_isolation_of_strict_feasible_process_is_zero():
    p = _scalar("1", "1", cone="nonneg", x2="[-inf, 2.0]")
    ep = integrate_extended(p, np.full(4, 0.8), np.full((4, 1), 0.2), [0.0, 0.0],
                            np.linspace(0, 1.25, 5))
    assert ep.y0[-1] == pytest.approx(1.0)
    r = isolation_probe(p, ep, 0.1, FAST, eps=0.5)
    assert r.value == pytest.approx(0.0, abs=1e-9)
    assert not r.isolated
