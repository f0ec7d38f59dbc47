import numpy as np
import pytest

from impgap.corpus import load_example, load_example_minimizer
from impgap.model import ControlCone, CostSpec, ProblemSpec, TargetSpec, VectorFieldSet

_MONOMIALS = ["x1", "x2", "x1*x2", "x1^2", "t*x1", "sin(x2)", "cos(t)", "1"]


def random_problem(rng, n=2, m=1, cone=None, time_dependent=True):
    """Smooth polynomial/trigonometric problem with a free target."""
    names = [f"x{i}" for i in range(1, n + 1)] + (["t"] if time_dependent else [])

    def field():
        terms = []
        for _ in range(2):
            c = rng.uniform(-1.0, 1.0)
            mono = rng.choice(_MONOMIALS)
            for i in range(n + 1, 3):
                mono = mono.replace(f"x{i}", "x1")
            if not time_dependent:
                mono = mono.replace("t*", "").replace("cos(t)", "1")
            terms.append(f"{c:.4f}*{mono}")
        return " + ".join(terms)

    f = [field() for _ in range(n)]
    g = [[field() for _ in range(n)] for _ in range(m)]
    assert names
    cone = cone or ControlCone.full(m)
    target = TargetSpec.from_parts("free", ["free"] * n, "free", ["free"] * n)
    return ProblemSpec(fields=VectorFieldSet.from_strings(f, g), cone=cone, target=target,
                       cost=CostSpec.from_string("0", n))


def random_canonical_controls(rng, N, m, eps=0.0):
    w0 = rng.uniform(eps, 1.0, size=N)
    d = rng.normal(size=(N, m))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return w0, (1.0 - w0)[:, None] * d


@pytest.fixture(scope="session")
def examples():
    return {k: (load_example(k), load_example_minimizer(k)) for k in ("ex1", "ex2", "ex3")}


def random_strict_process(rng, p, M=None):
    """Strict process of ``p`` on a random grid with cone-valued derivatives."""
    from impgap.dynamics import integrate_strict

    M = M or int(rng.integers(3, 12))
    t = np.concatenate(([0.0], np.cumsum(rng.uniform(0.05, 0.4, size=M)))) + rng.uniform(-1, 1)
    du = np.array([p.cone.project(rng.normal(size=p.m) * rng.uniform(0, 3)) for _ in range(M)])
    du[rng.random(M) < 0.2] = 0.0
    return integrate_strict(p, du, rng.normal(size=p.n) * 0.5, t, u_init=rng.normal(size=p.m))


# acceptance bookkeeping: criterion number -> (status, detail)
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {detail}")
