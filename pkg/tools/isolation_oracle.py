"""Independent oracle for the isolation value of the first bundled example.

For ``x1' = w``, ``x2' = x1 w0`` with piecewise-constant controls the
states are integrated in closed form, the reference minimizer is known
analytically, and the d-infinity ball constraint is sampled at the
candidate nodes and at the kinks ``s = 0, 1, 2`` of the reference, which
gives the exact sup for piecewise-linear paths.  The violation is
minimized with SLSQP from several starts.  Nothing from the package is
imported.

    python3 tools/isolation_oracle.py
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

K = 1.0


def ref_path(s):
    """(x1, x2, nu) of the reference at parameter values ``s``."""
    r = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return np.column_stack([r, np.zeros_like(r), r])


def simulate(v, N):
    S, t1, a, b = v[0], v[1], v[2], v[3]
    theta = v[4:4 + N]
    h = S / N
    w = 1.0 - theta
    t = t1 + np.concatenate(([0.0], np.cumsum(theta * h)))
    x1 = a + np.concatenate(([0.0], np.cumsum(w * h)))
    inc2 = theta * h * (x1[:-1] + w * h / 2.0)
    x2 = b + np.concatenate(([0.0], np.cumsum(inc2)))
    nu = np.concatenate(([0.0], np.cumsum(w * h)))
    s = np.linspace(0.0, S, N + 1)
    return s, t, np.column_stack([x1, x2, nu])


def ball_gaps(v, N):
    s, t, Y = simulate(v, N)
    gaps = [np.linalg.norm(Y - ref_path(s), axis=1)]
    kinks = np.array([0.0, 1.0, 2.0])
    Yk = np.column_stack([np.interp(kinks, s, Y[:, i]) for i in range(3)])
    gaps.append(np.linalg.norm(Yk - ref_path(kinks), axis=1))
    return np.concatenate(gaps) + abs(t[0]) + abs(t[-1] - 1.0)


def violation(v, N):
    s, t, Y = simulate(v, N)
    dT = np.sqrt(t[0] ** 2 + Y[0, 0] ** 2 + Y[0, 1] ** 2 + (t[-1] - 1.0) ** 2
                 + max(Y[-1, 1], 0.0) ** 2)
    return max(dT, max(Y[-1, 2] - K, 0.0))


def solve(eps, delta, N=20, starts=6, seed=0):
    rng = np.random.default_rng(seed)
    best = np.inf
    for k in range(starts):
        jump = np.clip(0.5 + 0.1 * k, 0.3, 0.9)
        theta = np.where(np.arange(N) < N * jump, 1.0, eps)
        theta = np.clip(theta + 0.02 * rng.normal(size=N) * (k > 0), eps, 1.0)
        S0 = 1.0 / max(theta.mean(), 1e-9) * (theta.mean() * 2.0) if k == 0 else 2.0
        v0 = np.concatenate([[S0, 0.0, 0.0, 0.0], theta, [0.1]])

        def smooth_abs(x):
            return np.sqrt(x * x + 1e-14)

        def dT(u):
            s, t, Y = simulate(u, N)
            return np.sqrt(t[0] ** 2 + Y[0, 0] ** 2 + Y[0, 1] ** 2 + (t[-1] - 1.0) ** 2
                           + np.maximum(Y[-1, 1], 0.0) ** 2 + 1e-14)

        def ball(u):
            s, t, Y = simulate(u, N)
            kinks = np.array([0.0, 1.0, 2.0])
            Yk = np.column_stack([np.interp(kinks, s, Y[:, i]) for i in range(3)])
            g = np.concatenate([np.linalg.norm(Y - ref_path(s), axis=1),
                                np.linalg.norm(Yk - ref_path(kinks), axis=1)])
            return delta - (g + smooth_abs(t[0]) + smooth_abs(t[-1] - 1.0))

        cons = [{"type": "ineq", "fun": lambda u: u[-1] - dT(u)},
                {"type": "ineq", "fun": lambda u: u[-1] - (simulate(u, N)[2][-1, 2] - K)},
                {"type": "ineq", "fun": ball}]
        bounds = [(1e-3, 10.0)] + [(None, None)] * 3 + [(eps, 1.0)] * N + [(0.0, None)]
        res = minimize(lambda u: u[-1], v0, method="SLSQP", bounds=bounds, constraints=cons,
                       options={"maxiter": 2000, "ftol": 1e-12})
        u = res.x
        if ball_gaps(u[:-1], N).max() <= delta + 1e-7:
            best = min(best, violation(u[:-1], N))
    return best


if __name__ == "__main__":
    for eps in (0.03, 0.05):
        for N in (20, 40):
            print(f"eps={eps} delta=0.1 N={N} value={solve(eps, 0.1, N):.6f}")
