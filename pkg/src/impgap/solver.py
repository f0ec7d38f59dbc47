"""Direct transcription of the extended problem with an augmented Lagrangian.

Decision vector, for a fixed number ``N`` of equal parameter intervals::

    x = [S, theta_0..theta_{N-1}, psi_0..psi_{N-1}, free initial coordinates]

with canonical controls ``w0_k = theta_k`` and ``w_k = (1 - theta_k) d(psi_k)``
where ``d`` maps unconstrained parameters onto unit vectors of the control
cone.  The canonical-form equality is thus satisfied exactly, and the
restriction ``w0 >= eps`` is a simple bound on ``theta``.  Target and
variation constraints are handled by a Powell-Hestenes-Rockafellar
augmented Lagrangian whose inner problems are solved by L-BFGS-B with
gradients from the exact discrete adjoint of the integrator.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _kernels as KN
from .dynamics import DEFAULT_SUBSTEPS, SAFETY_BOX, IntegrationError, integrate_controls
from .model import NONNEG, NONPOS, ZERO, FREE, ProblemSpec, violation
from .processes import ExtendedProcess
from .reparam import d_infty

__all__ = ["SolveConfig", "Candidate", "solve_extended", "solve_strict_restricted",
           "minimize_violation", "brute_force_oracle", "BruteForceResult"]

log = logging.getLogger(__name__)

_RHO_MAX = 1e9
_SMOOTH = 1e-6


@dataclass(frozen=True)
class SolveConfig:
    """Transcription and optimizer settings.

    Attributes
    ----------
    N : int
        Number of equal parameter intervals.
    multistarts : int
        Independent runs; the best feasible one is returned.
    penalty_growth : float
        Factor applied to the penalty when feasibility stalls.
    outer_iterations, inner_iterations : int
        Multiplier updates and L-BFGS-B iterations per update.
    tol_feas, tol_stat : float
        Feasibility residual and cost-change tolerances.
    seed : int
        Root seed; run ``r`` uses the ``r``-th spawned child sequence.
    substeps : int
        RK4 steps per interval.
    penalty_init : float
        Initial penalty parameter.
    gradient : str
        ``"adjoint"`` (exact discrete adjoint) or ``"fd"`` (central
        differences, relative step 1e-6).
    delta : float
        Radius of the d-infinity ball used by localized solves.
    S_max : float
        Bound on ``S`` when the target and ``K`` do not bound it.
    """

    N: int = 80
    multistarts: int = 16
    penalty_growth: float = 10.0
    outer_iterations: int = 12
    inner_iterations: int = 400
    tol_feas: float = 1e-6
    tol_stat: float = 1e-5
    seed: int = 0
    substeps: int = DEFAULT_SUBSTEPS
    penalty_init: float = 10.0
    gradient: str = "adjoint"
    delta: float = 0.5
    S_max: float = 50.0

    def __post_init__(self):
        for name in ("N", "multistarts", "outer_iterations", "inner_iterations", "substeps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("penalty_growth", "tol_feas", "tol_stat", "penalty_init", "delta", "S_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.gradient not in ("adjoint", "fd"):
            raise ValueError("gradient must be 'adjoint' or 'fd'")


@dataclass(frozen=True, eq=False)
class Candidate:
    """Best process found by a solve.

    Attributes
    ----------
    process : ExtendedProcess
    cost : float
        Objective value (the cost ``h``, or the violation for
        :func:`minimize_violation`).
    residual : float
        Feasibility residual ``max{d_T, (nu - K) v 0}`` of the process.
    config : SolveConfig
    converged : bool
    feasible : bool
        ``residual <= config.tol_feas`` (and inside the ball for localized
        solves).
    eps : float
        Lower bound imposed on ``w0``.
    run : int
        Index of the winning multistart run.
    log : tuple of str
        One line per outer iteration of every run.
    runs : tuple
        ``(run, cost, residual, feasible, converged)`` per run.
    ball_distance : float or None
        d-infinity distance to the reference of a localized solve.
    """

    process: ExtendedProcess
    cost: float
    residual: float
    config: SolveConfig
    converged: bool
    feasible: bool
    eps: float = 0.0
    run: int = 0
    log: tuple = ()
    runs: tuple = ()
    ball_distance: float | None = None

    def recompute_residual(self, p: ProblemSpec) -> float:
        return violation(p, self.process.endpoint, self.process.nu[-1])


# ---------------------------------------------------------------- directions


class _Directions:
    """Map per-interval parameters ``psi`` onto unit vectors of the cone."""

    def __init__(self, cone):
        self.cone = cone
        self.m = cone.m
        if cone.kind == "full":
            self.mode = "full"
            self.dim = self.m
        elif cone.kind == "orthant":
            self.mode = "orthant"
            self.tags = list(cone.tags)
            self.cols = [j for j, t in enumerate(self.tags) if t != ZERO]
            self.dim = len(self.cols)
        else:
            self.mode = "generated"
            self.G = cone.generator_matrix
            self.dim = self.G.shape[0]
        self.fallback = np.zeros(self.m)
        if self.dim:
            self.fallback = self.direction(np.ones((1, self.dim)))[0]

    def _u(self, psi):
        if self.mode == "full":
            return psi.copy()
        if self.mode == "orthant":
            u = np.zeros((psi.shape[0], self.m))
            for c, j in enumerate(self.cols):
                t = self.tags[j]
                u[:, j] = psi[:, c] if t == FREE else (psi[:, c] ** 2 if t == NONNEG
                                                       else -psi[:, c] ** 2)
            return u
        return (psi ** 2) @ self.G

    def direction(self, psi) -> np.ndarray:
        u = self._u(psi)
        nrm = np.linalg.norm(u, axis=1)
        d = np.empty_like(u)
        ok = nrm > 1e-150
        d[ok] = u[ok] / nrm[ok, None]
        if not ok.all():
            d[~ok] = self.fallback
        return d

    def vjp(self, psi, dbar) -> np.ndarray:
        u = self._u(psi)
        nrm = np.linalg.norm(u, axis=1)
        ok = nrm > 1e-150
        safe = np.where(ok, nrm, 1.0)
        d = u / safe[:, None]
        ubar = (dbar - d * np.sum(d * dbar, axis=1)[:, None]) / safe[:, None]
        ubar[~ok] = 0.0
        if self.mode == "full":
            return ubar
        if self.mode == "orthant":
            out = np.zeros_like(psi)
            for c, j in enumerate(self.cols):
                t = self.tags[j]
                out[:, c] = ubar[:, j] if t == FREE else (2 * psi[:, c] * ubar[:, j] if t == NONNEG
                                                          else -2 * psi[:, c] * ubar[:, j])
            return out
        return 2 * psi * (ubar @ self.G.T)

    def params_for(self, d) -> np.ndarray:
        """Parameters reproducing the unit directions ``d`` (projected into the cone)."""
        d = np.atleast_2d(d)
        if self.mode == "full":
            return d.copy()
        if self.mode == "orthant":
            out = np.zeros((d.shape[0], self.dim))
            for c, j in enumerate(self.cols):
                t = self.tags[j]
                out[:, c] = d[:, j] if t == FREE else np.sqrt(np.maximum(
                    d[:, j] if t == NONNEG else -d[:, j], 0.0))
            return out
        from scipy.optimize import nnls

        out = np.zeros((d.shape[0], self.dim))
        for k in range(d.shape[0]):
            c, _ = nnls(self.G.T, d[k])
            out[k] = np.sqrt(c)
        return out

    def renormalize(self, psi) -> np.ndarray:
        """Rescale so that the unnormalized direction has unit length."""
        if self.mode == "generated":
            nrm = np.linalg.norm(self._u(psi), axis=1)
            scale = np.where(nrm > 1e-150, 1.0 / np.sqrt(np.maximum(nrm, 1e-300)), 1.0)
            return psi * scale[:, None]
        out = self.params_for(self.direction(psi))
        return out

    def random(self, rng, count) -> np.ndarray:
        return rng.normal(size=(count, self.dim))


# ---------------------------------------------------------------- transcription


@dataclass
class _Ball:
    ref: ExtendedProcess
    delta: float

    def __post_init__(self):
        self.ref_s = np.asarray(self.ref.s)
        self.ref_Y = np.column_stack([self.ref.y, self.ref.nu])
        self.t1 = float(self.ref.y0[0])
        self.t2 = float(self.ref.y0[-1])


def _sabs(x):
    r = np.sqrt(x * x + _SMOOTH * _SMOOTH)
    return r, x / r


class _Transcription:
    """Decision-vector layout, integration and augmented-Lagrangian terms."""

    def __init__(self, p: ProblemSpec, cfg: SolveConfig, eps: float = 0.0, mode: str = "cost",
                 ball: _Ball | None = None):
        self.p, self.cfg, self.eps, self.mode, self.ball = p, cfg, float(eps), mode, ball
        self.n, self.m, self.N = p.n, p.m, int(cfg.N)
        self.dirs = _Directions(p.cone)
        self.dd = self.dirs.dim
        t = p.target
        lo, hi = t.lo_array, t.hi_array
        self.lo, self.hi = lo, hi
        d0 = 1 + self.n
        if mode == "violation":
            self.init_free = np.arange(d0)
            self.init_bounds = [(None, None)] * d0
        else:
            self.init_free = np.array([i for i in range(d0) if lo[i] != hi[i]], dtype=int)
            self.init_bounds = [(None if math.isinf(lo[i]) else lo[i],
                                 None if math.isinf(hi[i]) else hi[i]) for i in self.init_free]
        self.init_fixed = np.where(lo[:d0] == hi[:d0], lo[:d0], 0.0)
        self.o_theta = 1
        self.o_psi = 1 + self.N
        self.o_init = self.o_psi + self.N * self.dd
        self.o_tau = self.o_init + self.init_free.size
        self.size = self.o_tau + (1 if mode == "violation" else 0)
        span_hi = hi[1 + self.n] - lo[0]
        self.span_lo = max(lo[1 + self.n] - hi[0], 0.0)
        if not np.isfinite(self.span_lo):
            self.span_lo = 0.0
        s_up = span_hi + (p.K if math.isfinite(p.K) else math.inf)
        if mode == "violation":
            s_up = math.inf
        self.S_up = float(min(s_up, cfg.S_max)) if np.isfinite(s_up) else float(cfg.S_max)
        self.S_up = max(self.S_up, 1e-6)
        theta_lo = 1.0 if self.dd == 0 else max(self.eps, 0.0)
        self.bounds = ([(1e-8, self.S_up)] + [(theta_lo, 1.0)] * self.N
                       + [(None, None)] * (self.N * self.dd) + list(self.init_bounds)
                       + ([(0.0, None)] if mode == "violation" else []))
        self.fixed_horizon = bool(lo[0] == hi[0] and lo[1 + self.n] == hi[1 + self.n])
        self.kern = p.kernels
        self.stages = self.kern.stage_buffer(self.N, cfg.substeps)

    # -- packing
    def unpack(self, x):
        S = x[0]
        theta = x[self.o_theta:self.o_psi]
        psi = x[self.o_psi:self.o_init].reshape(self.N, self.dd)
        z0 = self.init_fixed.copy()
        z0[self.init_free] = x[self.o_init:self.o_tau]
        tau = x[self.o_tau] if self.mode == "violation" else 0.0
        return S, theta, psi, z0, tau

    def controls(self, x):
        S, theta, psi, z0, _ = self.unpack(x)
        if self.dd:
            d = self.dirs.direction(psi)
        else:
            d = np.zeros((self.N, self.m))
        w = (1.0 - theta)[:, None] * d
        return theta.copy(), w, np.full(self.N, S / self.N), z0

    def process(self, x) -> ExtendedProcess:
        w0, w, ds, z0 = self.controls(x)
        Z, nu = integrate_controls(self.p, w0, w, ds, z0, self.cfg.substeps)
        grid = np.concatenate(([0.0], np.cumsum(ds)))
        grid[-1] = x[0]
        return ExtendedProcess(s=grid, y0=Z[:, 0], y=Z[:, 1:], nu=nu, w0=w0, w=w)

    # -- constraints
    def _target_terms(self, z):
        """Inequalities ``g <= 0`` and equalities on the endpoint, with Jacobians."""
        d0 = 1 + self.n
        lo, hi = self.lo, self.hi
        gi, Ji, ge, Je = [], [], [], []
        idx = range(d0, 2 * d0) if self.mode == "cost" else range(0)
        for i in idx:
            row = np.zeros(2 * d0)
            row[i] = 1.0
            if lo[i] == hi[i]:
                ge.append(z[i] - lo[i])
                Je.append(row)
                continue
            if np.isfinite(lo[i]):
                gi.append(lo[i] - z[i])
                Ji.append(-row)
            if np.isfinite(hi[i]):
                gi.append(z[i] - hi[i])
                Ji.append(row)
        if self.mode == "cost":
            A, b = self.p.target.H
            for r in range(len(b)):
                gi.append(A[r] @ z - b[r])
                Ji.append(A[r].copy())
        return gi, Ji, ge, Je

    def constraints(self, x, Z, nu_nodes):
        """Inequality values ``gi <= 0``, equality values ``ge`` and their VJP.

        The returned function maps multiplier-like weights ``(ci, ce)`` to
        cotangents ``(ebar, Ybar, Sbar, taubar)`` of the extended endpoint,
        the node values of ``(y, nu)``, ``S`` and ``tau``.
        """
        S, _, _, _, tau = self.unpack(x)
        d0 = 1 + self.n
        z = np.concatenate([Z[0], Z[-1]])
        nuS = nu_nodes[-1]
        gi, Ji, ge, Je = self._target_terms(z)
        Ji = [np.concatenate([J, [0.0]]) for J in Ji]
        Je = [np.concatenate([J, [0.0]]) for J in Je]
        ti = [0.0] * len(gi)
        if self.mode == "cost":
            if math.isfinite(self.p.K):
                row = np.zeros(2 * d0 + 1)
                row[-1] = 1.0
                gi.append(nuS - self.p.K)
                Ji.append(row)
                ti.append(0.0)
        else:
            diff = z - self.p.target.project(z)
            r = math.sqrt(float(diff @ diff) + _SMOOTH ** 2)
            gi.append(r - tau)
            Ji.append(np.concatenate([diff / r, [0.0]]))
            ti.append(-1.0)
            if math.isfinite(self.p.K):
                row = np.zeros(2 * d0 + 1)
                row[-1] = 1.0
                gi.append(nuS - self.p.K - tau)
                Ji.append(row)
                ti.append(-1.0)
        n_end = len(gi)
        Ji = np.array(Ji).reshape(n_end, 2 * d0 + 1)
        Je = np.array(Je).reshape(len(ge), 2 * d0 + 1)
        ti = np.array(ti)
        gi = np.array(gi, dtype=float)
        ge = np.array(ge, dtype=float)
        ball = self._ball_terms(S, Z, nu_nodes) if self.ball is not None else None
        if ball is not None:
            gi = np.concatenate([gi, ball["g"]])
        shape_Y = (self.N + 1, self.n + 1)

        def vjp(ci, ce):
            ebar = ci[:n_end] @ Ji + ce @ Je
            taubar = float(ci[:n_end] @ ti)
            Ybar = np.zeros(shape_Y)
            Sbar = 0.0
            if ball is not None:
                cb = ci[n_end:]
                ebar = ebar + cb.sum() * ball["erow"]
                np.add.at(Ybar, ball["i0"], (cb * ball["w0"])[:, None] * ball["G"])
                np.add.at(Ybar, ball["i1"], (cb * ball["w1"])[:, None] * ball["G"])
                Sbar = float(cb @ ball["Sc"])
            return ebar, Ybar, Sbar, taubar

        return gi, ge, vjp

    def _ball_terms(self, S, Z, nu_nodes):
        """Node-sampled d-infinity ball constraints (both grids are sampled)."""
        b = self.ball
        N, d0 = self.N, 1 + self.n
        Y = np.column_stack([Z[:, 1:], nu_nodes])
        a1, da1 = _sabs(Z[0, 0] - b.t1)
        a2, da2 = _sabs(Z[-1, 0] - b.t2)
        erow = np.zeros(2 * d0 + 1)
        erow[0] = da1
        erow[d0] = da2
        rs, rY = b.ref_s, b.ref_Y
        slope = np.diff(rY, axis=0) / np.diff(rs)[:, None]
        # candidate nodes against the interpolated reference
        k = np.arange(N + 1)
        s = k * (S / N)
        beyond = s >= rs[-1]
        j = np.clip(np.searchsorted(rs, s, side="right") - 1, 0, rs.size - 2)
        dref = np.where(beyond[:, None], 0.0, slope[j])
        ref = np.where(beyond[:, None], rY[-1], rY[j] + (s - rs[j])[:, None] * slope[j])
        diff = Y - ref
        r = np.sqrt(np.sum(diff * diff, axis=1) + _SMOOTH ** 2)
        G1 = diff / r[:, None]
        Sc1 = -np.sum(G1 * dref, axis=1) * k / N
        # reference nodes against the interpolated candidate
        beyond = rs >= S
        pos = np.where(beyond, N, rs * N / S)
        kk = np.clip(np.floor(pos).astype(int), 0, N - 1)
        al = np.where(beyond, 1.0, pos - kk)
        dY = Y[kk + 1] - Y[kk]
        val = Y[kk] + al[:, None] * dY
        diff = val - rY
        r2 = np.sqrt(np.sum(diff * diff, axis=1) + _SMOOTH ** 2)
        G2 = diff / r2[:, None]
        dval = np.where(beyond[:, None], 0.0, dY * (-rs * N / (S * S))[:, None])
        Sc2 = np.sum(G2 * dval, axis=1)
        base = a1 + a2 - b.delta
        return {"g": np.concatenate([r, r2]) + base, "erow": erow,
                "G": np.vstack([G1, G2]), "Sc": np.concatenate([Sc1, Sc2]),
                "i0": np.concatenate([k, kk]), "w0": np.concatenate([np.ones(N + 1), 1.0 - al]),
                "i1": np.concatenate([k, kk + 1]),
                "w1": np.concatenate([np.zeros(N + 1), al])}

    # -- objective and its gradient
    def _forward(self, x, stages):
        w0, w, ds, z0 = self.controls(x)
        status, k, Z = self.kern.forward(z0, w0, w, ds, self.cfg.substeps, SAFETY_BOX, stages)
        if status != KN.STATUS_OK:
            return None, None
        nu_nodes = np.concatenate(([0.0], np.cumsum((1.0 - w0) * ds)))
        return Z, nu_nodes

    def augmented(self, x, mu_i, lam_e, rho, grad=True):
        """PHR augmented Lagrangian value and gradient."""
        Z, nu_nodes = self._forward(x, self.stages if grad else None)
        if Z is None:
            return (1e20, np.zeros_like(x)) if grad else 1e20
        S, theta, psi, z0, tau = self.unpack(x)
        e = np.concatenate([Z[0], Z[-1], [nu_nodes[-1]]])
        if self.mode == "cost":
            val = self.p.cost.value(e)
            ebar = self.p.cost.gradient(e) if grad else None
            taubar = 0.0
        else:
            val = tau
            ebar = np.zeros(e.size)
            taubar = 1.0
        if not np.isfinite(val):
            return (1e20, np.zeros_like(x)) if grad else 1e20
        gi, ge, cvjp = self.constraints(x, Z, nu_nodes)
        t = mu_i + rho * gi
        act = t > 0
        val += float(np.sum(np.where(act, t * t - mu_i * mu_i, -mu_i * mu_i)) / (2 * rho))
        val += float(lam_e @ ge + 0.5 * rho * ge @ ge)
        if not grad:
            return val
        eb, Ybar, Sbar, tb = cvjp(np.where(act, t, 0.0), lam_e + rho * ge)
        return val, self._backprop(x, theta, psi, S, ebar + eb, Ybar, Sbar, taubar + tb, nu_nodes)

    def _backprop(self, x, theta, psi, S, ebar, Ybar, Sbar, taubar, nu_nodes):
        N, d0 = self.N, 1 + self.n
        zbar = np.zeros((N + 1, d0))
        zbar[:, 1:] = Ybar[:, :self.n]
        zbar[0] += ebar[:d0]
        zbar[-1] += ebar[d0:2 * d0]
        nubar = Ybar[:, self.n].copy()
        nubar[-1] += ebar[-1]
        w0, w, ds, _ = self.controls(x)
        abar, bbar, dsbar, z0bar = self.kern.reverse(w0, w, ds, self.cfg.substeps, self.stages, zbar)
        g = np.zeros_like(x)
        # nu_j = (S/N) sum_{k<j} (1 - theta_k)
        tail = np.cumsum(nubar[::-1])[::-1]  # tail[k] = sum_{j >= k} nubar_j
        g_theta = abar.copy() - (S / N) * tail[1:]
        if S > 0:
            Sbar += float(nubar @ nu_nodes) / S
        if self.dd:
            d = self.dirs.direction(psi)
            g_theta -= np.sum(bbar * d, axis=1)
            g[self.o_psi:self.o_init] = self.dirs.vjp(psi, (1.0 - theta)[:, None] * bbar).ravel()
        g[self.o_theta:self.o_psi] = g_theta
        g[0] = Sbar + dsbar.sum() / N
        g[self.o_init:self.o_tau] = z0bar[self.init_free]
        if self.mode == "violation":
            g[self.o_tau] = taubar
        return g

    def fd_gradient(self, x, mu_i, lam_e, rho):
        g = np.zeros_like(x)
        for i in range(x.size):
            h = 1e-6 * max(1.0, abs(x[i]))
            lo, hi = self.bounds[i]
            xp, xm = x.copy(), x.copy()
            xp[i] = x[i] + h if hi is None else min(x[i] + h, hi)
            xm[i] = x[i] - h if lo is None else max(x[i] - h, lo)
            if xp[i] == xm[i]:
                continue
            fp = self.augmented(xp, mu_i, lam_e, rho, grad=False)
            fm = self.augmented(xm, mu_i, lam_e, rho, grad=False)
            g[i] = (fp - fm) / (xp[i] - xm[i])
        return g

    def constraint_values(self, x):
        Z, nu_nodes = self._forward(x, None)
        if Z is None:
            return None, None
        gi, ge, _ = self.constraints(x, Z, nu_nodes)
        return gi, ge

    def objective_value(self, x) -> float:
        Z, nu_nodes = self._forward(x, None)
        if Z is None:
            return math.inf
        if self.mode == "violation":
            return float(x[self.o_tau])
        return self.p.cost.value(np.concatenate([Z[0], Z[-1], [nu_nodes[-1]]]))

    # -- initial points
    def initial_point(self, kind: str, rng) -> np.ndarray:
        N = self.N
        x = np.zeros(self.size)
        tlo = self.bounds[1][0]
        theta = np.ones(N)
        psi = self.dirs.random(rng, N) if self.dd else np.zeros((N, 0))
        if kind == "burst":
            L = int(rng.integers(1, max(2, N // 2) + 1))
            where = rng.uniform()
            start = N - L if where < 0.5 else int(rng.integers(0, N - L + 1))
            theta[start:start + L] = tlo
            if self.dd:
                psi[start:start + L] = self.dirs.random(rng, 1)
        elif kind == "random":
            theta = rng.uniform(tlo, 1.0, size=N)
        theta = np.clip(theta, tlo, 1.0)
        if self.dd:
            psi = self.dirs.renormalize(psi)
        lo, hi = self.lo, self.hi
        if self.fixed_horizon:
            span = hi[1 + self.n] - lo[0]
        else:
            span = float(np.clip(1.0, self.span_lo, max(self.span_lo, hi[1 + self.n] - lo[0])))
        S = span / max(theta.mean(), 1e-12) if span > 0 else 1.0
        x[0] = float(np.clip(S, 1e-6, self.S_up))
        x[self.o_theta:self.o_psi] = theta
        x[self.o_psi:self.o_init] = psi.ravel()
        z0 = np.clip(np.zeros(1 + self.n), lo[:1 + self.n], hi[:1 + self.n])
        x[self.o_init:self.o_tau] = z0[self.init_free]
        if self.mode == "violation":
            x[self.o_tau] = 1.0
        return x

    def point_from_process(self, ep: ExtendedProcess) -> np.ndarray:
        """Decision vector approximating ``ep`` on this grid (``w0`` clipped to the bound)."""
        N = self.N
        x = np.zeros(self.size)
        mids = (np.arange(N) + 0.5) * ep.S / N
        k = np.clip(np.searchsorted(ep.s, mids, side="right") - 1, 0, ep.N - 1)
        tlo = self.bounds[1][0]
        theta = np.clip(ep.w0[k], tlo, 1.0)
        x[0] = min(ep.S, self.S_up)
        x[self.o_theta:self.o_psi] = theta
        if self.dd:
            wn = np.linalg.norm(ep.w[k], axis=1)
            d = np.where(wn[:, None] > 1e-12, ep.w[k] / np.maximum(wn, 1e-300)[:, None],
                         self.dirs.fallback)
            x[self.o_psi:self.o_init] = self.dirs.params_for(d).ravel()
        x[self.o_init:self.o_tau] = ep.Z[0][self.init_free]
        if self.mode == "violation":
            x[self.o_tau] = 1.0
        return x


def _clip_to_bounds(x, bounds):
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
    return np.clip(x, lo, hi)


# ---------------------------------------------------------------- augmented Lagrangian


def _run(tr: _Transcription, x0: np.ndarray, run: int) -> dict:
    cfg = tr.cfg
    x = _clip_to_bounds(x0, tr.bounds)
    gi, ge = tr.constraint_values(x)
    if gi is None:
        return {"x": x, "ok": False, "log": [f"run={run} integration failed at the initial point"]}
    mu = np.zeros(gi.size)
    lam = np.zeros(ge.size)
    rho = cfg.penalty_init
    lines = []
    best = None

    def record(z, viol):
        nonlocal best
        if viol <= cfg.tol_feas:
            obj = tr.objective_value(z)
            if best is None or obj < best[0]:
                best = (obj, z.copy())

    record(x, max(np.max(gi, initial=0.0), np.max(np.abs(ge), initial=0.0)))
    prev_viol = math.inf
    prev_obj = math.inf
    success = False
    for it in range(cfg.outer_iterations):
        if cfg.gradient == "adjoint":
            def fun(z):
                return tr.augmented(z, mu, lam, rho)
        else:
            def fun(z):
                return (tr.augmented(z, mu, lam, rho, grad=False),
                        tr.fd_gradient(z, mu, lam, rho))
        res = minimize(fun, x, jac=True, method="L-BFGS-B", bounds=tr.bounds,
                       options={"maxiter": cfg.inner_iterations, "gtol": cfg.tol_stat * 1e-2,
                                "ftol": 1e-15})
        x = np.asarray(res.x, dtype=float)
        if tr.dd:
            psi = x[tr.o_psi:tr.o_init].reshape(tr.N, tr.dd)
            x[tr.o_psi:tr.o_init] = tr.dirs.renormalize(psi).ravel()
        gi, ge = tr.constraint_values(x)
        if gi is None:
            lines.append(f"run={run} outer={it} integration failed")
            break
        viol = max(np.max(gi, initial=0.0), np.max(np.abs(ge), initial=0.0))
        obj = tr.objective_value(x)
        record(x, viol)
        lines.append(f"run={run} outer={it} penalty={rho:.3g} feasibility={viol:.3e} "
                     f"cost={obj:.9g} inner={res.nit} status={res.status}")
        log.debug(lines[-1])
        mu = np.maximum(0.0, mu + rho * gi)
        lam = lam + rho * ge
        small_step = abs(obj - prev_obj) <= cfg.tol_stat * (1.0 + abs(obj))
        if viol <= 0.1 * cfg.tol_feas and small_step:
            success = True
            break
        if viol > 0.25 * prev_viol:
            if rho >= _RHO_MAX:
                lines.append(f"run={run} stalled at the largest penalty")
                break
            rho = min(rho * cfg.penalty_growth, _RHO_MAX)
        prev_viol = min(viol, prev_viol)
        prev_obj = obj
    final_viol = math.inf
    gi, ge = tr.constraint_values(x)
    if gi is not None:
        final_viol = max(np.max(gi, initial=0.0), np.max(np.abs(ge), initial=0.0))
    if best is not None and (final_viol > cfg.tol_feas
                             or best[0] < tr.objective_value(x) - 1e-12):
        lines.append(f"run={run} returning best feasible iterate, cost={best[0]:.9g}")
        x = best[1]
        success = False
    return {"x": x, "ok": True, "log": lines, "converged": success}


def _assemble(p, tr, runs, cfg, eps, ball: _Ball | None) -> Candidate:
    results = []
    lines = []
    for r, out in enumerate(runs):
        lines.extend(out["log"])
        if not out["ok"]:
            continue
        try:
            ep = tr.process(out["x"])
        except IntegrationError:
            continue
        res = violation(p, ep.endpoint, ep.nu[-1])
        if tr.mode == "cost":
            cost = p.cost.value(ep.extended_endpoint)
            feas = res <= cfg.tol_feas
        else:
            cost = res
            feas = True
        dist = None
        if ball is not None:
            dist = d_infty(ep, ball.ref)
            feas = feas and dist <= ball.delta + cfg.tol_feas
        results.append((r, ep, cost, res, feas, out["converged"], dist))
    if not results:
        raise IntegrationError("every multistart run failed to integrate", -1)
    feas_runs = [t for t in results if t[4]]
    if feas_runs:
        best = min(feas_runs, key=lambda t: (t[2], t[0]))
    else:
        best = min(results, key=lambda t: (t[3] if tr.mode == "cost" else (t[6] or 0.0), t[0]))
    r, ep, cost, res, feas, conv, dist = best
    summary = tuple((t[0], t[2], t[3], t[4], t[5]) for t in results)
    return Candidate(process=ep, cost=float(cost), residual=float(res), config=cfg,
                     converged=bool(conv and feas), feasible=bool(feas), eps=float(eps), run=r,
                     log=tuple(lines), runs=summary, ball_distance=dist)


def _start_kinds(count: int) -> list[str]:
    kinds = ["drift"]
    for r in range(1, count):
        kinds.append("burst" if r % 2 == 1 else "random")
    return kinds[:count]


def _solve(p, cfg, eps, mode, ball, seeds_from=None) -> Candidate:
    tr = _Transcription(p, cfg, eps=eps, mode=mode, ball=ball)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.multistarts)
    runs = []
    for r, (kind, ss) in enumerate(zip(_start_kinds(cfg.multistarts), children)):
        rng = np.random.default_rng(ss)
        if seeds_from is not None and r == 0:
            x0 = tr.point_from_process(seeds_from)
        elif seeds_from is not None:
            x0 = tr.point_from_process(seeds_from)
            x0[tr.o_theta:tr.o_psi] = np.clip(
                x0[tr.o_theta:tr.o_psi] + 0.1 * rng.normal(size=tr.N), tr.bounds[1][0], 1.0)
            if tr.dd:
                x0[tr.o_psi:tr.o_init] += 0.1 * rng.normal(size=tr.N * tr.dd)
        else:
            x0 = tr.initial_point(kind, rng)
        runs.append(_run(tr, x0, r))
    return _assemble(p, tr, runs, cfg, eps, ball)


def solve_extended(p: ProblemSpec, cfg: SolveConfig | None = None,
                   reference: ExtendedProcess | None = None) -> Candidate:
    """Minimize the cost over extended processes.

    Parameters
    ----------
    p : ProblemSpec
    cfg : SolveConfig, optional
    reference : ExtendedProcess, optional
        When given, the search is restricted to the d-infinity ball of
        radius ``cfg.delta`` around it (a local infimum).

    Returns
    -------
    Candidate
        Best run; ``feasible`` is False when no run met ``cfg.tol_feas``.
    """
    cfg = cfg or SolveConfig()
    ball = _Ball(reference, cfg.delta) if reference is not None else None
    return _solve(p, cfg, 0.0, "cost", ball, seeds_from=reference)


def solve_strict_restricted(p: ProblemSpec, eps: float, cfg: SolveConfig | None = None,
                            reference: ExtendedProcess | None = None) -> Candidate:
    """Minimize the cost over extended processes with ``w0 >= eps``.

    Such processes are embedded strict-sense processes, so the result can be
    inverted with :func:`impgap.reparam.invert_embedding`.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    cfg = cfg or SolveConfig()
    ball = _Ball(reference, cfg.delta) if reference is not None else None
    return _solve(p, cfg, eps, "cost", ball, seeds_from=reference)


def minimize_violation(p: ProblemSpec, reference: ExtendedProcess, delta: float, eps: float,
                       cfg: SolveConfig | None = None) -> Candidate:
    """Smallest ``max{d_T, (nu - K) v 0}`` over processes with ``w0 >= eps``
    within d-infinity distance ``delta`` of ``reference``.

    The candidate's ``cost`` is the violation value.  Runs that end outside
    the ball are not eligible.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    cfg = cfg or SolveConfig()
    return _solve(p, cfg, eps, "violation", _Ball(reference, float(delta)), seeds_from=reference)


# ---------------------------------------------------------------- brute force


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    """Outcome of :func:`brute_force_oracle`.

    ``cost`` is ``inf`` and ``process`` is None when no enumerated control
    sequence is feasible.
    """

    cost: float
    process: ExtendedProcess | None
    feasible_count: int
    total: int

    @property
    def feasible(self) -> bool:
        return self.process is not None


def brute_force_oracle(p: ProblemSpec, levels, N_bf: int = 4, eps: float = 0.0,
                       S_levels=(0.5, 1.0, 2.0, 4.0), tol: float = 1e-4,
                       budget: float = 1e7, substeps: int = DEFAULT_SUBSTEPS) -> BruteForceResult:
    """Exhaustive search over piecewise-constant canonical controls.

    Each interval takes ``w`` from ``levels ** m`` (kept when ``|w| <= 1``,
    ``w`` lies in the cone and ``1 - |w| >= eps``) and ``w0 = 1 - |w|``.
    When both end times are fixed the parameter length ``S`` is the one
    meeting the time horizon, otherwise every value in ``S_levels`` is
    tried.  Initial coordinates that are not fixed start at the point of
    their range nearest to 0.

    Raises
    ------
    ValueError
        ``N_bf > 6`` or ``len(levels) ** (m N_bf)`` exceeds ``budget``.
    """
    if N_bf < 1 or N_bf > 6:
        raise ValueError("N_bf must be between 1 and 6")
    levels = [float(v) for v in levels]
    if float(len(levels)) ** (p.m * N_bf) > budget:
        raise ValueError(f"enumeration budget exceeded: {len(levels)}^{p.m * N_bf} > {budget:g}")
    choices = []
    for w in itertools.product(levels, repeat=p.m):
        w = np.asarray(w)
        nw = float(np.linalg.norm(w))
        if nw <= 1.0 + 1e-12 and p.cone.contains(w) and 1.0 - nw >= eps - 1e-12:
            choices.append((max(1.0 - nw, 0.0), w))
    n, m = p.n, p.m
    lo, hi = p.target.lo_array, p.target.hi_array
    z0 = np.clip(np.zeros(1 + n), lo[:1 + n], hi[:1 + n])
    fixed_horizon = lo[0] == hi[0] and lo[1 + n] == hi[1 + n]
    span = hi[1 + n] - lo[0] if fixed_horizon else None
    best_cost, best = math.inf, None
    feasible_count = total = 0
    combos = list(itertools.product(range(len(choices)), repeat=N_bf))
    A_all = np.array([[choices[c][0] for c in combo] for combo in combos]).reshape(-1, N_bf)
    B_all = np.array([[choices[c][1] for c in combo] for combo in combos]).reshape(-1, N_bf, m)
    if fixed_horizon:
        sums = A_all.sum(axis=1)
        ok = sums > 0 if span > 0 else np.ones(len(combos), dtype=bool)
        S_list = [np.where(ok, N_bf * span / np.where(sums > 0, sums, 1.0), np.nan)]
        if span == 0:
            S_list = [np.full(len(combos), float(s)) for s in S_levels]
    else:
        S_list = [np.full(len(combos), float(s)) for s in S_levels]
    kern = p.kernels
    for S_arr in S_list:
        keep = np.isfinite(S_arr)
        A, B, S_k = A_all[keep], B_all[keep], S_arr[keep]
        if A.shape[0] == 0:
            continue
        ds = np.repeat((S_k / N_bf)[:, None], N_bf, axis=1)
        Zend, status = kern.forward_batch(np.repeat(z0[None, :], A.shape[0], axis=0),
                                          A, B, ds, substeps)
        nuS = (np.linalg.norm(B, axis=2) * ds).sum(axis=1)
        total += A.shape[0]
        for q in range(A.shape[0]):
            if status[q] != KN.STATUS_OK:
                continue
            z = np.concatenate([z0, Zend[q]])
            if violation(p, z, nuS[q]) > tol:
                continue
            feasible_count += 1
            c = p.cost.value(np.concatenate([z, [nuS[q]]]))
            if c < best_cost:
                best_cost = c
                best = (A[q], B[q], ds[q])
    if best is None:
        return BruteForceResult(math.inf, None, 0, total)
    a, b, ds = best
    Z, nu = integrate_controls(p, a, b, ds, z0, substeps)
    grid = np.concatenate(([0.0], np.cumsum(ds)))
    ep = ExtendedProcess(s=grid, y0=Z[:, 0], y=Z[:, 1:], nu=nu, w0=a, w=b)
    return BruteForceResult(float(best_cost), ep, feasible_count, total)
