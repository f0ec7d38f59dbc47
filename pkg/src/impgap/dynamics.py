"""Integration of the strict, extended and adjoint systems.

All integrators are fixed-step classical RK4 with ``substeps`` steps per
control interval.  The variation ``nu`` is accumulated exactly since the
controls are constant on each interval.

The adjoint of the extended system,

    dp0/ds = -p . (df/dt w0 + sum_j dg_j/dt w_j),
    dp/ds  = -p . (df/dx w0 + sum_j dg_j/dx w_j),

is written for the covector ``P = (p0, p)`` as ``dP/ds = -P dF/dz`` with
``F`` the extended right-hand side, and is integrated backwards along a
given process.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import expr as E
from .model import ProblemSpec, VectorFieldSet, state_names
from .processes import ExtendedProcess, StrictProcess

__all__ = [
    "CompiledFields", "IntegrationError", "integrate_controls", "integrate_extended",
    "integrate_strict", "AdjointPath", "integrate_adjoint", "TransitionMap",
    "transition_map", "vjp", "DEFAULT_SUBSTEPS", "SAFETY_BOX",
]

DEFAULT_SUBSTEPS = 8
SAFETY_BOX = 1e6


class IntegrationError(RuntimeError):
    """Integration aborted: non-finite state or safety box exceeded."""

    def __init__(self, message: str, interval: int):
        self.interval = interval
        super().__init__(message)


@dataclass(frozen=True)
class CompiledFields:
    """Tapes for the fields and their non-constant Jacobian entries."""

    n: int
    m: int
    tape: E.Tape
    jtape: E.Tape
    jidx: np.ndarray
    jconst: np.ndarray
    stack_size: int

    @classmethod
    def build(cls, fields: VectorFieldSet) -> "CompiledFields":
        names = state_names(fields.n)
        flat = fields.flat()
        tape = E.compile_tape(flat, names)
        entries = [E.differentiate(e, v) for e in flat for v in names]
        jconst = np.zeros(len(entries))
        idx, live = [], []
        for k, d in enumerate(entries):
            if isinstance(d, E.Const):
                jconst[k] = d.value
            else:
                idx.append(k)
                live.append(d)
        jtape = E.compile_tape(live, names)
        return cls(fields.n, fields.m, tape, jtape, np.asarray(idx, dtype=np.int64), jconst,
                   max(tape.stack_size, jtape.stack_size))

    def stage_buffer(self, N: int, substeps: int) -> np.ndarray:
        return np.empty((N, substeps, 4, 1 + self.n + self.n + self.m * self.n))

    def forward(self, z0, a, b, ds, substeps, box=SAFETY_BOX, stages=None):
        N = a.shape[0]
        Z = np.empty((N + 1, 1 + self.n))
        if stages is None:
            stages = np.empty((0, 1, 4, 1 + self.n + self.n + self.m * self.n))
        t = self.tape
        status, k = K.forward(t.code, t.arg, t.off, self.stack_size, self.n, self.m,
                              np.ascontiguousarray(z0, dtype=float), a, b, ds, int(substeps),
                              float(box), Z, stages)
        return status, k, Z

    def forward_batch(self, z0, a, b, ds, substeps, box=SAFETY_BOX):
        """Endpoint states and status codes for ``q`` control sequences."""
        q = a.shape[0]
        Zend = np.empty((q, 1 + self.n))
        status = np.empty(q, dtype=np.int64)
        t = self.tape
        K.forward_batch(t.code, t.arg, t.off, self.stack_size, self.n, self.m,
                        np.ascontiguousarray(z0, dtype=float), np.ascontiguousarray(a, dtype=float),
                        np.ascontiguousarray(b, dtype=float), np.ascontiguousarray(ds, dtype=float),
                        int(substeps), float(box), Zend, status)
        return Zend, status

    def reverse(self, a, b, ds, substeps, stages, zbar_nodes):
        """Cotangents of ``(a, b, ds, z0)`` for node cotangents ``zbar_nodes``."""
        N = a.shape[0]
        abar = np.zeros(N)
        bbar = np.zeros((N, self.m))
        dsbar = np.zeros(N)
        j = self.jtape
        z0bar = K.reverse(j.code, j.arg, j.off, self.jidx, self.jconst, self.stack_size,
                          self.n, self.m, a, b, ds, int(substeps), stages,
                          np.ascontiguousarray(zbar_nodes, dtype=float), abar, bbar, dsbar)
        return abar, bbar, dsbar, z0bar

    def adjoint(self, a, b, ds, substeps, Z, PT):
        q = PT.shape[0]
        N = a.shape[0]
        d = 1 + self.n
        Pn = np.empty((q, N + 1, d))
        Pm = np.empty((q, N, d))
        Zm = np.empty((N, d))
        t, j = self.tape, self.jtape
        K.adjoint(t.code, t.arg, t.off, j.code, j.arg, j.off, self.jidx, self.jconst,
                  self.stack_size, self.n, self.m, a, b, ds, int(substeps),
                  np.ascontiguousarray(Z, dtype=float), np.ascontiguousarray(PT, dtype=float),
                  Pn, Pm, Zm)
        return Pn, Pm, Zm

    def eval_fields(self, z) -> tuple[np.ndarray, np.ndarray]:
        """``f`` (n,) and ``G`` (n, m) at the extended state ``z = (t, x)``."""
        t = self.tape
        out = np.empty(t.size)
        K.eval_tape(t.code, t.arg, t.off, np.ascontiguousarray(z, dtype=float), out,
                    np.empty(self.stack_size))
        n = self.n
        return out[:n], out[n:].reshape(self.m, n).T


def _controls(w0, w, ds, m):
    a = np.ascontiguousarray(w0, dtype=float).reshape(-1)
    b = np.ascontiguousarray(w, dtype=float).reshape(a.size, m)
    ds = np.ascontiguousarray(ds, dtype=float).reshape(-1)
    if ds.size != a.size:
        raise ValueError("controls and grid disagree in length")
    if np.any(ds <= 0):
        raise ValueError("grid must be strictly increasing")
    return a, b, ds


def integrate_controls(p: ProblemSpec, w0, w, ds, init, substeps: int = DEFAULT_SUBSTEPS,
                       box: float = SAFETY_BOX) -> tuple[np.ndarray, np.ndarray]:
    """Node states ``Z`` (N+1, 1+n) and variation ``nu`` for arbitrary controls.

    Controls need not be canonical; ``nu`` accumulates ``|w_k| ds_k``.

    Raises
    ------
    IntegrationError
    """
    a, b, ds = _controls(w0, w, ds, p.m)
    status, k, Z = p.kernels.forward(init, a, b, ds, substeps, box)
    if status == K.STATUS_NONFINITE:
        raise IntegrationError(f"non-finite state on interval {k}", k)
    if status == K.STATUS_BOX:
        raise IntegrationError(f"state left the safety box |y| <= {box:g} on interval {k}", k)
    nu = np.concatenate(([0.0], np.cumsum(np.linalg.norm(b, axis=1) * ds)))
    return Z, nu


def integrate_extended(p: ProblemSpec, w0, w, init, grid, substeps: int = DEFAULT_SUBSTEPS,
                       box: float = SAFETY_BOX, phi_init=None) -> ExtendedProcess:
    """Integrate the extended system for canonical controls.

    Parameters
    ----------
    p : ProblemSpec
    w0 : array_like, shape (N,)
    w : array_like, shape (N, m)
    init : array_like, shape (1+n,)
        ``(y0(0), y(0))``.
    grid : array_like, shape (N+1,)
        Parameter nodes starting at 0.
    substeps : int
        RK4 steps per interval.

    Returns
    -------
    ExtendedProcess
    """
    grid = np.asarray(grid, dtype=float)
    a, b, ds = _controls(w0, w, np.diff(grid), p.m)
    canon = np.abs(a + np.linalg.norm(b, axis=1) - 1.0)
    if np.any(a < -1e-12) or (canon.size and canon.max() > 1e-9):
        raise ValueError("controls are not in canonical form w0 + |w| = 1, w0 >= 0")
    Z, nu = integrate_controls(p, a, b, ds, init, substeps, box)
    return ExtendedProcess(s=grid - grid[0], y0=Z[:, 0], y=Z[:, 1:], nu=nu, w0=a, w=b,
                           phi_init=phi_init)


def integrate_strict(p: ProblemSpec, du, init_x, grid, substeps: int = DEFAULT_SUBSTEPS,
                     box: float = SAFETY_BOX, u_init=None) -> StrictProcess:
    """Integrate ``dx/dt = f + sum_j g_j du_j``, ``dv/dt = |du|`` on a time grid.

    A strict interval with derivative ``du`` is the extended interval with
    control ``(1, du)`` on the same grid, which is what is integrated.
    """
    grid = np.asarray(grid, dtype=float)
    du = np.asarray(du, dtype=float).reshape(grid.size - 1, p.m)
    init = np.concatenate(([grid[0]], np.asarray(init_x, dtype=float)))
    Z, v = integrate_controls(p, np.ones(grid.size - 1), du, np.diff(grid), init, substeps, box)
    u0 = np.zeros(p.m) if u_init is None else np.asarray(u_init, dtype=float)
    u = u0 + np.vstack([np.zeros(p.m), np.cumsum(du * np.diff(grid)[:, None], axis=0)])
    return StrictProcess(t=grid, x=Z[:, 1:], v=v, u=u, du=du)


# ---------------------------------------------------------------- adjoint


@dataclass(frozen=True, eq=False)
class AdjointPath:
    """Covector ``(p0, p)`` on the grid of an extended process.

    ``mid`` optionally holds the values at interval midpoints.
    """

    s: np.ndarray
    p0: np.ndarray
    p: np.ndarray
    mid: np.ndarray | None = None

    @property
    def P(self) -> np.ndarray:
        """Stacked ``(p0, p)`` at the nodes, shape (N+1, 1+n)."""
        return np.column_stack([self.p0, self.p])

    @property
    def terminal(self) -> np.ndarray:
        return self.P[-1].copy()

    @classmethod
    def from_array(cls, s, P, mid=None) -> "AdjointPath":
        P = np.asarray(P, dtype=float)
        return cls(np.asarray(s, dtype=float), P[:, 0].copy(), P[:, 1:].copy(), mid)


def integrate_adjoint(p: ProblemSpec, ep: ExtendedProcess, terminal,
                      substeps: int = DEFAULT_SUBSTEPS) -> AdjointPath:
    """Backward RK4 for the adjoint system along ``ep``.

    Parameters
    ----------
    terminal : array_like, shape (1+n,)
        ``(p0(S), p(S))``.
    """
    PT = np.asarray(terminal, dtype=float).reshape(1, 1 + p.n)
    Pn, Pm, _ = p.kernels.adjoint(np.ascontiguousarray(ep.w0), np.ascontiguousarray(ep.w),
                                  ep.ds, substeps, ep.Z, PT)
    return AdjointPath.from_array(ep.s, Pn[0], Pm[0])


@dataclass(frozen=True, eq=False)
class TransitionMap:
    """Linear map from the terminal covector to the adjoint path.

    ``nodes[k] @ P_T`` is the covector at node ``k``; ``mids[k] @ P_T`` at
    the midpoint of interval ``k`` where the state is ``zmid[k]``.
    """

    s: np.ndarray
    nodes: np.ndarray
    mids: np.ndarray
    zmid: np.ndarray

    def apply(self, terminal) -> AdjointPath:
        t = np.asarray(terminal, dtype=float)
        return AdjointPath.from_array(self.s, self.nodes @ t, self.mids @ t)


def transition_map(p: ProblemSpec, ep: ExtendedProcess, substeps: int = DEFAULT_SUBSTEPS,
                   check_seed: int = 0, check_tol: float = 1e-8) -> TransitionMap:
    """Integrate ``1+n`` unit terminal covectors and assemble the map.

    A linearity check against one random terminal covector is performed.
    """
    d = 1 + p.n
    Pn, Pm, Zm = p.kernels.adjoint(np.ascontiguousarray(ep.w0), np.ascontiguousarray(ep.w),
                                   ep.ds, substeps, ep.Z, np.eye(d))
    # row i of the batch is the path started from e_i; L[k] has those as columns
    nodes = np.transpose(Pn, (1, 2, 0)).copy()
    mids = np.transpose(Pm, (1, 2, 0)).copy()
    tm = TransitionMap(ep.s, nodes, mids, Zm)
    rng = np.random.default_rng(check_seed)
    c = rng.normal(size=d)
    direct = integrate_adjoint(p, ep, c, substeps).P
    lin = nodes @ c
    err = np.abs(direct - lin).max() / max(1.0, np.abs(direct).max())
    if err > check_tol:
        raise RuntimeError(f"transition map linearity check failed ({err:.3g})")
    return tm


def vjp(p: ProblemSpec, w0, w, ds, init, zbar_nodes, substeps: int = DEFAULT_SUBSTEPS):
    """Node states and the gradient of ``sum_k zbar_nodes[k] . Z[k]``.

    Returns ``(Z, abar, bbar, dsbar, z0bar)``: cotangents of ``w0``, ``w``,
    the interval lengths and the initial state.
    """
    a, b, ds = _controls(w0, w, ds, p.m)
    kern = p.kernels
    stages = kern.stage_buffer(a.size, substeps)
    status, k, Z = kern.forward(init, a, b, ds, substeps, SAFETY_BOX, stages)
    if status != K.STATUS_OK:
        raise IntegrationError(f"integration failed on interval {k}", k)
    return (Z,) + kern.reverse(a, b, ds, substeps, stages, zbar_nodes)
