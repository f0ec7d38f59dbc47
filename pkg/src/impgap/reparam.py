"""Graph-completion reparameterization of strict-sense processes.

A strict process ``(t1, t2, x, v, u)`` is embedded as an extended process by
the arc-length change of variables ``s = sigma(t) = int (1 + |du/dt|) dt``;
the image has time component ``y0 = sigma^{-1}`` and canonical controls
``(w0, w) = (1, du/dt) / (1 + |du/dt|)``.  Extended processes whose time
component never stalls (``w0 > 0``) are exactly the image of the
embedding.
"""
from __future__ import annotations

import numpy as np

from .dynamics import DEFAULT_SUBSTEPS, integrate_extended
from .model import ProblemSpec
from .processes import ExtendedProcess, StrictProcess

__all__ = ["embed", "invert_embedding", "arc_normalize", "d_infty", "no_drift_strictify",
           "NotEmbeddedError"]


class NotEmbeddedError(ValueError):
    """The extended process has a stalled time component."""


def embed(sp: StrictProcess) -> ExtendedProcess:
    """Image of a strict process under the embedding."""
    dt = np.diff(sp.t)
    speed = np.linalg.norm(sp.du, axis=1)
    lam = 1.0 + speed
    s = np.concatenate(([0.0], np.cumsum(lam * dt)))
    w0 = 1.0 / lam
    w = sp.du / lam[:, None]
    return ExtendedProcess(s=s, y0=sp.t.copy(), y=sp.x.copy(), nu=sp.v.copy(), w0=w0, w=w,
                           phi_init=sp.u[0].copy())


def invert_embedding(ep: ExtendedProcess) -> StrictProcess:
    """Strict process whose embedding is ``ep``.

    Raises
    ------
    NotEmbeddedError
        If ``w0_k <= 0`` on some interval.
    """
    if np.any(ep.w0 <= 0):
        k = int(np.argmax(ep.w0 <= 0))
        raise NotEmbeddedError(
            f"not an embedded strict-sense process: w0 = {ep.w0[k]:.3g} on interval {k}")
    du = ep.w / ep.w0[:, None]
    return StrictProcess(t=ep.y0.copy(), x=ep.y.copy(), v=ep.nu.copy(), u=ep.phi, du=du)


def arc_normalize(w0, w, ds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bring per-interval controls to canonical form.

    Interval ``k`` is stretched by ``lam_k = w0_k + |w_k|`` and its controls
    divided by ``lam_k``; the trajectory at corresponding nodes is unchanged.

    Returns
    -------
    (w0, w, ds) : canonical controls and new interval lengths.
    """
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(w0.size, -1)
    ds = np.asarray(ds, dtype=float).reshape(-1)
    lam = w0 + np.linalg.norm(w, axis=1)
    if np.any(lam <= 0):
        k = int(np.argmax(lam <= 0))
        raise ValueError(f"interval {k} has w0 + |w| = 0")
    return w0 / lam, w / lam[:, None], ds * lam


def _sup_gap(ga, va, gb, vb) -> float:
    """Sup norm of the difference of two piecewise-affine paths.

    Each path is extended by its end values outside its grid; the sup is
    attained at a node of the merged grid.
    """
    grid = np.union1d(ga, gb)
    da = np.column_stack([np.interp(grid, ga, va[:, i]) for i in range(va.shape[1])])
    db = np.column_stack([np.interp(grid, gb, vb[:, i]) for i in range(vb.shape[1])])
    return float(np.linalg.norm(da - db, axis=1).max())


def d_infty(a, b) -> float:
    """Distance between two strict or two extended processes.

    Strict: ``|t1 - t1'| + |t2 - t2'| + sup_t |(x, v) - (x', v')|``.
    Extended: ``|y0(0) - y0'(0)| + |y0(S) - y0'(S')| + sup_s |(y, nu) - (y', nu')|``.
    Paths are extended constantly outside their domains; ``|.|`` is the
    Euclidean norm of the stacked state and variation.
    """
    if isinstance(a, StrictProcess) and isinstance(b, StrictProcess):
        ends = abs(a.t1 - b.t1) + abs(a.t2 - b.t2)
        return ends + _sup_gap(a.t, np.column_stack([a.x, a.v]), b.t, np.column_stack([b.x, b.v]))
    if isinstance(a, ExtendedProcess) and isinstance(b, ExtendedProcess):
        ends = abs(a.y0[0] - b.y0[0]) + abs(a.y0[-1] - b.y0[-1])
        return ends + _sup_gap(a.s, np.column_stack([a.y, a.nu]), b.s,
                               np.column_stack([b.y, b.nu]))
    raise TypeError("d_infty compares two strict or two extended processes")


def no_drift_strictify(p: ProblemSpec, ep: ExtendedProcess,
                       substeps: int = DEFAULT_SUBSTEPS) -> StrictProcess:
    """Strict process with the same endpoints as ``ep`` for a driftless problem.

    The time component is replaced by the affine path
    ``t1 + (t2 - t1) s / S``, the parameter is changed to
    ``r(s) = int ((t2 - t1)/S + |w|) ds`` and the states are re-integrated.
    Without drift the state path depends only on ``phi``, so the endpoints
    are kept while the new time component is strictly increasing.

    Raises
    ------
    ValueError
        If ``f`` is not structurally zero, some ``g_j`` depends on ``t``
        (then the states would change with the time path), or
        ``y0(S) <= y0(0)``.
    """
    if not p.fields.drift_free:
        raise ValueError("no_drift_strictify needs f identically zero")
    t1, t2 = float(ep.y0[0]), float(ep.y0[-1])
    if not t2 > t1:
        raise ValueError("degenerate time interval: y0(S) <= y0(0)")
    if ep.is_strict:
        return invert_embedding(ep)
    if not p.fields.g_time_invariant:
        raise ValueError("no_drift_strictify needs time-independent g_j")
    c = (t2 - t1) / ep.S
    speed = np.linalg.norm(ep.w, axis=1)
    lam = c + speed
    dr = lam * ep.ds
    w0 = c / lam
    w = ep.w / lam[:, None]
    grid = np.concatenate(([0.0], np.cumsum(dr)))
    out = integrate_extended(p, w0, w, ep.Z[0], grid, substeps=substeps, phi_init=ep.phi_init)
    return invert_embedding(out)
