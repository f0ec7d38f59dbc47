"""Dense two-phase tableau simplex for small linear programs.

Solves ``min c.x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and
per-variable bounds.  Phase 1 minimizes the sum of artificial variables;
its optimal value is reported as ``infeasibility`` and is the quantity the
normality classifier thresholds.  Pivoting uses Dantzig's rule and switches
to Bland's rule after a run of degenerate pivots, which rules out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LPResult", "linprog_dense"]

OPTIMAL, ITERATION_LIMIT, INFEASIBLE, UNBOUNDED = 0, 1, 2, 3


@dataclass
class LPResult:
    """Outcome of :func:`linprog_dense`.

    ``status`` is 0 (optimal), 1 (iteration limit), 2 (infeasible) or
    3 (unbounded).  ``infeasibility`` is the phase-1 optimum, the smallest
    achievable sum of artificial variables (0 for a feasible program).
    """

    status: int
    x: np.ndarray | None
    fun: float
    infeasibility: float
    iterations: int
    message: str = ""

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    nz = np.nonzero(colv)[0]
    if nz.size:
        T[nz] -= np.outer(colv[nz], T[row])


def _run(T, basis, allowed, tol, max_iter, counter):
    """Iterate on tableau ``T`` (objective in the last row); return status."""
    mrows = T.shape[0] - 1
    degenerate = 0
    while True:
        if counter[0] >= max_iter:
            return ITERATION_LIMIT
        red = T[-1, :-1]
        cand = np.nonzero((red < -tol) & allowed)[0]
        if cand.size == 0:
            return OPTIMAL
        col = int(cand[0]) if degenerate > 50 else int(cand[np.argmin(red[cand])])
        colv = T[:mrows, col]
        pos = np.nonzero(colv > tol)[0]
        if pos.size == 0:
            return UNBOUNDED
        ratios = T[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        row = int(ties[np.argmin(np.asarray(basis)[ties])])
        degenerate = degenerate + 1 if T[row, -1] <= tol else 0
        _pivot(T, row, col)
        basis[row] = col
        counter[0] += 1


def _standardize(nvar, bounds):
    """Map ``x = offset + M y`` with ``y >= 0``; extra upper-bound rows."""
    cols = []
    offset = np.zeros(nvar)
    ub_rows = []  # (std column, bound)
    for j, (lo, hi) in enumerate(bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            return None
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    M = np.zeros((nvar, len(cols)))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s
    return offset, M, ub_rows


def linprog_dense(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
                  tol: float = 1e-10, max_iter: int = 20000) -> LPResult:
    """Two-phase dense simplex.

    Parameters
    ----------
    c : array_like, shape (n,)
    A_ub, b_ub, A_eq, b_eq : array_like, optional
    bounds : sequence of (lo, hi), optional
        ``None`` or infinite entries mean unbounded; default ``(0, inf)``.
    tol : float
        Pivot and optimality tolerance.

    Returns
    -------
    LPResult
    """
    c = np.asarray(c, dtype=float)
    nvar = c.size
    A_ub = np.zeros((0, nvar)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, nvar)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, nvar)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, nvar)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if bounds is None:
        bounds = [(0.0, np.inf)] * nvar
    std = _standardize(nvar, bounds)
    if std is None:
        return LPResult(INFEASIBLE, None, np.nan, np.inf, 0, "inconsistent bounds")
    offset, M, ub_extra = std
    ny = M.shape[1]

    Aub = A_ub @ M
    bub = b_ub - A_ub @ offset
    if ub_extra:
        extra = np.zeros((len(ub_extra), ny))
        for r, (k, val) in enumerate(ub_extra):
            extra[r, k] = 1.0
        Aub = np.vstack([Aub, extra])
        bub = np.concatenate([bub, [val for _, val in ub_extra]])
    Aeq = A_eq @ M
    beq = b_eq - A_eq @ offset

    n_ub, n_eq = Aub.shape[0], Aeq.shape[0]
    mrows = n_ub + n_eq
    neg_ub = bub < 0
    n_art = int(neg_ub.sum()) + n_eq
    ncols = ny + n_ub + n_art
    T = np.zeros((mrows + 1, ncols + 1))
    basis = [0] * mrows
    art_cols = []
    a = ny + n_ub
    for i in range(n_ub):
        sgn = -1.0 if neg_ub[i] else 1.0
        T[i, :ny] = sgn * Aub[i]
        T[i, ny + i] = sgn
        T[i, -1] = sgn * bub[i]
        if neg_ub[i]:
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
        else:
            basis[i] = ny + i
    for r in range(n_eq):
        i = n_ub + r
        sgn = -1.0 if beq[r] < 0 else 1.0
        T[i, :ny] = sgn * Aeq[r]
        T[i, -1] = sgn * beq[r]
        T[i, a] = 1.0
        basis[i] = a
        art_cols.append(a)
        a += 1
    is_art = np.zeros(ncols, dtype=bool)
    is_art[art_cols] = True

    counter = [0]
    infeas = 0.0
    if n_art:
        art_rows = [i for i in range(mrows) if is_art[basis[i]]]
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        st = _run(T, basis, np.ones(ncols, dtype=bool), tol, max_iter, counter)
        infeas = max(-T[-1, -1], 0.0)
        if st == ITERATION_LIMIT:
            return LPResult(ITERATION_LIMIT, None, np.nan, infeas, counter[0],
                            "iteration limit in phase 1")
        scale = max(1.0, float(np.abs(T[:mrows, -1]).max(initial=0.0)))
        if infeas > 1e-9 * scale:
            return LPResult(INFEASIBLE, None, np.nan, infeas, counter[0], "infeasible")
        # drive remaining artificials out of the basis
        keep = np.ones(mrows + 1, dtype=bool)
        for i in range(mrows):
            if is_art[basis[i]]:
                cand = np.nonzero((np.abs(T[i, :-1]) > 1e-9) & ~is_art)[0]
                if cand.size:
                    _pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
                else:
                    keep[i] = False
        if not keep.all():
            T = T[keep]
            basis = [b for b, k in zip(basis, keep[:-1]) if k]
            mrows = T.shape[0] - 1

    cy = M.T @ c
    cost = np.zeros(ncols)
    cost[:ny] = cy
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for i, b in enumerate(basis):
        if cost[b] != 0.0:
            T[-1] -= cost[b] * T[i]
    st = _run(T, basis, ~is_art, tol, max_iter, counter)
    y = np.zeros(ncols)
    for i, b in enumerate(basis):
        y[b] = T[i, -1]
    x = offset + M @ y[:ny]
    if st == UNBOUNDED:
        return LPResult(UNBOUNDED, x, -np.inf, infeas, counter[0], "unbounded")
    if st == ITERATION_LIMIT:
        return LPResult(ITERATION_LIMIT, x, float(c @ x), infeas, counter[0],
                        "iteration limit in phase 2")
    return LPResult(OPTIMAL, x, float(c @ x), infeas, counter[0], "optimal")
