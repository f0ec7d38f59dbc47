"""Extended maximum principle: Hamiltonian, residuals and normality.

For a covector ``(p0, p)`` at a point ``(y0, y)`` put
``q0 = p.f + p0`` and ``q_j = p.g_j``.  The Hamiltonian of a canonical
control ``(w0, w)`` is ``q0 w0 + q.w + pi |w|``.  Writing ``w = (1 - w0) d``
with ``d`` a unit vector of ``C`` the expression is affine in ``w0``, so its
maximum over canonical controls is ``max(q0, pi + max_d q.d)``, and
``max_d q.d = |P_C(q)|`` whenever the projection is non-zero.

Normality is decided by a linear feasibility program in the terminal
covector, with ``lambda = 0`` fixed; see :func:`classify_normality`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .dynamics import DEFAULT_SUBSTEPS, AdjointPath, TransitionMap, transition_map
from .model import MAX_GENERATED_DIM, ProblemSpec, normal_cone_generators
from .problemfile import ProblemFileError, load_multipliers_data
from .processes import ExtendedProcess
from .simplex import linprog_dense

__all__ = ["MultiplierSet", "HamiltonianMax", "ResidualReport", "Classification",
           "GridMismatchError", "hamiltonian_max", "hamiltonian_values", "extremal_residuals",
           "classify_normality", "load_multipliers", "NORMAL", "ABNORMAL", "UNDETERMINED"]

NORMAL, ABNORMAL, UNDETERMINED = "Normal", "Abnormal", "Undetermined"
_TIE_TOL = 1e-12
# bound on |pi| in the normality LP; the LP is homogeneous otherwise
_PI_BOUND = 1e6
# LP rows are relaxed by _RELAX * tol so witnesses sit well inside tol
_RELAX = 1e-3


class GridMismatchError(ValueError):
    """Multiplier path and process live on different grids."""


@dataclass(frozen=True, eq=False)
class MultiplierSet:
    """Adjoint path with the scalars ``pi <= 0`` and ``lambda >= 0``."""

    path: AdjointPath
    pi: float
    lam: float

    def __post_init__(self):
        if self.pi > 0:
            raise ValueError(f"pi must be <= 0, got {self.pi}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    @property
    def sup_norm(self) -> float:
        """``max(sup |(p0, p)|, lambda)``."""
        return max(float(np.abs(self.path.P).max()), self.lam)

    def scaled(self, c: float) -> "MultiplierSet":
        """Positive multiple of the set."""
        if not c > 0:
            raise ValueError("scale must be positive")
        mid = None if self.path.mid is None else self.path.mid * c
        return MultiplierSet(AdjointPath.from_array(self.path.s, self.path.P * c, mid),
                             self.pi * c, self.lam * c)


def load_multipliers(source, p: ProblemSpec, ep: ExtendedProcess,
                     substeps: int = DEFAULT_SUBSTEPS) -> MultiplierSet:
    """Multiplier set from a multiplier file (path or text).

    A terminal covector is integrated backwards along ``ep``; a tabulated
    path must be given on the grid of ``ep``.

    Raises
    ------
    GridMismatchError
        If a tabulated path has a different grid.
    ProblemFileError
        On malformed files or sign violations.
    """
    data = load_multipliers_data(source, p.n)
    if "P" in data:
        s = data["s"]
        if s.shape != ep.s.shape or np.abs(s - ep.s).max() > 1e-9 * max(1.0, ep.S):
            raise GridMismatchError(
                f"multiplier grid ({s.size} nodes) does not match the process grid "
                f"({ep.s.size} nodes)")
        path = AdjointPath.from_array(ep.s, data["P"])
    else:
        path = transition_map(p, ep, substeps).apply(data["terminal"])
    try:
        return MultiplierSet(path, data["pi"], data["lambda"])
    except ValueError as exc:
        raise ProblemFileError(f"multipliers: {exc}") from None


# ---------------------------------------------------------------- Hamiltonian


@dataclass(frozen=True)
class HamiltonianMax:
    """Maximum of the Hamiltonian over canonical controls at one point.

    ``branch`` is ``"drift"`` or ``"impulse"``; ``tie`` is set when both
    branch values agree, and the drift control is then reported.  When
    ``P_C(q) = 0`` the impulse value uses the best generator, so a
    maximizing direction exists whenever ``C != {0}``.
    """

    value: float
    w0: float
    w: np.ndarray
    branch: str
    tie: bool
    drift_value: float
    impulse_value: float


def _q(p: ProblemSpec, z, P) -> tuple[float, np.ndarray]:
    z = np.asarray(z, dtype=float)
    P = np.asarray(P, dtype=float)
    f, G = p.kernels.eval_fields(z)
    q0 = float(P[1:] @ f + P[0])
    q = G.T @ P[1:]
    return q0, q


def hamiltonian_max(p: ProblemSpec, z, P, pi: float) -> HamiltonianMax:
    """``H* = max(q0, pi + max_{d in C, |d|=1} q.d)`` and a maximizer.

    Parameters
    ----------
    z : array_like, shape (1+n,)
        ``(y0, y)``.
    P : array_like, shape (1+n,)
        ``(p0, p)``.
    pi : float
    """
    q0, q = _q(p, z, P)
    return _branch_max(p.cone, q0, q, pi)


def _branch_max(cone, q0: float, q: np.ndarray, pi: float) -> HamiltonianMax:
    m = cone.m
    val, d = cone.max_unit(q)
    imp = pi + val
    tol = _TIE_TOL * max(1.0, abs(q0), abs(imp))
    if imp > q0 + tol:
        return HamiltonianMax(imp, 0.0, d.copy(), "impulse", False, q0, imp)
    return HamiltonianMax(q0, 1.0, np.zeros(m), "drift", abs(imp - q0) <= tol, q0, imp)


def hamiltonian_values(p: ProblemSpec, ep: ExtendedProcess, path: AdjointPath, pi: float,
                       zmid=None, Pmid=None) -> dict:
    """Hamiltonian of the process controls and its maximum along the grid.

    Interval ``k`` is evaluated at its midpoint with control ``k``; node
    ``k`` is evaluated with every adjacent control.

    Returns
    -------
    dict with arrays ``H_mid``, ``Hstar_mid``, ``H_node`` (max abs over the
    adjacent controls) and ``Hstar_node``.
    """
    N = ep.N
    Z = ep.Z
    P = path.P
    if zmid is None or Pmid is None:
        zmid = 0.5 * (Z[:-1] + Z[1:])
        Pmid = 0.5 * (P[:-1] + P[1:])
    H_mid, Hs_mid = np.empty(N), np.empty(N)
    for k in range(N):
        q0, q = _q(p, zmid[k], Pmid[k])
        H_mid[k] = q0 * ep.w0[k] + q @ ep.w[k] + pi * np.linalg.norm(ep.w[k])
        Hs_mid[k] = _branch_max(p.cone, q0, q, pi).value
    H_node, Hs_node = np.empty(N + 1), np.empty(N + 1)
    for k in range(N + 1):
        q0, q = _q(p, Z[k], P[k])
        vals = [q0 * ep.w0[j] + q @ ep.w[j] + pi * np.linalg.norm(ep.w[j])
                for j in (k - 1, k) if 0 <= j < N]
        H_node[k] = max(vals, key=abs)
        Hs_node[k] = _branch_max(p.cone, q0, q, pi).value
    return {"H_mid": H_mid, "Hstar_mid": Hs_mid, "H_node": H_node, "Hstar_node": Hs_node}


# ---------------------------------------------------------------- residuals


def _extended_normal_cone(p: ProblemSpec, ep: ExtendedProcess, tol: float):
    """Rays and lineality of ``N_{T x [0,K]}`` at the endpoint of ``ep``."""
    nc = normal_cone_generators(p.target, ep.endpoint, tol=max(tol, 1e-7))
    d = nc.rays.shape[1]
    rays = np.hstack([nc.rays, np.zeros((nc.rays.shape[0], 1))])
    lin = np.hstack([nc.lineality, np.zeros((nc.lineality.shape[0], 1))])
    nu = float(ep.nu[-1])
    extra = []
    if math.isfinite(p.K) and nu >= p.K - tol:
        e = np.zeros(d + 1)
        e[-1] = 1.0
        extra.append(e)
    if nu <= tol:
        e = np.zeros(d + 1)
        e[-1] = -1.0
        extra.append(e)
    if extra:
        rays = np.vstack([rays, np.asarray(extra)])
    return rays, lin


def _endpoint_covector(P0, PT, pi) -> np.ndarray:
    return np.concatenate(([P0[0]], P0[1:], [-PT[0]], -PT[1:], [-pi]))


@dataclass
class ResidualReport:
    """Residuals of the extended maximum principle for one multiplier set.

    All residuals are non-negative.  ``hamiltonian_gap`` is the largest
    ``H* - H`` and ``hamiltonian_abs`` the largest ``|H|`` over midpoints
    and nodes.
    """

    adjoint: float
    hamiltonian_gap: float
    hamiltonian_abs: float
    hamiltonian_node_abs: float
    transversality: float
    sign: float
    case_i_applies: bool
    case_i: float
    case_ii_applies: bool
    case_ii: float
    nontriviality: float
    pi: float
    lam: float
    notes: list = field(default_factory=list)

    @property
    def residuals(self) -> dict:
        return {"adjoint": self.adjoint, "hamiltonian_gap": self.hamiltonian_gap,
                "hamiltonian_abs": self.hamiltonian_abs, "transversality": self.transversality,
                "sign": self.sign, "case_i": self.case_i, "case_ii": self.case_ii,
                "nontriviality": self.nontriviality}

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def ok(self, tol: float) -> bool:
        return self.max_residual <= tol

    def to_text(self, tol: float | None = None) -> str:
        lines = ["[adjoint]", f"max deviation from re-integration = {self.adjoint:.3e}", "",
                 "[hamiltonian]", f"max (H* - H) = {self.hamiltonian_gap:.3e}",
                 f"max |H| = {self.hamiltonian_abs:.3e}",
                 f"max |H| at nodes = {self.hamiltonian_node_abs:.3e}", "",
                 "[transversality]", f"decomposition error = {self.transversality:.3e}", "",
                 "[signs]", f"pi = {self.pi:.6g}", f"lambda = {self.lam:.6g}",
                 f"sign violation = {self.sign:.3e}",
                 f"case (i) applies = {self.case_i_applies}, |pi| residual = {self.case_i:.3e}",
                 f"case (ii) applies = {self.case_ii_applies}, residual = {self.case_ii:.3e}",
                 f"nontriviality residual = {self.nontriviality:.3e}"]
        lines += [f"note: {n}" for n in self.notes]
        if tol is not None:
            verdict = "PASS" if self.ok(tol) else "FAIL"
            lines += ["", "[verdict]", f"{verdict} (max residual {self.max_residual:.3e}, "
                      f"tol {tol:.1e})"]
        return "\n".join(lines) + "\n"


def extremal_residuals(p: ProblemSpec, ep: ExtendedProcess, ms: MultiplierSet,
                       substeps: int = DEFAULT_SUBSTEPS, tol: float = 1e-9,
                       tm: TransitionMap | None = None) -> ResidualReport:
    """Residuals of the extended maximum principle along ``ep``.

    Parameters
    ----------
    tol : float
        Activity tolerance for target constraints, ``nu = K`` and the two
        special cases.
    tm : TransitionMap, optional
        Reused when given.

    Raises
    ------
    GridMismatchError
        If ``ms.path`` is not on the grid of ``ep``.
    """
    if ms.path.s.shape != ep.s.shape or np.abs(ms.path.s - ep.s).max() > 1e-9 * max(1.0, ep.S):
        raise GridMismatchError("multiplier path and process grids differ")
    if tm is None:
        tm = transition_map(p, ep, substeps)
    P = ms.path.P
    PT = P[-1]
    reint = tm.apply(PT)
    scale = max(1.0, float(np.abs(P).max()))
    adjoint = float(np.abs(reint.P - P).max())
    notes = []

    Pmid = ms.path.mid if ms.path.mid is not None else reint.mid
    hv = hamiltonian_values(p, ep, ms.path, ms.pi, zmid=tm.zmid, Pmid=Pmid)
    gap = float(max(np.max(hv["Hstar_mid"] - hv["H_mid"]),
                    np.max(hv["Hstar_node"] - np.abs(hv["H_node"])), 0.0))
    h_node = float(np.abs(hv["H_node"]).max())
    h_abs = float(max(np.abs(hv["H_mid"]).max(), h_node))

    rays, lin = _extended_normal_cone(p, ep, tol)
    v = _endpoint_covector(P[0], PT, ms.pi) - ms.lam * p.cost.gradient(ep.extended_endpoint)
    A = np.vstack([rays, lin, -lin]).T
    if A.shape[1]:
        _, trans = nnls(A, v, maxiter=50 * A.shape[1])
    else:
        trans = float(np.linalg.norm(v))
    sign = max(ms.pi, 0.0) + max(-ms.lam, 0.0)

    dhdv = float(p.cost.gradient(ep.extended_endpoint)[-1])
    case_i = ms.lam * abs(dhdv) <= tol and ep.nu[-1] < p.K - tol
    case_ii = ep.y0[0] < ep.y0[-1] - tol
    pl = max(float(np.abs(P[:, 1:]).max()), ms.lam)
    triple = max(float(np.abs(P).max()), ms.lam)
    nontriv = 0.0 if triple > 0 else 1.0
    if case_ii and pl <= 1e-12 * scale:
        notes.append("case (ii): (p, lambda) vanishes")
    return ResidualReport(
        adjoint=adjoint, hamiltonian_gap=gap, hamiltonian_abs=h_abs, hamiltonian_node_abs=h_node,
        transversality=float(trans), sign=sign, case_i_applies=bool(case_i),
        case_i=abs(ms.pi) if case_i else 0.0, case_ii_applies=bool(case_ii),
        case_ii=(1.0 if pl <= 1e-12 * scale else 0.0) if case_ii else 0.0,
        nontriviality=nontriv, pi=ms.pi, lam=ms.lam, notes=notes)


# ---------------------------------------------------------------- normality


@dataclass
class Classification:
    """Outcome of :func:`classify_normality`.

    ``margin`` is the smallest phase-one infeasibility over the normalizations
    tried; it is zero for an abnormal witness and positive for ``Normal``.
    """

    verdict: str
    witness: MultiplierSet | None
    margin: float
    rounds: int
    diagnostic: str
    report: ResidualReport | None = None

    def to_text(self) -> str:
        lines = ["[verdict]", f"classification = {self.verdict}",
                 f"feasibility margin = {self.margin:.3e}", f"probe rounds = {self.rounds}"]
        if self.diagnostic:
            lines.append(f"diagnostic: {self.diagnostic}")
        if self.witness is not None:
            P = self.witness.path.P
            lines += ["", "[witness]", f"pi = {self.witness.pi:.6g}", "lambda = 0",
                      "terminal (p0, p) = " + ", ".join(f"{x:.6g}" for x in P[-1]),
                      "initial (p0, p) = " + ", ".join(f"{x:.6g}" for x in P[0])]
        text = "\n".join(lines) + "\n"
        if self.report is not None:
            text += "\n" + self.report.to_text()
        return text


def _unit_rows(A: np.ndarray):
    nrm = np.linalg.norm(A, axis=1)
    keep = nrm > 1e-14
    return A[keep] / nrm[keep, None], keep


class _NormalityLP:
    """Discretized multiplier conditions with ``lambda = 0``.

    Variables: ``P_T`` (1+n), ``pi``, ray coefficients ``alpha >= 0`` and
    lineality coefficients ``beta``.
    """

    def __init__(self, p: ProblemSpec, ep: ExtendedProcess, tm: TransitionMap, tol: float):
        self.p, self.ep, self.tm, self.tol = p, ep, tm, tol
        self.relax = _RELAX * tol
        n = p.n
        self.d = 1 + n
        rays, lin = _extended_normal_cone(p, ep, tol)
        self.rays, self.lin = rays, lin
        self.nr, self.nl = rays.shape[0], lin.shape[0]
        self.nvar = self.d + 1 + self.nr + self.nl
        self.case_i = ep.nu[-1] < p.K - tol
        self.case_ii = ep.y0[0] < ep.y0[-1] - tol
        # per point: maps P_T -> q0 and P_T -> q
        self.points = []
        N = ep.N
        for k in range(N):
            self._add_point(tm.zmid[k], tm.mids[k], [k])
        for k in range(N + 1):
            self._add_point(ep.Z[k], tm.nodes[k], [j for j in (k - 1, k) if 0 <= j < N])
        gens = p.cone.generator_matrix
        self.base_probes = [g / np.linalg.norm(g) for g in gens]
        self.extra_probes = [[] for _ in self.points]

    def _add_point(self, z, L, controls):
        f, G = self.p.kernels.eval_fields(z)
        r0 = np.concatenate(([1.0], f)) @ L
        Rq = np.column_stack([np.zeros(self.p.m), G.T]) @ L
        self.points.append((r0, Rq, controls))

    def _pad(self, rowP, coef_pi=0.0):
        row = np.zeros(self.nvar)
        row[:self.d] = rowP
        row[self.d] = coef_pi
        return row

    def rows(self):
        ep = self.ep
        ub = []
        for i, (r0, Rq, controls) in enumerate(self.points):
            for j in controls:
                h = self._pad(ep.w0[j] * r0 + ep.w[j] @ Rq, float(np.linalg.norm(ep.w[j])))
                ub += [h, -h]
            ub.append(self._pad(r0))
            for d in self.base_probes + self.extra_probes[i]:
                ub.append(self._pad(d @ Rq, 1.0))
        A_ub, keep = _unit_rows(np.asarray(ub))
        b_ub = np.full(A_ub.shape[0], self.relax)
        # transversality: cov(P_T, pi) - rays^T alpha - lin^T beta = 0
        L0 = self.tm.nodes[0]
        d = self.d
        nt = 2 * d + 1
        Aeq = np.zeros((nt, self.nvar))
        Aeq[:d, :d] = L0
        Aeq[d:2 * d, :d] = -np.eye(d)
        Aeq[2 * d, d] = -1.0
        Aeq[:, d + 1:d + 1 + self.nr] = -self.rays.T
        Aeq[:, d + 1 + self.nr:] = -self.lin.T
        # relaxed equalities as two-sided inequalities
        Ae, _ = _unit_rows(Aeq)
        A_ub = np.vstack([A_ub, Ae, -Ae])
        b_ub = np.concatenate([b_ub, np.full(2 * Ae.shape[0], self.relax)])
        return A_ub, b_ub

    def bounds(self, idx: int, sign: float):
        """Bounds for the normalization ``sign * x[idx] = 1`` in the sup norm."""
        d = self.d
        b = []
        for i in range(d):
            if self.case_ii and i == 0:
                b.append((None, None))
            else:
                b.append((-1.0, 1.0))
        if self.case_i:
            b.append((0.0, 0.0))
        elif self.case_ii:
            b.append((-_PI_BOUND, 0.0))
        else:
            b.append((-1.0, 0.0))
        b += [(0.0, None)] * self.nr + [(None, None)] * self.nl
        lo, hi = b[idx]
        if sign > 0:
            b[idx] = (1.0, 1.0)
        else:
            b[idx] = (-1.0, -1.0)
        return b

    def normalizations(self):
        d = self.d
        out = []
        first = 1 if self.case_ii else 0
        for i in range(first, d):
            out += [(i, 1.0), (i, -1.0)]
        if not self.case_i and not self.case_ii:
            out.append((d, -1.0))
        return out

    def solve(self):
        """Best phase-one result over all normalizations."""
        A_ub, b_ub = self.rows()
        best = None
        c = np.zeros(self.nvar)
        for idx, sign in self.normalizations():
            res = linprog_dense(c, A_ub=A_ub, b_ub=b_ub, bounds=self.bounds(idx, sign))
            r = 0.0 if res.status == 0 else float(res.infeasibility)
            if best is None or r < best[0]:
                best = (r, res, idx, sign)
            if res.status == 0:
                break
        return best

    def witness(self, x) -> MultiplierSet:
        PT = x[:self.d]
        pi = min(float(x[self.d]), 0.0)
        return MultiplierSet(self.tm.apply(PT), pi, 0.0)

    def refine(self, ms: MultiplierSet) -> int:
        """Add exact argmax directions where the witness violates ``H* <= 0``."""
        added = 0
        P = ms.path.P
        mids = ms.path.mid
        N = self.ep.N
        for i, (r0, Rq, controls) in enumerate(self.points):
            if i < N:
                z, Pk = self.tm.zmid[i], mids[i]
            else:
                z, Pk = self.ep.Z[i - N], P[i - N]
            hm = hamiltonian_max(self.p, z, Pk, ms.pi)
            if hm.branch == "impulse" and hm.value > self.tol:
                d = hm.w / max(np.linalg.norm(hm.w), 1e-300)
                if all(np.abs(d - e).max() > 1e-9 for e in self.base_probes + self.extra_probes[i]):
                    self.extra_probes[i].append(d)
                    added += 1
        return added


def classify_normality(p: ProblemSpec, ep: ExtendedProcess, tol: float = 1e-6,
                       substeps: int = DEFAULT_SUBSTEPS, max_rounds: int = 5) -> Classification:
    """Decide whether ``ep`` admits a multiplier set with ``lambda = 0``.

    The terminal covector parameterizes the adjoint path through the
    transition map, so the adjoint equation holds by construction.  The
    remaining conditions are linear: transversality, ``H = 0`` along the
    process controls, ``q0 <= 0`` and ``q.d + pi <= 0`` for probe
    directions ``d`` of ``C`` at every midpoint and node, each row
    normalized and relaxed by ``1e-3 * tol``.  Non-triviality is imposed as
    ``sign * x_i = 1`` with all other entries in ``[-1, 1]`` (sup norm),
    enumerating ``i`` and ``sign``.  Feasible programs yield a witness that
    is re-checked with :func:`extremal_residuals`; violated maximum
    conditions add their exact maximizing direction as a probe and the
    program is re-solved, at most ``max_rounds`` times.

    Raises
    ------
    ValueError
        For generated cones with ``m > 6``.
    """
    if p.cone.kind == "generated" and p.m > MAX_GENERATED_DIM:
        raise ValueError(f"generated cones limited to m <= {MAX_GENERATED_DIM}")
    tm = transition_map(p, ep, substeps)
    lp = _NormalityLP(p, ep, tm, tol)
    margin = math.inf
    last_report = None
    for rnd in range(1, max_rounds + 1):
        r, res, idx, sign = lp.solve()
        margin = r
        if res.status != 0:
            if r > 10 * tol:
                return Classification(NORMAL, None, r, rnd,
                                      "no multiplier set with lambda = 0 satisfies the "
                                      "discretized conditions")
            return Classification(UNDETERMINED, None, r, rnd,
                                  f"phase-one infeasibility {r:.3e} within 10*tol of zero")
        ms = lp.witness(res.x)
        rep = extremal_residuals(p, ep, ms, substeps=substeps, tol=tol, tm=tm)
        last_report = rep
        scale = max(1.0, ms.sup_norm)
        if rep.max_residual <= 10 * tol * scale:
            return Classification(ABNORMAL, ms, 0.0, rnd, "", rep)
        if lp.refine(ms) == 0:
            return Classification(UNDETERMINED, ms, 0.0, rnd,
                                  f"witness residual {rep.max_residual:.3e} exceeds 10*tol "
                                  "and no probe direction could be added", rep)
    return Classification(UNDETERMINED, None, margin, max_rounds,
                          f"probe refinement did not settle in {max_rounds} rounds", last_report)
