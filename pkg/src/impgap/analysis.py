"""No-gap tests, the empirical gap probe and the isolation probe.

Quick 1-controllability and drift controllability quantify over every
target normal covector ``zeta`` with a non-zero ``x2`` block.  They are
checked on the normal-cone generators and on random non-negative mixtures
of them, since the map from ``zeta`` to the tested infimum is concave and a
mixture can fail while every generator passes.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ProblemSpec, normal_cone_generators, violation
from .pmp import NORMAL, Classification, classify_normality
from .processes import ExtendedProcess
from .solver import Candidate, SolveConfig, minimize_violation, solve_extended, \
    solve_strict_restricted

__all__ = ["ControllabilityResult", "Certification", "GapReport", "IsolationResult",
           "quick_1_controllability", "drift_controllability", "certify_no_gap", "gap_probe",
           "isolation_probe", "DEFAULT_EPS_GRID", "MIXTURE_SAMPLES", "DEFAULT_TOL",
           "ISOLATION_TOL", "NO_GAP_CERTIFIED", "NO_GAP_EMPIRICAL", "GAP_DETECTED",
           "INCONCLUSIVE"]

DEFAULT_EPS_GRID = (0.2, 0.1, 0.05, 0.025, 0.0125)
MIXTURE_SAMPLES = 1000
DEFAULT_TOL = 1e-6
ISOLATION_TOL = 1e-3
NO_GAP_CERTIFIED = "NoGapCertified"
NO_GAP_EMPIRICAL = "NoGap"
GAP_DETECTED = "GapDetected"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True, eq=False)
class ControllabilityResult:
    """Outcome of a controllability test.

    ``witness`` is the first normal covector ``(t1, x1, t2, x2)`` for which
    the strict inequality fails; ``checked`` counts the covectors tested.
    """

    holds: bool
    witness: np.ndarray | None
    value: float | None
    checked: int
    vacuous: bool = False

    def __str__(self) -> str:
        if self.holds:
            return "Holds (vacuous)" if self.vacuous else "Holds"
        w = ", ".join(f"{x + 0.0:.4g}" for x in self.witness)
        return f"Fails (zeta = [{w}], value {self.value + 0.0:.3g})"


def _normal_covectors(p: ProblemSpec, endpoint, tol: float, samples: int, seed: int):
    """Generators and random mixtures of ``N_T`` with a non-zero ``x2`` block."""
    endpoint = np.asarray(endpoint, dtype=float)
    if p.target.distance(endpoint) > max(tol, 1e-7):
        raise ValueError(f"endpoint is not on the target (distance "
                         f"{p.target.distance(endpoint):.3g})")
    nc = normal_cone_generators(p.target, endpoint, tol=max(tol, 1e-7))
    n = p.n
    sl = slice(2 + n, 2 + 2 * n)
    dirs = [d for d in nc.all_directions if np.linalg.norm(d[sl]) > 1e-12]
    rng = np.random.default_rng(seed)
    nr, nl = nc.rays.shape[0], nc.lineality.shape[0]
    if nr + nl:
        for _ in range(samples):
            z = rng.exponential(size=nr) @ nc.rays if nr else np.zeros(endpoint.size)
            if nl:
                z = z + rng.normal(size=nl) @ nc.lineality
            nrm = np.linalg.norm(z)
            if nrm > 1e-12 and np.linalg.norm(z[sl]) > 1e-12 * nrm:
                dirs.append(z / nrm)
    return dirs, sl


def _controllability(p, endpoint, tol, samples, seed, value_fn) -> ControllabilityResult:
    dirs, sl = _normal_covectors(p, endpoint, tol, samples, seed)
    if not dirs:
        return ControllabilityResult(True, None, None, 0, vacuous=True)
    n = p.n
    z = np.concatenate(([endpoint[1 + n]], np.asarray(endpoint[2 + n:], dtype=float)))
    f, G = p.kernels.eval_fields(z)
    for zeta in dirs:
        val = value_fn(zeta[sl], f, G)
        if not val < -tol:
            return ControllabilityResult(False, np.asarray(zeta, dtype=float), float(val),
                                         len(dirs))
    return ControllabilityResult(True, None, None, len(dirs))


def quick_1_controllability(p: ProblemSpec, endpoint, tol: float = DEFAULT_TOL,
                            samples: int = MIXTURE_SAMPLES, seed: int = 0) -> ControllabilityResult:
    """Test ``inf_{w in C, |w| = 1} zeta_x2 . G(t2, x2) w < -tol`` for every tested ``zeta``.

    Parameters
    ----------
    endpoint : array_like, shape (2+2n,)
        ``(t1, x1, t2, x2)``.

    Raises
    ------
    ValueError
        If the endpoint is not on the target.
    """
    def value(zx, f, G):
        best, _ = p.cone.max_unit(-(G.T @ zx))
        return -best if math.isfinite(best) else math.inf

    return _controllability(p, endpoint, tol, samples, seed, value)


def drift_controllability(p: ProblemSpec, endpoint, tol: float = DEFAULT_TOL,
                          samples: int = MIXTURE_SAMPLES, seed: int = 0) -> ControllabilityResult:
    """Test ``zeta_x2 . f(t2, x2) < -tol`` for every tested ``zeta``.

    Raises
    ------
    ValueError
        If the endpoint is not on the target.
    """
    return _controllability(p, endpoint, tol, samples, seed, lambda zx, f, G: float(zx @ f))


# ---------------------------------------------------------------- certification


@dataclass(frozen=True)
class Certification:
    """Result of :func:`certify_no_gap`; ``reason`` is set when certified."""

    tag: str
    reason: str | None
    qc: ControllabilityResult | None
    dc: ControllabilityResult | None
    normality: str | None
    notes: tuple = ()

    @property
    def certified(self) -> bool:
        return self.tag == NO_GAP_CERTIFIED

    def __str__(self) -> str:
        return f"{self.tag}({self.reason})" if self.reason else self.tag


def _verdict(classification) -> str | None:
    if classification is None:
        return None
    if isinstance(classification, Classification):
        return classification.verdict
    return str(classification)


def certify_no_gap(p: ProblemSpec, minimizer, classification=None,
                   tol: float = DEFAULT_TOL) -> Certification:
    """Apply the sufficient no-gap conditions in a fixed order.

    1. no drift (every ``f_i`` is the constant zero);
    2. non-degenerate time interval, ``nu(S) < K`` and quick 1-controllability;
    3. declared epigraph target with drift controllability, or with
       ``nu(S) < K`` and quick 1-controllability;
    4. normality of the minimizer.

    Parameters
    ----------
    minimizer : Candidate or ExtendedProcess
    classification : Classification or str, optional
        Result of :func:`classify_normality`; step 4 is skipped without it.
    """
    ep = minimizer.process if isinstance(minimizer, Candidate) else minimizer
    notes = []
    if p.fields.drift_free:
        return Certification(NO_GAP_CERTIFIED, "no-drift", None, None, _verdict(classification))
    endpoint = ep.endpoint
    qc = quick_1_controllability(p, endpoint, tol)
    dc = drift_controllability(p, endpoint, tol)
    slack_nu = ep.nu[-1] < p.K - tol
    nondegenerate = ep.y0[-1] > ep.y0[0] + tol
    notes.append(f"QC {qc}; DC {dc}; covectors sampled: generators plus "
                 f"{MIXTURE_SAMPLES} mixtures")
    if nondegenerate and slack_nu and qc.holds:
        return Certification(NO_GAP_CERTIFIED, "QC", qc, dc, _verdict(classification),
                             tuple(notes))
    if p.target.epigraph_declared and (dc.holds or (slack_nu and qc.holds)):
        return Certification(NO_GAP_CERTIFIED, "epigraph", qc, dc, _verdict(classification),
                             tuple(notes))
    verdict = _verdict(classification)
    if verdict is None:
        notes.append("normality not evaluated")
    elif verdict == NORMAL:
        return Certification(NO_GAP_CERTIFIED, "normality", qc, dc, verdict, tuple(notes))
    return Certification(INCONCLUSIVE, None, qc, dc, verdict, tuple(notes))


# ---------------------------------------------------------------- gap probe


@dataclass
class GapReport:
    """Extended and restricted strict costs with the resulting verdicts.

    ``strict`` holds ``(eps, J_eps, feasible)`` in grid order.
    """

    extended_cost: float
    extended_feasible: bool
    strict: list
    estimate: float
    threshold: float
    empirical: str
    certification: Certification | None
    classification: Classification | None
    conclusion: str
    reason: str | None
    flags: list = field(default_factory=list)
    extended: Candidate | None = None
    restricted: list = field(default_factory=list)

    @property
    def tag(self) -> str:
        return f"{self.conclusion}({self.reason})" if self.reason else self.conclusion

    def to_text(self) -> str:
        lines = ["[gap probe]", f"J_e* = {self.extended_cost:.8g} "
                 f"(feasible: {self.extended_feasible})"]
        for eps, J, feas in self.strict:
            lines.append(f"eps = {eps:<8g} J_eps = {J:.8g} (feasible: {feas})")
        lines += [f"gap estimate = {self.estimate:.6g}", f"threshold = {self.threshold:.6g}",
                  f"empirical = {self.empirical}", ""]
        if self.certification is not None:
            lines += ["[certification]", f"result = {self.certification}"]
            if self.certification.qc is not None:
                lines.append(f"quick 1-controllability: {self.certification.qc}")
                lines.append(f"drift controllability: {self.certification.dc}")
            lines += [f"note: {n}" for n in self.certification.notes]
        if self.classification is not None:
            lines.append(f"normality: {self.classification.verdict}")
        lines += ["", "[conclusion]", self.tag]
        lines += [f"flag: {f}" for f in self.flags]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "J", "feasible"])
        w.writerow([0.0, repr(float(self.extended_cost)), int(self.extended_feasible)])
        for eps, J, feas in self.strict:
            w.writerow([repr(float(eps)), repr(float(J)), int(feas)])
        return buf.getvalue()


def gap_probe(p: ProblemSpec, cfg: SolveConfig | None = None, eps_grid=DEFAULT_EPS_GRID,
              gap_threshold: float | None = None, classify: bool = True,
              tol: float = DEFAULT_TOL, minimizer: ExtendedProcess | None = None) -> GapReport:
    """Compare the extended infimum with restricted strict infima.

    ``J_e*`` is the :func:`solve_extended` cost and ``J_eps`` the
    :func:`solve_strict_restricted` cost per ``eps``.  The estimate is
    ``J_{eps_min} - J_e*``; a gap is reported when it exceeds the threshold
    (default ``max(10 tol_feas, 0.05 (1 + |J_e*|))``) and the last two
    ``J_eps`` differ by less than 20% of it.  A certificate from
    :func:`certify_no_gap` overrides an inconclusive empirical result; a
    certificate contradicting an empirical gap is flagged as a solver
    failure.
    """
    cfg = cfg or SolveConfig()
    eps_grid = sorted((float(e) for e in eps_grid), reverse=True)
    if not eps_grid or any(not 0.0 < e < 1.0 for e in eps_grid):
        raise ValueError("eps grid values must lie in (0, 1)")
    flags = []
    ce = solve_extended(p, cfg)
    Je = ce.cost if ce.feasible else math.inf
    if not ce.feasible:
        flags.append(f"extended solve infeasible (residual {ce.residual:.3e})")
    restricted, strict = [], []
    for eps in eps_grid:
        cs = solve_strict_restricted(p, eps, cfg)
        restricted.append(cs)
        strict.append((eps, cs.cost if cs.feasible else math.inf, cs.feasible))
        if not cs.feasible:
            flags.append(f"strict solve at eps={eps:g} infeasible (residual {cs.residual:.3e})")
    Js = [J for _, J, _ in strict]
    stol = 2.0 * cfg.tol_feas
    for (e1, J1, _), (e2, J2, _) in zip(strict, strict[1:]):
        if math.isfinite(J1) and math.isfinite(J2) and J2 > J1 + stol:
            flags.append(f"J_eps increased from {J1:.6g} (eps={e1:g}) to {J2:.6g} (eps={e2:g})")
    finite = [J for J in Js if math.isfinite(J)]
    if finite and math.isfinite(Je) and Je > min(finite) + stol:
        flags.append(f"J_e* = {Je:.6g} exceeds min J_eps = {min(finite):.6g}")

    if gap_threshold is None:
        gap_threshold = max(10.0 * cfg.tol_feas, 0.05 * (1.0 + abs(Je if math.isfinite(Je) else 0.0)))
    estimate = Js[-1] - Je if math.isfinite(Je) and math.isfinite(Js[-1]) else math.nan
    if math.isnan(estimate):
        empirical = INCONCLUSIVE
    elif estimate <= gap_threshold:
        empirical = NO_GAP_EMPIRICAL
    elif len(Js) >= 2 and math.isfinite(Js[-2]) and abs(Js[-1] - Js[-2]) < 0.2 * estimate:
        empirical = GAP_DETECTED
    else:
        empirical = INCONCLUSIVE

    subject = ce.process if ce.feasible else None
    if minimizer is not None:
        res = violation(p, minimizer.endpoint, minimizer.nu[-1])
        Jm = p.cost.value(minimizer.extended_endpoint)
        if res <= cfg.tol_feas and (not math.isfinite(Je) or abs(Jm - Je) <= stol):
            subject = minimizer
        else:
            flags.append(f"supplied minimizer not used (violation {res:.3e}, cost {Jm:.6g})")
    classification = None
    certification = None
    if subject is not None:
        if classify and not p.fields.drift_free:
            classification = classify_normality(p, subject, tol=tol)
        certification = certify_no_gap(p, subject, classification, tol=tol)
    if certification is not None and certification.certified:
        conclusion, reason = NO_GAP_CERTIFIED, certification.reason
        if empirical == GAP_DETECTED:
            flags.append("SOLVER FAILURE SUSPECTED: empirical gap contradicts the "
                         f"{certification.reason} certificate")
    elif empirical == NO_GAP_EMPIRICAL:
        conclusion, reason = NO_GAP_EMPIRICAL, "empirical"
    else:
        conclusion, reason = empirical, None
    return GapReport(extended_cost=Je, extended_feasible=ce.feasible, strict=strict,
                     estimate=estimate, threshold=gap_threshold, empirical=empirical,
                     certification=certification, classification=classification,
                     conclusion=conclusion, reason=reason, flags=flags, extended=ce,
                     restricted=restricted)


# ---------------------------------------------------------------- isolation


@dataclass(frozen=True, eq=False)
class IsolationResult:
    """Outcome of :func:`isolation_probe`.

    ``value`` is the smallest violation found among processes inside the
    ball, or ``inf`` when no run ended inside it.
    """

    value: float
    process: ExtendedProcess | None
    isolated: bool
    delta: float
    eps: float
    tol: float
    runs: tuple
    diagnostic: str = ""

    def __str__(self) -> str:
        state = "isolated (numerically)" if self.isolated else "not isolated"
        text = f"min violation {self.value:.6g} within delta={self.delta:g} (eps={self.eps:g}): {state}"
        return text + (f"; {self.diagnostic}" if self.diagnostic else "")


def isolation_probe(p: ProblemSpec, ep: ExtendedProcess, delta: float,
                    cfg: SolveConfig | None = None, eps: float = 0.05,
                    tol: float = ISOLATION_TOL) -> IsolationResult:
    """Smallest violation ``max{d_T, (nu - K) v 0}`` near ``ep``.

    Minimizes over processes with ``w0 >= eps`` (embedded strict
    processes) within d-infinity distance ``delta`` of ``ep``.  The initial
    point is free and enters through ``d_T``.  The process is flagged
    isolated when the value exceeds ``tol``.

    Raises
    ------
    ValueError
        If ``ep`` is infeasible.
    """
    res = violation(p, ep.endpoint, ep.nu[-1])
    cfg = cfg or SolveConfig()
    if res > max(cfg.tol_feas, 1e-6):
        raise ValueError(f"reference process is infeasible (violation {res:.3e})")
    cand = minimize_violation(p, ep, delta, eps, cfg)
    if not cand.feasible:
        return IsolationResult(math.inf, None, True, float(delta), float(eps), tol, cand.runs,
                               "no strict process found in the ball")
    return IsolationResult(cand.cost, cand.process, cand.cost > tol, float(delta), float(eps),
                           tol, cand.runs)
