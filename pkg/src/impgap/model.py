"""Problem data: fields, control cone, endpoint target, cost and bound ``K``.

Endpoint vectors are laid out as ``z = (t1, x1_1..x1_n, t2, x2_1..x2_n)``,
length ``2 + 2n``; the cost additionally receives the total variation ``v``
as its last argument.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr as E

__all__ = [
    "FREE", "NONNEG", "NONPOS", "ZERO",
    "VectorFieldSet", "ControlCone", "TargetSpec", "CostSpec", "ProblemSpec",
    "NormalConeGenerators", "NormalCovector", "ValidationReport",
    "state_names", "cost_names", "validate", "normal_cone_generators",
    "project_cone", "violation",
]

FREE, NONNEG, NONPOS, ZERO = "free", "nonneg", "nonpos", "zero"
_TAGS = (FREE, NONNEG, NONPOS, ZERO)
MAX_GENERATED_DIM = 6


def state_names(n: int) -> list[str]:
    """Variable names of the fields: ``t, x1..xn``."""
    return ["t"] + [f"x{i}" for i in range(1, n + 1)]


def cost_names(n: int) -> list[str]:
    """Variable names of the cost, in endpoint-vector order plus ``v``."""
    return (["t1"] + [f"x1_{i}" for i in range(1, n + 1)]
            + ["t2"] + [f"x2_{i}" for i in range(1, n + 1)] + ["v"])


# ---------------------------------------------------------------- fields


@dataclass(frozen=True)
class VectorFieldSet:
    """Drift ``f`` and impulsive fields ``g_1..g_m`` in ``(t, x1..xn)``.

    ``g[j][i]`` is component ``i`` of the column ``g_{j+1}``.
    """

    n: int
    m: int
    f: tuple
    g: tuple

    @classmethod
    def from_strings(cls, f: Sequence[str], g: Sequence[Sequence[str]]) -> "VectorFieldSet":
        n = len(f)
        names = state_names(n)
        fe = tuple(E.parse(str(s), names) for s in f)
        ge = tuple(tuple(E.parse(str(s), names) for s in col) for col in g)
        return cls(n=n, m=len(ge), f=fe, g=ge)

    @property
    def drift_free(self) -> bool:
        """True when every component of ``f`` is the constant zero."""
        return all(E.is_zero(e) for e in self.f)

    @property
    def g_time_invariant(self) -> bool:
        """True when no ``g_j`` references ``t``."""
        return all("t" not in E.variables(e) for col in self.g for e in col)

    def flat(self) -> list:
        """``f_1..f_n`` followed by the ``g`` columns, as used by the kernels."""
        return list(self.f) + [e for col in self.g for e in col]

    @cached_property
    def _tape(self) -> E.Tape:
        return E.compile_tape(self.flat(), state_names(self.n))

    def eval(self, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``f(t, x)`` (n,) and ``G(t, x)`` (n, m) with columns ``g_j``."""
        from ._kernels import eval_tape

        tape = self._tape
        env = np.concatenate(([float(t)], np.asarray(x, dtype=float)))
        out = np.empty(tape.size)
        eval_tape(tape.code, tape.arg, tape.off, env, out, np.empty(tape.stack_size))
        n = self.n
        return out[:n].copy(), out[n:].reshape(self.m, n).T.copy()


# ---------------------------------------------------------------- cone


@dataclass(frozen=True)
class ControlCone:
    """Closed convex cone ``C`` of admissible control directions.

    Parameters
    ----------
    kind : {"full", "orthant", "generated"}
    m : int
        Control dimension.
    tags : tuple of str, optional
        Per-coordinate tag for ``kind="orthant"``: ``free``, ``nonneg``,
        ``nonpos`` or ``zero``.
    generators : array_like, optional
        Rows spanning the cone for ``kind="generated"``; normalized to unit
        length on construction.
    """

    kind: str
    m: int
    tags: tuple = ()
    generators: tuple = ()

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("control dimension must be positive")
        if self.kind == "full":
            pass
        elif self.kind == "orthant":
            if len(self.tags) != self.m or any(t not in _TAGS for t in self.tags):
                raise ValueError(f"orthant cone needs {self.m} tags from {_TAGS}")
        elif self.kind == "generated":
            gens = np.asarray(self.generators, dtype=float)
            if gens.ndim != 2 or gens.shape[0] == 0 or gens.shape[1] != self.m:
                raise ValueError(f"generated cone needs a non-empty list of {self.m}-vectors")
            norms = np.linalg.norm(gens, axis=1)
            if np.any(norms <= 1e-12):
                raise ValueError("zero generator")
            unit = gens / norms[:, None]
            object.__setattr__(self, "generators", tuple(tuple(map(float, g)) for g in unit))
        else:
            raise ValueError(f"unknown cone kind {self.kind!r}")

    @classmethod
    def full(cls, m: int) -> "ControlCone":
        return cls("full", m)

    @classmethod
    def orthant(cls, tags: Sequence[str]) -> "ControlCone":
        return cls("orthant", len(tags), tags=tuple(tags))

    @classmethod
    def generated(cls, generators) -> "ControlCone":
        g = np.asarray(generators, dtype=float)
        return cls("generated", g.shape[1], generators=tuple(map(tuple, g)))

    @property
    def generator_matrix(self) -> np.ndarray:
        """Unit generators as rows; lineality appears as a ``±`` pair."""
        m = self.m
        if self.kind == "generated":
            return np.asarray(self.generators, dtype=float)
        rows = []
        tags = self.tags if self.kind == "orthant" else (FREE,) * m
        for i, tag in enumerate(tags):
            e = np.zeros(m)
            e[i] = 1.0
            if tag in (FREE, NONNEG):
                rows.append(e)
            if tag in (FREE, NONPOS):
                rows.append(-e)
        return np.asarray(rows, dtype=float).reshape(-1, m)

    @property
    def is_trivial(self) -> bool:
        """True when ``C = {0}``, so no impulse is possible."""
        return self.generator_matrix.shape[0] == 0

    def project(self, q) -> np.ndarray:
        return project_cone(self, q)

    def contains(self, w, tol: float = 1e-9) -> bool:
        w = np.asarray(w, dtype=float)
        return bool(np.linalg.norm(w - project_cone(self, w)) <= tol * max(1.0, np.linalg.norm(w)))

    def max_unit(self, q) -> tuple[float, np.ndarray | None]:
        """``max q.d`` over unit ``d`` in ``C`` and a maximizer.

        Equals ``|P_C(q)|`` when the projection is non-zero.  Otherwise ``q``
        is in the polar cone and the maximum is attained at a generator.
        Returns ``(-inf, None)`` when ``C = {0}``.
        """
        q = np.asarray(q, dtype=float)
        gens = self.generator_matrix
        if gens.shape[0] == 0:
            return -math.inf, None
        p = project_cone(self, q)
        r = float(np.linalg.norm(p))
        if r > 1e-14:
            return r, p / r
        vals = gens @ q
        i = int(np.argmax(vals))
        return float(min(vals[i], 0.0)), gens[i].copy()


def _project_generated(gens: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Projection onto ``cone(gens)`` by enumerating active generator sets.

    By Caratheodory the projection lies in the cone of at most ``m``
    linearly independent generators; each candidate set gives an
    unconstrained least-squares point, and the feasible one satisfying the
    dual condition ``g.(q - p) <= 0`` for all generators with smallest
    distance is returned.
    """
    r, m = gens.shape
    best = np.zeros(m)
    scale = max(1.0, float(np.linalg.norm(q)))
    if np.all(gens @ q <= 1e-12 * scale):
        return best
    best_dist = float(np.linalg.norm(q))
    for size in range(1, min(r, m) + 1):
        for subset in itertools.combinations(range(r), size):
            A = gens[list(subset)].T
            if np.linalg.matrix_rank(A, tol=1e-10) < size:
                continue
            c, *_ = np.linalg.lstsq(A, q, rcond=None)
            if np.any(c < -1e-12):
                continue
            p = A @ np.maximum(c, 0.0)
            resid = q - p
            if np.any(gens @ resid > 1e-9 * scale):
                continue
            dist = float(np.linalg.norm(resid))
            if dist < best_dist - 1e-15:
                best, best_dist = p, dist
    return best


def project_cone(c: ControlCone, q) -> np.ndarray:
    """Euclidean projection of ``q`` onto the cone ``c``."""
    q = np.asarray(q, dtype=float).reshape(c.m)
    if c.kind == "full":
        return q.copy()
    if c.kind == "orthant":
        p = q.copy()
        for i, tag in enumerate(c.tags):
            if tag == NONNEG:
                p[i] = max(p[i], 0.0)
            elif tag == NONPOS:
                p[i] = min(p[i], 0.0)
            elif tag == ZERO:
                p[i] = 0.0
        return p
    if c.m > MAX_GENERATED_DIM:
        raise ValueError(f"generated cones limited to m <= {MAX_GENERATED_DIM}")
    return _project_generated(np.asarray(c.generators, dtype=float), q)


# ---------------------------------------------------------------- target


def _bound(spec) -> tuple[float, float]:
    """Normalize a coordinate constraint to ``(lo, hi)``."""
    if isinstance(spec, str):
        if spec.strip().lower() == "free":
            return (-math.inf, math.inf)
        raise ValueError(f"unknown coordinate constraint {spec!r}")
    if isinstance(spec, (int, float)):
        return (float(spec), float(spec))
    lo, hi = spec
    return (float(lo), float(hi))


@dataclass(frozen=True)
class TargetSpec:
    """Box-times-halfspaces endpoint target.

    Attributes
    ----------
    n : int
    lo, hi : tuple of float
        Bounds on ``z = (t1, x1, t2, x2)``; equal entries fix a coordinate,
        infinite entries leave it free.
    halfspaces : tuple of (a, b)
        Constraints ``a . z <= b``.
    epigraph_declared : bool
        User assertion that the target is an epigraph set.
    """

    n: int
    lo: tuple
    hi: tuple
    halfspaces: tuple = ()
    epigraph_declared: bool = False

    def __post_init__(self):
        d = 2 + 2 * self.n
        if len(self.lo) != d or len(self.hi) != d:
            raise ValueError(f"target bounds must have length {d}")
        for a, _ in self.halfspaces:
            if len(a) != d:
                raise ValueError(f"halfspace normal must have length {d}")

    @classmethod
    def from_parts(cls, t1, x1, t2, x2, halfspaces=(), epigraph_declared=False):
        """Build from per-coordinate specs: number, ``"free"`` or ``(lo, hi)``."""
        x1 = list(x1)
        x2 = list(x2)
        if len(x1) != len(x2):
            raise ValueError("x1 and x2 constraints must have equal length")
        parts = [_bound(t1)] + [_bound(s) for s in x1] + [_bound(t2)] + [_bound(s) for s in x2]
        hs = tuple((tuple(float(v) for v in a), float(b)) for a, b in halfspaces)
        return cls(n=len(x1), lo=tuple(p[0] for p in parts), hi=tuple(p[1] for p in parts),
                   halfspaces=hs, epigraph_declared=bool(epigraph_declared))

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=float)

    @property
    def fixed_mask(self) -> np.ndarray:
        return self.lo_array == self.hi_array

    @property
    def H(self) -> tuple[np.ndarray, np.ndarray]:
        d = 2 + 2 * self.n
        if not self.halfspaces:
            return np.zeros((0, d)), np.zeros(0)
        A = np.array([a for a, _ in self.halfspaces], dtype=float)
        b = np.array([b for _, b in self.halfspaces], dtype=float)
        return A, b

    def project(self, z, iters: int = 20000, tol: float = 1e-13) -> np.ndarray:
        """Euclidean projection onto ``T`` (Dykstra's alternating projections)."""
        z = np.asarray(z, dtype=float)
        lo, hi = self.lo_array, self.hi_array
        if not self.halfspaces:
            return np.clip(z, lo, hi)
        A, b = self.H
        sets = len(b) + 1
        x = z.copy()
        incr = np.zeros((sets, len(z)))
        for _ in range(iters):
            prev = x.copy()
            y = x + incr[0]
            x = np.clip(y, lo, hi)
            incr[0] = y - x
            for r in range(len(b)):
                y = x + incr[r + 1]
                a = A[r]
                viol = a @ y - b[r]
                x = y - (viol / (a @ a)) * a if viol > 0 else y
                incr[r + 1] = y - x
            if np.linalg.norm(x - prev) <= tol * (1.0 + np.linalg.norm(x)):
                break
        return x

    def distance(self, z) -> float:
        """Euclidean distance ``d_T(z)``."""
        z = np.asarray(z, dtype=float)
        return float(np.linalg.norm(z - self.project(z)))

    def contains(self, z, tol: float = 1e-9) -> bool:
        return self.distance(z) <= tol

    def is_nonempty(self) -> bool:
        """Interval consistency plus one phase-1 LP over the halfspaces."""
        lo, hi = self.lo_array, self.hi_array
        if np.any(lo > hi):
            return False
        if not self.halfspaces:
            return True
        from .simplex import linprog_dense

        A, b = self.H
        res = linprog_dense(np.zeros(len(lo)), A_ub=A, b_ub=b,
                            bounds=list(zip(lo, hi)))
        return res.status == 0


@dataclass(frozen=True)
class NormalConeGenerators:
    """``N_T(z) = cone(rays) + span(lineality)``, both stored as rows."""

    rays: np.ndarray
    lineality: np.ndarray

    @property
    def all_directions(self) -> np.ndarray:
        """Rays followed by both signs of every lineality direction."""
        return np.vstack([self.rays, self.lineality, -self.lineality])


@dataclass(frozen=True)
class NormalCovector:
    """Endpoint covector split into its four blocks."""

    zeta_t1: float
    zeta_x1: np.ndarray
    zeta_t2: float
    zeta_x2: np.ndarray

    @classmethod
    def from_vector(cls, v, n: int) -> "NormalCovector":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), v[1:1 + n].copy(), float(v[1 + n]), v[2 + n:2 + 2 * n].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.zeta_t1], self.zeta_x1, [self.zeta_t2], self.zeta_x2))


def normal_cone_generators(t: TargetSpec, z, tol: float = 1e-7) -> NormalConeGenerators:
    """Finite description of the normal cone ``N_T(z)``.

    Fixed coordinates give lineality directions, interval bounds active at
    ``lo`` (``hi``) give rays ``-e_i`` (``+e_i``) and active halfspaces give
    their normal ``a``.

    Raises
    ------
    ValueError
        If ``z`` is farther than ``tol`` from ``T``.
    """
    z = np.asarray(z, dtype=float)
    d = len(t.lo)
    if z.shape != (d,):
        raise ValueError(f"endpoint must have length {d}")
    dist = t.distance(z)
    if dist > tol:
        raise ValueError(f"point is not on the target (distance {dist:.3g} > {tol:.3g})")
    rays, lin = [], []
    for i in range(d):
        lo, hi = t.lo[i], t.hi[i]
        e = np.zeros(d)
        e[i] = 1.0
        if lo == hi:
            lin.append(e)
        elif math.isfinite(lo) and abs(z[i] - lo) <= tol:
            rays.append(-e)
        elif math.isfinite(hi) and abs(z[i] - hi) <= tol:
            rays.append(e)
    A, b = t.H
    for a, bb in zip(A, b):
        if abs(a @ z - bb) <= tol * max(1.0, float(np.linalg.norm(a))):
            rays.append(a.copy())
    return NormalConeGenerators(np.asarray(rays, dtype=float).reshape(-1, d),
                                np.asarray(lin, dtype=float).reshape(-1, d))


# ---------------------------------------------------------------- cost


@dataclass(frozen=True)
class CostSpec:
    """Endpoint cost ``h(t1, x1, t2, x2, v)``."""

    h: E.Expr
    n: int

    @classmethod
    def from_string(cls, source: str, n: int) -> "CostSpec":
        return cls(E.parse(str(source), cost_names(n)), n)

    @cached_property
    def gradient_exprs(self) -> tuple:
        return tuple(E.differentiate(self.h, v) for v in cost_names(self.n))

    @cached_property
    def _tapes(self):
        names = cost_names(self.n)
        return E.compile_tape([self.h], names), E.compile_tape(list(self.gradient_exprs), names)

    def value(self, e) -> float:
        """Cost at the extended endpoint ``e = (z, v)``."""
        from ._kernels import eval_tape

        tape, _ = self._tapes
        out = np.empty(1)
        eval_tape(tape.code, tape.arg, tape.off, np.asarray(e, dtype=float), out,
                  np.empty(tape.stack_size))
        return float(out[0])

    def gradient(self, e) -> np.ndarray:
        from ._kernels import eval_tape

        _, tape = self._tapes
        out = np.empty(tape.size)
        eval_tape(tape.code, tape.arg, tape.off, np.asarray(e, dtype=float), out,
                  np.empty(tape.stack_size))
        return out


# ---------------------------------------------------------------- problem


@dataclass(frozen=True)
class ProblemSpec:
    """Unbounded-control problem and, implicitly, its space-time extension."""

    fields: VectorFieldSet
    cone: ControlCone
    target: TargetSpec
    cost: CostSpec
    K: float = math.inf
    name: str = ""
    description: str = ""

    @property
    def n(self) -> int:
        return self.fields.n

    @property
    def m(self) -> int:
        return self.fields.m

    @cached_property
    def kernels(self):
        from .dynamics import CompiledFields

        return CompiledFields.build(self.fields)


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(self.issues)


def validate(p: ProblemSpec, samples: int = 200, seed: int = 0) -> ValidationReport:
    """Structural checks; an empty report means the problem is usable.

    Linear growth of the fields is not checked.  Monotonicity of ``h`` in
    ``v`` is sampled at random endpoints.
    """
    rep = ValidationReport()
    n, m = p.fields.n, p.fields.m
    if len(p.fields.f) != n:
        rep.issues.append(f"f has {len(p.fields.f)} components, expected n={n}")
    if len(p.fields.g) != m:
        rep.issues.append(f"g has {len(p.fields.g)} columns, expected m={m}")
    for j, col in enumerate(p.fields.g):
        if len(col) != n:
            rep.issues.append(f"g column {j + 1} has {len(col)} components, expected n={n}")
    if p.cone.m != m:
        rep.issues.append(f"cone dimension {p.cone.m} differs from m={m}")
    if p.cone.kind == "generated" and p.cone.m > MAX_GENERATED_DIM:
        rep.issues.append(f"generated cones limited to m <= {MAX_GENERATED_DIM}")
    if p.target.n != n:
        rep.issues.append(f"target dimension {p.target.n} differs from n={n}")
    if p.cost.n != n:
        rep.issues.append(f"cost dimension {p.cost.n} differs from n={n}")
    if not (p.K > 0):
        rep.issues.append("K must be positive")
    names = set(state_names(n))
    for e in p.fields.flat():
        extra = E.variables(e) - names
        if extra:
            rep.issues.append(f"field references undeclared variables {sorted(extra)}")
    if p.target.n == n and not p.target.is_nonempty():
        rep.issues.append("target set is empty")
    if p.cost.n == n:
        rng = np.random.default_rng(seed)
        dvdh = p.cost.gradient_exprs[-1]
        cn = cost_names(n)
        vmax = p.K if math.isfinite(p.K) and p.K > 0 else 10.0
        worst = 0.0
        for _ in range(samples):
            e = rng.normal(size=len(cn))
            e[-1] = rng.uniform(0.0, vmax)
            try:
                val = E.evaluate(dvdh, dict(zip(cn, e)))
            except E.DomainError:
                continue
            worst = min(worst, val)
        if worst < -1e-12:
            rep.issues.append(f"h is not non-decreasing in v (sampled dh/dv = {worst:.3g})")
    return rep


def violation(p: ProblemSpec, z, nu: float) -> float:
    """``max{d_T(z), (nu - K) v 0}`` at an endpoint."""
    excess = max(float(nu) - p.K, 0.0) if math.isfinite(p.K) else 0.0
    return max(p.target.distance(z), excess)
