"""Problem files (TOML) and multiplier files.

Problem file layout::

    name = "ex1"
    n = 2
    m = 1
    K = 1.0                     # or inf
    cost = "-x2_1"              # in t1, x1_1..x1_n, t2, x2_1..x2_n, v

    [fields]
    f = ["0", "x1"]             # n expressions in t, x1..xn
    g = [["1", "0"]]            # m columns of n expressions

    [cone]
    kind = "orthant"            # "full", "orthant" or "generated"
    tags = ["nonneg"]           # orthant: free, nonneg, nonpos, zero
    # generators = [[1.0, 0.0]] # generated

    [target]
    t1 = 0.0                    # number (fixed), "free" or [lo, hi]
    x1 = [0.0, 0.0]
    t2 = 1.0
    x2 = ["free", [-inf, 0.0]]
    epigraph = false
    halfspaces = [{ a = [...], b = 0.0 }]

Multiplier file layout::

    lambda = 0.0
    pi = 0.0
    terminal = [p0, p1, ..., pn]   # used when no path is given
    [path]                         # optional adjoint values at the nodes
    s = [...]
    P = [[p0, p1, ..., pn], ...]
"""
from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import expr as E
from .model import ControlCone, CostSpec, ProblemSpec, TargetSpec, VectorFieldSet, validate

__all__ = ["ProblemFileError", "load_problem", "loads_problem", "dumps_problem",
           "load_multipliers_data", "dumps_multipliers"]


class ProblemFileError(ValueError):
    """Malformed or invalid problem or multiplier file."""


def _num(v, what: str) -> float:
    if isinstance(v, bool):
        raise ProblemFileError(f"{what}: expected a number")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v.strip())
        except ValueError:
            pass
    raise ProblemFileError(f"{what}: expected a number, got {v!r}")


def _coord(v, what: str):
    if isinstance(v, str) and v.strip().lower() == "free":
        return "free"
    if isinstance(v, list):
        if len(v) != 2:
            raise ProblemFileError(f"{what}: interval needs [lo, hi]")
        lo, hi = _num(v[0], what), _num(v[1], what)
        if lo > hi:
            raise ProblemFileError(f"{what}: lo > hi")
        return (lo, hi)
    return _num(v, what)


def _parse_doc(doc: dict, source: str) -> ProblemSpec:
    try:
        n = int(doc["n"])
        m = int(doc["m"])
        fields = doc["fields"]
        f = list(fields["f"])
        g = [list(col) for col in fields["g"]]
        cost = doc["cost"]
    except KeyError as exc:
        raise ProblemFileError(f"{source}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(f"{source}: {exc}") from None
    if len(f) != n:
        raise ProblemFileError(f"{source}: f has {len(f)} entries, n = {n}")
    if len(g) != m or any(len(col) != n for col in g):
        raise ProblemFileError(f"{source}: g must be {m} columns of {n} expressions")
    try:
        vf = VectorFieldSet.from_strings(f, g)
        cs = CostSpec.from_string(cost, n)
    except E.ParseError as exc:
        raise ProblemFileError(f"{source}: expression {exc.source!r}: {exc}") from None
    except E.UndeclaredVariableError as exc:
        raise ProblemFileError(f"{source}: {exc}") from None

    cone_doc = doc.get("cone", {"kind": "full"})
    kind = cone_doc.get("kind", "full")
    try:
        if kind == "full":
            cone = ControlCone.full(m)
        elif kind == "orthant":
            cone = ControlCone.orthant(list(cone_doc["tags"]))
        elif kind == "generated":
            cone = ControlCone.generated(cone_doc["generators"])
        else:
            raise ProblemFileError(f"{source}: unknown cone kind {kind!r}")
    except (KeyError, ValueError) as exc:
        raise ProblemFileError(f"{source}: cone: {exc}") from None
    if cone.m != m:
        raise ProblemFileError(f"{source}: cone dimension {cone.m} differs from m = {m}")

    tdoc = doc.get("target", {})
    try:
        x1 = tdoc.get("x1", ["free"] * n)
        x2 = tdoc.get("x2", ["free"] * n)
        if len(x1) != n or len(x2) != n:
            raise ProblemFileError(f"{source}: target x1/x2 need {n} entries")
        hs = []
        for k, h in enumerate(tdoc.get("halfspaces", [])):
            a = [_num(v, f"halfspace {k} a") for v in h["a"]]
            hs.append((a, _num(h["b"], f"halfspace {k} b")))
        target = TargetSpec.from_parts(
            _coord(tdoc.get("t1", "free"), "target t1"),
            [_coord(v, f"target x1[{i}]") for i, v in enumerate(x1)],
            _coord(tdoc.get("t2", "free"), "target t2"),
            [_coord(v, f"target x2[{i}]") for i, v in enumerate(x2)],
            halfspaces=hs, epigraph_declared=bool(tdoc.get("epigraph", False)))
    except (KeyError, TypeError) as exc:
        raise ProblemFileError(f"{source}: target: {exc}") from None
    except ValueError as exc:
        raise ProblemFileError(f"{source}: target: {exc}") from None

    K = _num(doc.get("K", math.inf), "K")
    p = ProblemSpec(fields=vf, cone=cone, target=target, cost=cs, K=K,
                    name=str(doc.get("name", "")), description=str(doc.get("description", "")))
    rep = validate(p)
    if not rep.ok:
        raise ProblemFileError(f"{source}: invalid problem: " + "; ".join(rep.issues))
    return p


def loads_problem(text: str, source: str = "<string>") -> ProblemSpec:
    """Parse problem-file text."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFileError(f"{source}: {exc}") from None
    return _parse_doc(doc, source)


def load_problem(path) -> ProblemSpec:
    """Read and validate a problem file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"{path}: {exc.strerror or exc}") from None
    return loads_problem(text, str(path))


def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _coord_out(lo: float, hi: float):
    if lo == hi:
        return lo
    if math.isinf(lo) and math.isinf(hi):
        return "free"
    return [lo, hi]


def dumps_problem(p: ProblemSpec) -> str:
    """Serialize a problem in the file format read by :func:`loads_problem`."""
    n = p.n
    lines = []
    if p.name:
        lines.append(f"name = {_toml_value(p.name)}")
    if p.description:
        lines.append(f"description = {_toml_value(p.description)}")
    lines += [f"n = {n}", f"m = {p.m}", f"K = {_toml_value(float(p.K))}",
              f"cost = {_toml_value(E.to_string(p.cost.h))}", "", "[fields]",
              f"f = {_toml_value([E.to_string(e) for e in p.fields.f])}",
              f"g = {_toml_value([[E.to_string(e) for e in col] for col in p.fields.g])}",
              "", "[cone]", f"kind = {_toml_value(p.cone.kind)}"]
    if p.cone.kind == "orthant":
        lines.append(f"tags = {_toml_value(list(p.cone.tags))}")
    elif p.cone.kind == "generated":
        lines.append(f"generators = {_toml_value([list(g) for g in p.cone.generators])}")
    t = p.target
    c = [_coord_out(lo, hi) for lo, hi in zip(t.lo, t.hi)]
    lines += ["", "[target]", f"t1 = {_toml_value(c[0])}", f"x1 = {_toml_value(c[1:1 + n])}",
              f"t2 = {_toml_value(c[1 + n])}", f"x2 = {_toml_value(c[2 + n:])}",
              f"epigraph = {_toml_value(t.epigraph_declared)}"]
    if t.halfspaces:
        hs = [{"a": list(a), "b": b} for a, b in t.halfspaces]
        lines.append(f"halfspaces = {_toml_value(hs)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- multipliers


def load_multipliers_data(path_or_text, n: int) -> dict:
    """Raw multiplier data: ``lambda``, ``pi`` and ``terminal`` or ``path``."""
    src = str(path_or_text)
    if isinstance(path_or_text, Path) or "\n" not in src:
        try:
            src = Path(path_or_text).read_text(encoding="utf-8")
        except OSError as exc:
            raise ProblemFileError(f"{path_or_text}: {exc.strerror or exc}") from None
    try:
        doc = tomllib.loads(src)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFileError(f"multipliers: {exc}") from None
    try:
        out = {"lambda": _num(doc.get("lambda", 0.0), "lambda"),
               "pi": _num(doc.get("pi", 0.0), "pi")}
        if "path" in doc:
            P = np.asarray(doc["path"]["P"], dtype=float)
            s = np.asarray(doc["path"]["s"], dtype=float)
            if P.ndim != 2 or P.shape[1] != 1 + n or P.shape[0] != s.size:
                raise ProblemFileError(f"multipliers: path must be (N+1) x {1 + n}")
            out["s"], out["P"] = s, P
        elif "terminal" in doc:
            term = np.asarray(doc["terminal"], dtype=float)
            if term.shape != (1 + n,):
                raise ProblemFileError(f"multipliers: terminal must have {1 + n} entries")
            out["terminal"] = term
        else:
            raise ProblemFileError("multipliers: need a [path] table or a terminal covector")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ProblemFileError):
            raise
        raise ProblemFileError(f"multipliers: {exc}") from None
    return out


def dumps_multipliers(lam: float, pi: float, s=None, P=None, terminal=None, comment: str = "") -> str:
    lines = [f"# {line}" for line in comment.splitlines()] if comment else []
    lines += [f"lambda = {_toml_value(float(lam))}", f"pi = {_toml_value(float(pi))}"]
    if terminal is not None:
        lines.append(f"terminal = {_toml_value(list(map(float, terminal)))}")
    if P is not None:
        lines += ["", "[path]", f"s = {_toml_value(list(map(float, s)))}", "P = ["]
        lines += [f"  {_toml_value(list(map(float, row)))}," for row in P]
        lines.append("]")
    return "\n".join(lines) + "\n"
