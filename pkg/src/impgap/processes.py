"""Grid-sampled strict-sense and extended-sense processes, with CSV exchange.

An extended process lives on a parameter grid ``0 = s_0 < ... < s_N = S``
with per-interval constant controls ``(w0_k, w_k)``; a strict process lives
on a time grid ``t1 = tau_0 < ... < tau_M = t2`` with per-interval constant
control derivatives ``du_k``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ExtendedProcess", "StrictProcess", "read_extended_csv", "write_extended_csv",
           "read_strict_csv", "write_strict_csv"]


def _as2d(a, cols: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and cols == 1:
        a = a[:, None]
    return a


@dataclass(frozen=True, eq=False)
class ExtendedProcess:
    """Extended-sense process sampled on a strictly increasing grid.

    Attributes
    ----------
    s : ndarray, shape (N+1,)
    y0 : ndarray, shape (N+1,)
        Time component.
    y : ndarray, shape (N+1, n)
    nu : ndarray, shape (N+1,)
        Accumulated variation.
    w0 : ndarray, shape (N,)
    w : ndarray, shape (N, m)
    phi_init : ndarray, shape (m,)
        Value of the control path ``phi`` at ``s = 0``.
    """

    s: np.ndarray
    y0: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    w0: np.ndarray
    w: np.ndarray
    phi_init: np.ndarray = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        N = s.size - 1
        if N < 1:
            raise ValueError("an extended process needs at least one interval")
        if np.any(np.diff(s) <= 0):
            raise ValueError("grid must be strictly increasing")
        if s[0] != 0.0:
            raise ValueError("grid must start at s = 0")
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 2 or y.shape[0] != N + 1:
            raise ValueError("y must have shape (N+1, n)")
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] != N:
            raise ValueError("w must have shape (N, m)")
        for name, arr, size in (("y0", self.y0, N + 1), ("nu", self.nu, N + 1), ("w0", self.w0, N)):
            if np.asarray(arr).shape != (size,):
                raise ValueError(f"{name} must have length {size}")
        phi = np.zeros(w.shape[1]) if self.phi_init is None else np.asarray(self.phi_init, float)
        for name, val in (("s", s), ("y0", np.asarray(self.y0, float)), ("y", y),
                          ("nu", np.asarray(self.nu, float)), ("w0", np.asarray(self.w0, float)),
                          ("w", w), ("phi_init", phi)):
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    # -- shape
    @property
    def N(self) -> int:
        return self.s.size - 1

    @property
    def n(self) -> int:
        return self.y.shape[1]

    @property
    def m(self) -> int:
        return self.w.shape[1]

    @property
    def S(self) -> float:
        return float(self.s[-1])

    @property
    def ds(self) -> np.ndarray:
        return np.diff(self.s)

    @property
    def Z(self) -> np.ndarray:
        """Node states ``(y0, y)``, shape (N+1, 1+n)."""
        return np.column_stack([self.y0, self.y])

    @property
    def phi(self) -> np.ndarray:
        """Control path ``phi`` at the nodes."""
        inc = self.w * self.ds[:, None]
        return self.phi_init + np.vstack([np.zeros(self.m), np.cumsum(inc, axis=0)])

    @property
    def endpoint(self) -> np.ndarray:
        """``(y0(0), y(0), y0(S), y(S))``."""
        return np.concatenate(([self.y0[0]], self.y[0], [self.y0[-1]], self.y[-1]))

    @property
    def extended_endpoint(self) -> np.ndarray:
        """Endpoint followed by ``nu(S)``: the argument of the cost."""
        return np.concatenate((self.endpoint, [self.nu[-1]]))

    @property
    def is_strict(self) -> bool:
        return bool(np.all(self.w0 > 0))

    # -- checks
    def s_identity_error(self) -> float:
        """``|S - (y0(S) - y0(0) + nu(S))|``."""
        return abs(self.S - (self.y0[-1] - self.y0[0] + self.nu[-1]))

    def check(self, cone=None, tol: float = 1e-9) -> list[str]:
        """Invariant violations (empty when the process is well formed)."""
        issues = []
        if np.any(self.w0 < -tol):
            issues.append("negative w0")
        canon = np.abs(self.w0 + np.linalg.norm(self.w, axis=1) - 1.0)
        if canon.size and canon.max() > tol:
            issues.append(f"controls not canonical (max error {canon.max():.3g})")
        if abs(self.nu[0]) > tol:
            issues.append("nu(0) != 0")
        if np.any(np.diff(self.nu) < -tol):
            issues.append("nu decreasing")
        err = self.s_identity_error()
        if err > tol:
            issues.append(f"S identity violated by {err:.3g}")
        if cone is not None:
            for k, wk in enumerate(self.w):
                if not cone.contains(wk, tol):
                    issues.append(f"w outside the cone on interval {k}")
                    break
        return issues


@dataclass(frozen=True, eq=False)
class StrictProcess:
    """Strict-sense process sampled on a time grid.

    Attributes
    ----------
    t : ndarray, shape (M+1,)
    x : ndarray, shape (M+1, n)
    v : ndarray, shape (M+1,)
    u : ndarray, shape (M+1, m)
    du : ndarray, shape (M, m)
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    u: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        M = t.size - 1
        if M < 1:
            raise ValueError("a strict process needs at least one interval")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        du = _as2d(self.du, 1)
        u = _as2d(self.u, du.shape[1])
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[0] != M + 1:
            raise ValueError("x must have shape (M+1, n)")
        if du.shape[0] != M or u.shape != (M + 1, du.shape[1]):
            raise ValueError("u must be (M+1, m) and du (M, m)")
        if np.asarray(self.v).shape != (M + 1,):
            raise ValueError(f"v must have length {M + 1}")
        for name, val in (("t", t), ("x", x), ("v", np.asarray(self.v, float)), ("u", u), ("du", du)):
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def M(self) -> int:
        return self.t.size - 1

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.du.shape[1]

    @property
    def t1(self) -> float:
        return float(self.t[0])

    @property
    def t2(self) -> float:
        return float(self.t[-1])

    @property
    def endpoint(self) -> np.ndarray:
        return np.concatenate(([self.t1], self.x[0], [self.t2], self.x[-1]))

    @property
    def extended_endpoint(self) -> np.ndarray:
        return np.concatenate((self.endpoint, [self.v[-1]]))

    def check(self, cone=None, tol: float = 1e-9) -> list[str]:
        issues = []
        dt = np.diff(self.t)
        if abs(self.v[0]) > tol:
            issues.append("v(t1) != 0")
        dv = np.diff(self.v) - np.linalg.norm(self.du, axis=1) * dt
        if np.abs(dv).max(initial=0.0) > tol * max(1.0, float(np.abs(self.v).max())):
            issues.append("v increments do not match |du|")
        du_err = np.diff(self.u, axis=0) - self.du * dt[:, None]
        if np.abs(du_err).max(initial=0.0) > tol * max(1.0, float(np.abs(self.u).max())):
            issues.append("u is not the integral of du")
        if cone is not None:
            for k, d in enumerate(self.du):
                if not cone.contains(d, tol):
                    issues.append(f"du outside the cone on interval {k}")
                    break
        return issues


# ---------------------------------------------------------------- CSV


def _fmt(v: float) -> str:
    return repr(float(v))


def write_extended_csv(ep: ExtendedProcess, path=None) -> str:
    """Write ``s, y0, y_1..y_n, nu, w0, w_1..w_m`` rows; return the text."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["s", "y0"] + [f"y_{i}" for i in range(1, ep.n + 1)] + ["nu", "w0"]
                + [f"w_{j}" for j in range(1, ep.m + 1)])
    for k in range(ep.N + 1):
        row = [_fmt(ep.s[k]), _fmt(ep.y0[k])] + [_fmt(v) for v in ep.y[k]] + [_fmt(ep.nu[k])]
        if k < ep.N:
            row += [_fmt(ep.w0[k])] + [_fmt(v) for v in ep.w[k]]
        else:
            row += [""] * (1 + ep.m)
        wr.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _read_rows(source) -> tuple[list[str], list[list[str]]]:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 3:
        raise ValueError("trajectory CSV needs a header and at least two nodes")
    return [h.strip() for h in rows[0]], rows[1:]


def read_extended_csv(source) -> ExtendedProcess:
    """Read a trajectory written by :func:`write_extended_csv` (path or text)."""
    header, rows = _read_rows(source)
    n = sum(1 for h in header if h.startswith("y_"))
    m = sum(1 for h in header if h.startswith("w_"))
    expected = ["s", "y0"] + [f"y_{i}" for i in range(1, n + 1)] + ["nu", "w0"] + \
        [f"w_{j}" for j in range(1, m + 1)]
    if header != expected:
        raise ValueError(f"unexpected CSV header {header}")
    nodes = np.array([[float(v) for v in r[:3 + n]] for r in rows])
    ctrl = np.array([[float(v) for v in r[3 + n:]] for r in rows[:-1]])
    if any(v.strip() for v in rows[-1][3 + n:]):
        raise ValueError("final row must leave the control columns empty")
    return ExtendedProcess(s=nodes[:, 0], y0=nodes[:, 1], y=nodes[:, 2:2 + n], nu=nodes[:, 2 + n],
                           w0=ctrl[:, 0], w=ctrl[:, 1:])


def write_strict_csv(sp: StrictProcess, path=None) -> str:
    """Write ``t, x_1..x_n, v, u_1..u_m, du_1..du_m`` rows; return the text."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t"] + [f"x_{i}" for i in range(1, sp.n + 1)] + ["v"]
                + [f"u_{j}" for j in range(1, sp.m + 1)] + [f"du_{j}" for j in range(1, sp.m + 1)])
    for k in range(sp.M + 1):
        row = [_fmt(sp.t[k])] + [_fmt(v) for v in sp.x[k]] + [_fmt(sp.v[k])] + \
            [_fmt(v) for v in sp.u[k]]
        row += [_fmt(v) for v in sp.du[k]] if k < sp.M else [""] * sp.m
        wr.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_strict_csv(source) -> StrictProcess:
    header, rows = _read_rows(source)
    n = sum(1 for h in header if h.startswith("x_"))
    m = sum(1 for h in header if h.startswith("du_"))
    nodes = np.array([[float(v) for v in r[:2 + n + m]] for r in rows])
    du = np.array([[float(v) for v in r[2 + n + m:]] for r in rows[:-1]])
    return StrictProcess(t=nodes[:, 0], x=nodes[:, 1:1 + n], v=nodes[:, 1 + n],
                         u=nodes[:, 2 + n:2 + n + m], du=du)

