"""Compiled numerical kernels.

Everything here works on plain arrays.  The field tape evaluates, in order,
``f_1..f_n`` followed by ``g_{j,i}`` (column ``j``, component ``i``) at the
environment ``(t, x_1..x_n)``; the Jacobian tape evaluates the derivative of
each of those ``n + m n`` expressions with respect to ``t, x_1..x_n``.

The extended state is ``z = (y0, y)`` and on an interval with constant
control ``(a, b) = (w0, w)`` the right-hand side is
``F(z) = (a, a f(z) + sum_j b_j g_j(z))``.

Domain errors inside a tape produce NaN; callers check finiteness.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_BOX = 2


@njit(cache=True)
def eval_tape(code, arg, off, env, out, stack):
    ne = off.shape[0] - 1
    for e in range(ne):
        sp = 0
        for i in range(off[e], off[e + 1]):
            op = code[i]
            if op == 0:
                stack[sp] = arg[i]
                sp += 1
            elif op == 1:
                stack[sp] = env[int(arg[i])]
                sp += 1
            elif op == 2:
                stack[sp - 1] = -stack[sp - 1]
            elif op == 3:
                sp -= 1
                stack[sp - 1] = stack[sp - 1] + stack[sp]
            elif op == 4:
                sp -= 1
                stack[sp - 1] = stack[sp - 1] - stack[sp]
            elif op == 5:
                sp -= 1
                stack[sp - 1] = stack[sp - 1] * stack[sp]
            elif op == 6:
                sp -= 1
                d = stack[sp]
                if d == 0.0:
                    stack[sp - 1] = np.nan
                else:
                    stack[sp - 1] = stack[sp - 1] / d
            elif op == 7:
                k = int(arg[i])
                x = stack[sp - 1]
                if x == 0.0 and k < 0:
                    stack[sp - 1] = np.nan
                else:
                    stack[sp - 1] = x ** k
            elif op == 8:
                stack[sp - 1] = math.sin(stack[sp - 1])
            elif op == 9:
                stack[sp - 1] = math.cos(stack[sp - 1])
            elif op == 10:
                stack[sp - 1] = math.exp(stack[sp - 1])
            elif op == 11:
                x = stack[sp - 1]
                stack[sp - 1] = math.log(x) if x > 0.0 else np.nan
            elif op == 12:
                stack[sp - 1] = abs(stack[sp - 1])
            else:
                x = stack[sp - 1]
                if x > 0.0:
                    stack[sp - 1] = 1.0
                elif x < 0.0:
                    stack[sp - 1] = -1.0
                else:
                    stack[sp - 1] = np.nan
        out[e] = stack[0]


@njit(cache=True)
def _rhs(code, arg, off, n, m, z, a, b, fv, stack, dz):
    eval_tape(code, arg, off, z, fv, stack)
    dz[0] = a
    for i in range(n):
        acc = a * fv[i]
        for j in range(m):
            acc += b[j] * fv[n + j * n + i]
        dz[1 + i] = acc


@njit(cache=True)
def jac_eval(jcode, jarg, joff, jidx, jconst, z, jv, jtmp, stack):
    """Dense field Jacobian from constant entries plus a tape for the rest."""
    for e in range(jconst.shape[0]):
        jv[e] = jconst[e]
    eval_tape(jcode, jarg, joff, z, jtmp, stack)
    for e in range(jidx.shape[0]):
        jv[jidx[e]] = jtmp[e]


@njit(cache=True)
def _jac_rows(jcode, jarg, joff, jidx, jconst, n, m, z, a, b, jv, jtmp, stack, A):
    """Fill ``A[1+i, c] = d F_{1+i} / d z_c`` (row 0 of F is constant)."""
    jac_eval(jcode, jarg, joff, jidx, jconst, z, jv, jtmp, stack)
    d = n + 1
    for i in range(n):
        for c in range(d):
            acc = a * jv[i * d + c]
            for j in range(m):
                acc += b[j] * jv[(n + j * n + i) * d + c]
            A[1 + i, c] = acc


@njit(cache=True)
def _store(stages, k, i, r, z, fv, d):
    for c in range(d):
        stages[k, i, r, c] = z[c]
    for c in range(fv.shape[0]):
        stages[k, i, r, d + c] = fv[c]


@njit(cache=True)
def forward(code, arg, off, stack_size, n, m, z0, a, b, ds, sub, box, Z, stages):
    """Fixed-step RK4 over piecewise constant controls.

    ``Z`` (N+1, 1+n) receives node states.  If ``stages.shape[0] == N`` the
    field values at the stage points of every substep are stored in
    ``stages[k, i, r]`` (shape ``(N, sub, 4, 1 + n + n + m n)``) as ``(z, f, g)`` for the reverse sweep.  Returns
    ``(status, interval)``.
    """
    N = a.shape[0]
    d = n + 1
    keep = stages.shape[0] == N
    fv = np.empty(n + m * n)
    stack = np.empty(stack_size)
    z = z0.copy()
    zt = np.empty(d)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    for c in range(d):
        Z[0, c] = z[c]
    for k in range(N):
        h = ds[k] / sub
        bk = b[k]
        for i in range(sub):
            _rhs(code, arg, off, n, m, z, a[k], bk, fv, stack, k1)
            if keep:
                _store(stages, k, i, 0, z, fv, d)
            for c in range(d):
                zt[c] = z[c] + 0.5 * h * k1[c]
            _rhs(code, arg, off, n, m, zt, a[k], bk, fv, stack, k2)
            if keep:
                _store(stages, k, i, 1, zt, fv, d)
            for c in range(d):
                zt[c] = z[c] + 0.5 * h * k2[c]
            _rhs(code, arg, off, n, m, zt, a[k], bk, fv, stack, k3)
            if keep:
                _store(stages, k, i, 2, zt, fv, d)
            for c in range(d):
                zt[c] = z[c] + h * k3[c]
            _rhs(code, arg, off, n, m, zt, a[k], bk, fv, stack, k4)
            if keep:
                _store(stages, k, i, 3, zt, fv, d)
            for c in range(d):
                z[c] = z[c] + h * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0
        nrm = 0.0
        for c in range(d):
            if not math.isfinite(z[c]):
                return STATUS_NONFINITE, k
            if c > 0:
                nrm += z[c] * z[c]
        if math.sqrt(nrm) > box:
            return STATUS_BOX, k
        for c in range(d):
            Z[k + 1, c] = z[c]
    return STATUS_OK, N


@njit(cache=True)
def forward_batch(code, arg, off, stack_size, n, m, z0, a, b, ds, sub, box, Zend, status):
    """Endpoint states for a batch of control sequences ``a[q], b[q], ds[q]``."""
    Q = a.shape[0]
    N = a.shape[1]
    Z = np.empty((N + 1, n + 1))
    nostage = np.empty((0, 1, 4, n + 1 + n + m * n))
    for q in range(Q):
        st, _ = forward(code, arg, off, stack_size, n, m, z0[q], a[q], b[q], ds[q],
                        sub, box, Z, nostage)
        status[q] = st
        for c in range(n + 1):
            Zend[q, c] = Z[N, c]


@njit(cache=True)
def _jt_vec(jv, n, m, a, b, gbar, out):
    """``out = J^T gbar`` where ``J = dF/dz`` (row 0 of J is zero)."""
    d = n + 1
    for c in range(d):
        acc = 0.0
        for i in range(n):
            gi = gbar[1 + i]
            if gi == 0.0:
                continue
            col = a * jv[i * d + c]
            for j in range(m):
                col += b[j] * jv[(n + j * n + i) * d + c]
            acc += gi * col
        out[c] = acc


@njit(cache=True)
def _accumulate_control(fv, n, m, gbar, k, abar, bbar):
    acc = gbar[0]
    for i in range(n):
        acc += fv[i] * gbar[1 + i]
    abar[k] += acc
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += fv[n + j * n + i] * gbar[1 + i]
        bbar[k, j] += s


@njit(cache=True)
def reverse(jcode, jarg, joff, jidx, jconst, stack_size, n, m, a, b, ds, sub,
            stages, zbar_nodes, abar, bbar, dsbar):
    """Exact vector-Jacobian product of :func:`forward`.

    ``stages`` must come from a :func:`forward` call with the same controls.
    ``zbar_nodes[k]`` is the cotangent of the node state ``Z[k]``.  Adds the
    gradient with respect to ``a``, ``b`` and ``ds`` into the output arrays
    and returns the cotangent of the initial state.
    """
    N = a.shape[0]
    d = n + 1
    nf = n + m * n
    jv = np.empty(nf * d)
    jtmp = np.empty(max(jidx.shape[0], 1))
    stack = np.empty(stack_size)
    lam = zbar_nodes[N].copy()
    K = np.empty((4, d))
    g = np.empty((4, d))
    tmp = np.empty(d)
    zbar = np.empty(d)
    for k in range(N - 1, -1, -1):
        h = ds[k] / sub
        ak = a[k]
        bk = b[k]
        for i in range(sub - 1, -1, -1):
            st = stages[k, i]
            for r in range(4):
                K[r, 0] = ak
                for q in range(n):
                    acc = ak * st[r, d + q]
                    for j in range(m):
                        acc += bk[j] * st[r, d + n + j * n + q]
                    K[r, 1 + q] = acc
            hbar = 0.0
            for c in range(d):
                hbar += (K[0, c] + 2.0 * K[1, c] + 2.0 * K[2, c] + K[3, c]) * lam[c]
                g[0, c] = h / 6.0 * lam[c]
                g[1, c] = h / 3.0 * lam[c]
                g[2, c] = h / 3.0 * lam[c]
                g[3, c] = h / 6.0 * lam[c]
                zbar[c] = lam[c]
            hbar /= 6.0
            # stage r input is z + coef * h * K[r-1]
            for r in range(3, -1, -1):
                fv = st[r, d:]
                _accumulate_control(fv, n, m, g[r], k, abar, bbar)
                jac_eval(jcode, jarg, joff, jidx, jconst, st[r, :d], jv, jtmp, stack)
                _jt_vec(jv, n, m, ak, bk, g[r], tmp)
                for c in range(d):
                    zbar[c] += tmp[c]
                if r > 0:
                    coef = 1.0 if r == 3 else 0.5
                    for c in range(d):
                        g[r - 1, c] += coef * h * tmp[c]
                        hbar += coef * K[r - 1, c] * tmp[c]
            for c in range(d):
                lam[c] = zbar[c]
            dsbar[k] += hbar / sub
        for c in range(d):
            lam[c] += zbar_nodes[k, c]
    return lam


@njit(cache=True)
def _adj_step(P, A1, A2, A3, h, out, tmp1, tmp2):
    """One backward RK4 step of ``dP/ds = -P A``; ``A1`` at the right end."""
    q, d = P.shape
    for row in range(q):
        for c in range(d):
            acc = 0.0
            for r in range(d):
                acc += P[row, r] * A1[r, c]
            tmp1[0, c] = acc  # k1
        for c in range(d):
            tmp2[0, c] = P[row, c] + 0.5 * h * tmp1[0, c]
        for c in range(d):
            acc = 0.0
            for r in range(d):
                acc += tmp2[0, r] * A2[r, c]
            tmp1[1, c] = acc  # k2
        for c in range(d):
            tmp2[0, c] = P[row, c] + 0.5 * h * tmp1[1, c]
        for c in range(d):
            acc = 0.0
            for r in range(d):
                acc += tmp2[0, r] * A2[r, c]
            tmp1[2, c] = acc  # k3
        for c in range(d):
            tmp2[0, c] = P[row, c] + h * tmp1[2, c]
        for c in range(d):
            acc = 0.0
            for r in range(d):
                acc += tmp2[0, r] * A3[r, c]
            tmp1[3, c] = acc  # k4
        for c in range(d):
            out[row, c] = P[row, c] + h * (tmp1[0, c] + 2.0 * tmp1[1, c]
                                           + 2.0 * tmp1[2, c] + tmp1[3, c]) / 6.0


@njit(cache=True)
def _hermite(z0, z1, F0, F1, h, theta, out):
    t = theta
    h00 = 2 * t ** 3 - 3 * t ** 2 + 1
    h10 = t ** 3 - 2 * t ** 2 + t
    h01 = -2 * t ** 3 + 3 * t ** 2
    h11 = t ** 3 - t ** 2
    for c in range(z0.shape[0]):
        out[c] = h00 * z0[c] + h10 * h * F0[c] + h01 * z1[c] + h11 * h * F1[c]


@njit(cache=True)
def adjoint(code, arg, off, jcode, jarg, joff, jidx, jconst, stack_size, n, m, a, b,
            ds, sub, Z, PT, Pn, Pm, Zm):
    """Backward RK4 for ``dP/ds = -P dF/dz`` along a given process.

    Within each interval the state is recomputed on the substep grid from the
    node value ``Z[k]`` and interpolated by cubic Hermite polynomials at the
    stage points.  ``PT`` (q, 1+n) holds terminal covectors.  Fills node
    values ``Pn`` (q, N+1, 1+n), interval-midpoint values ``Pm`` (q, N, 1+n)
    and midpoint states ``Zm`` (N, 1+n).
    """
    N = a.shape[0]
    d = n + 1
    q = PT.shape[0]
    fv = np.empty(n + m * n)
    jv = np.empty((n + m * n) * d)
    jtmp = np.empty(max(jidx.shape[0], 1))
    stack = np.empty(stack_size)
    zs = np.empty((sub + 1, d))
    Fs = np.empty((sub + 1, d))
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    zt = np.empty(d)
    zmid = np.empty(d)
    zq = np.empty(d)
    A1 = np.zeros((d, d))
    A2 = np.zeros((d, d))
    A3 = np.zeros((d, d))
    Aq = np.zeros((d, d))
    tmp1 = np.empty((4, d))
    tmp2 = np.empty((1, d))
    P = PT.copy()
    Pnew = np.empty((q, d))
    Phalf = np.empty((q, d))
    for r in range(q):
        for c in range(d):
            Pn[r, N, c] = P[r, c]
    half = sub // 2
    odd = sub % 2 == 1
    for k in range(N - 1, -1, -1):
        h = ds[k] / sub
        ak = a[k]
        bk = b[k]
        for c in range(d):
            zs[0, c] = Z[k, c]
        for i in range(sub):
            z = zs[i]
            _rhs(code, arg, off, n, m, z, ak, bk, fv, stack, k1)
            for c in range(d):
                zt[c] = z[c] + 0.5 * h * k1[c]
            _rhs(code, arg, off, n, m, zt, ak, bk, fv, stack, k2)
            for c in range(d):
                zt[c] = z[c] + 0.5 * h * k2[c]
            _rhs(code, arg, off, n, m, zt, ak, bk, fv, stack, k3)
            for c in range(d):
                zt[c] = z[c] + h * k3[c]
            _rhs(code, arg, off, n, m, zt, ak, bk, fv, stack, k4)
            for c in range(d):
                zs[i + 1, c] = z[c] + h * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0
        for i in range(sub + 1):
            _rhs(code, arg, off, n, m, zs[i], ak, bk, fv, stack, k1)
            for c in range(d):
                Fs[i, c] = k1[c]
        if not odd:
            for c in range(d):
                Zm[k, c] = zs[half, c]
        else:
            _hermite(zs[half], zs[half + 1], Fs[half], Fs[half + 1], h, 0.5, zmid)
            for c in range(d):
                Zm[k, c] = zmid[c]
        for i in range(sub - 1, -1, -1):
            _jac_rows(jcode, jarg, joff, jidx, jconst, n, m, zs[i + 1], ak, bk, jv, jtmp, stack, A1)
            _hermite(zs[i], zs[i + 1], Fs[i], Fs[i + 1], h, 0.5, zmid)
            _jac_rows(jcode, jarg, joff, jidx, jconst, n, m, zmid, ak, bk, jv, jtmp, stack, A2)
            _jac_rows(jcode, jarg, joff, jidx, jconst, n, m, zs[i], ak, bk, jv, jtmp, stack, A3)
            if odd and i == half:
                # half step from the right end of this substep to the midpoint
                _hermite(zs[i], zs[i + 1], Fs[i], Fs[i + 1], h, 0.75, zq)
                _jac_rows(jcode, jarg, joff, jidx, jconst, n, m, zq, ak, bk, jv, jtmp, stack, Aq)
                _adj_step(P, A1, Aq, A2, 0.5 * h, Phalf, tmp1, tmp2)
                for r in range(q):
                    for c in range(d):
                        Pm[r, k, c] = Phalf[r, c]
            _adj_step(P, A1, A2, A3, h, Pnew, tmp1, tmp2)
            for r in range(q):
                for c in range(d):
                    P[r, c] = Pnew[r, c]
            if (not odd) and i == half:
                for r in range(q):
                    for c in range(d):
                        Pm[r, k, c] = P[r, c]
        for r in range(q):
            for c in range(d):
                Pn[r, k, c] = P[r, c]
