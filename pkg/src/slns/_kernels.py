"""Fused per-step kernel for 2-d backward-trajectory ensembles.

One pass over the state updates positions, detects wall crossings, applies
the Brownian-bridge absorption test and advances the Jacobian. The kernel
is compiled without fastmath and runs single-threaded, so results are
bitwise reproducible and independent of how points are chunked over worker
processes. Three dimensions use the plain numpy path in :mod:`slns.flow`.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def step_2d(X, G, alive, sigma, exit_x, exited, status, lam_out, xn_out,
            Z, U, tab_hi, tab_lo, has_field, need_jac,
            lo0, lo1, h0, h1, n0, n1, per0, per1,
            w0lo, w0hi, wall0, w1lo, w1hi, wall1,
            dt, s_hi, sq, nudt, use_bridge):
    m = X.shape[0]
    for i in range(m):
        status[i] = 0
        lam_out[i] = 1.0
        if not alive[i]:
            xn_out[i, 0] = X[i, 0]
            xn_out[i, 1] = X[i, 1]
            continue
        x0 = X[i, 0]
        x1 = X[i, 1]

        u0 = 0.0
        u1 = 0.0
        m00 = 0.0
        m01 = 0.0
        m10 = 0.0
        m11 = 0.0
        if has_field:
            # bilinear stencil at (x0, x1)
            f0 = (x0 - lo0) / h0
            if per0:
                f0 = f0 - np.floor(f0 / n0) * n0
                i0a = int(np.floor(f0))
                w0 = f0 - i0a
                if i0a >= n0:
                    i0a -= n0
                i0b = i0a + 1
                if i0b >= n0:
                    i0b -= n0
            else:
                i0a = int(np.floor(f0))
                if i0a < 0:
                    i0a = 0
                if i0a > n0 - 2:
                    i0a = n0 - 2
                w0 = f0 - i0a
                if w0 < 0.0:
                    w0 = 0.0
                if w0 > 1.0:
                    w0 = 1.0
                i0b = i0a + 1
            f1 = (x1 - lo1) / h1
            if per1:
                f1 = f1 - np.floor(f1 / n1) * n1
                i1a = int(np.floor(f1))
                w1 = f1 - i1a
                if i1a >= n1:
                    i1a -= n1
                i1b = i1a + 1
                if i1b >= n1:
                    i1b -= n1
            else:
                i1a = int(np.floor(f1))
                if i1a < 0:
                    i1a = 0
                if i1a > n1 - 2:
                    i1a = n1 - 2
                w1 = f1 - i1a
                if w1 < 0.0:
                    w1 = 0.0
                if w1 > 1.0:
                    w1 = 1.0
                i1b = i1a + 1
            caa = i0a * n1 + i1a
            cab = i0a * n1 + i1b
            cba = i0b * n1 + i1a
            cbb = i0b * n1 + i1b
            waa = (1.0 - w0) * (1.0 - w1)
            wab = (1.0 - w0) * w1
            wba = w0 * (1.0 - w1)
            wbb = w0 * w1
            u0 = (waa * tab_hi[caa, 0] + wab * tab_hi[cab, 0]
                  + wba * tab_hi[cba, 0] + wbb * tab_hi[cbb, 0])
            u1 = (waa * tab_hi[caa, 1] + wab * tab_hi[cab, 1]
                  + wba * tab_hi[cba, 1] + wbb * tab_hi[cbb, 1])
            if need_jac:
                m00 = (waa * tab_hi[caa, 2] + wab * tab_hi[cab, 2]
                       + wba * tab_hi[cba, 2] + wbb * tab_hi[cbb, 2])
                m01 = (waa * tab_hi[caa, 3] + wab * tab_hi[cab, 3]
                       + wba * tab_hi[cba, 3] + wbb * tab_hi[cbb, 3])
                m10 = (waa * tab_hi[caa, 4] + wab * tab_hi[cab, 4]
                       + wba * tab_hi[cba, 4] + wbb * tab_hi[cbb, 4])
                m11 = (waa * tab_hi[caa, 5] + wab * tab_hi[cab, 5]
                       + wba * tab_hi[cba, 5] + wbb * tab_hi[cbb, 5])

        nx0 = x0 - dt * u0 - sq * Z[i, 0]
        nx1 = x1 - dt * u1 - sq * Z[i, 1]
        xn_out[i, 0] = nx0
        xn_out[i, 1] = nx1

        # first wall crossing of the straight step
        lam = 2.0
        ax = -1
        wallc = 0.0
        if wall0:
            db = nx0 - x0
            if db != 0.0:
                if nx0 <= w0lo:
                    lm = (w0lo - x0) / db
                    if 0.0 < lm <= 1.0 and lm < lam:
                        lam = lm
                        ax = 0
                        wallc = w0lo
                if nx0 >= w0hi:
                    lm = (w0hi - x0) / db
                    if 0.0 < lm <= 1.0 and lm < lam:
                        lam = lm
                        ax = 0
                        wallc = w0hi
        if wall1:
            db = nx1 - x1
            if db != 0.0:
                if nx1 <= w1lo:
                    lm = (w1lo - x1) / db
                    if 0.0 < lm <= 1.0 and lm < lam:
                        lam = lm
                        ax = 1
                        wallc = w1lo
                if nx1 >= w1hi:
                    lm = (w1hi - x1) / db
                    if 0.0 < lm <= 1.0 and lm < lam:
                        lam = lm
                        ax = 1
                        wallc = w1hi
        hit = lam <= 1.0

        killed = False
        kax = -1
        kwall = 0.0
        if (not hit) and use_bridge and (wall0 or wall1):
            surv = 1.0
            pbest = 0.0
            if wall0:
                d0 = x0 - w0lo
                d1 = nx0 - w0lo
                p = np.exp(-d0 * d1 / nudt)
                surv *= 1.0 - p
                if p > pbest:
                    pbest = p
                    kax = 0
                    kwall = w0lo
                d0 = w0hi - x0
                d1 = w0hi - nx0
                p = np.exp(-d0 * d1 / nudt)
                surv *= 1.0 - p
                if p > pbest:
                    pbest = p
                    kax = 0
                    kwall = w0hi
            if wall1:
                d0 = x1 - w1lo
                d1 = nx1 - w1lo
                p = np.exp(-d0 * d1 / nudt)
                surv *= 1.0 - p
                if p > pbest:
                    pbest = p
                    kax = 1
                    kwall = w1lo
                d0 = w1hi - x1
                d1 = w1hi - nx1
                p = np.exp(-d0 * d1 / nudt)
                surv *= 1.0 - p
                if p > pbest:
                    pbest = p
                    kax = 1
                    kwall = w1hi
            if U[i] >= surv:
                killed = True

        if need_jac:
            g00 = G[i, 0, 0]
            g01 = G[i, 0, 1]
            g10 = G[i, 1, 0]
            g11 = G[i, 1, 1]
            mg00 = m00 * g00 + m01 * g10
            mg01 = m00 * g01 + m01 * g11
            mg10 = m10 * g00 + m11 * g10
            mg11 = m10 * g01 + m11 * g11
            if hit or killed:
                frac = lam if hit else 0.5
                G[i, 0, 0] = g00 - frac * dt * mg00
                G[i, 0, 1] = g01 - frac * dt * mg01
                G[i, 1, 0] = g10 - frac * dt * mg10
                G[i, 1, 1] = g11 - frac * dt * mg11
            else:
                l00 = 0.0
                l01 = 0.0
                l10 = 0.0
                l11 = 0.0
                if has_field:
                    f0 = (nx0 - lo0) / h0
                    if per0:
                        f0 = f0 - np.floor(f0 / n0) * n0
                        i0a = int(np.floor(f0))
                        w0 = f0 - i0a
                        if i0a >= n0:
                            i0a -= n0
                        i0b = i0a + 1
                        if i0b >= n0:
                            i0b -= n0
                    else:
                        i0a = int(np.floor(f0))
                        if i0a < 0:
                            i0a = 0
                        if i0a > n0 - 2:
                            i0a = n0 - 2
                        w0 = f0 - i0a
                        if w0 < 0.0:
                            w0 = 0.0
                        if w0 > 1.0:
                            w0 = 1.0
                        i0b = i0a + 1
                    f1 = (nx1 - lo1) / h1
                    if per1:
                        f1 = f1 - np.floor(f1 / n1) * n1
                        i1a = int(np.floor(f1))
                        w1 = f1 - i1a
                        if i1a >= n1:
                            i1a -= n1
                        i1b = i1a + 1
                        if i1b >= n1:
                            i1b -= n1
                    else:
                        i1a = int(np.floor(f1))
                        if i1a < 0:
                            i1a = 0
                        if i1a > n1 - 2:
                            i1a = n1 - 2
                        w1 = f1 - i1a
                        if w1 < 0.0:
                            w1 = 0.0
                        if w1 > 1.0:
                            w1 = 1.0
                        i1b = i1a + 1
                    caa = i0a * n1 + i1a
                    cab = i0a * n1 + i1b
                    cba = i0b * n1 + i1a
                    cbb = i0b * n1 + i1b
                    waa = (1.0 - w0) * (1.0 - w1)
                    wab = (1.0 - w0) * w1
                    wba = w0 * (1.0 - w1)
                    wbb = w0 * w1
                    l00 = (waa * tab_lo[caa, 2] + wab * tab_lo[cab, 2]
                           + wba * tab_lo[cba, 2] + wbb * tab_lo[cbb, 2])
                    l01 = (waa * tab_lo[caa, 3] + wab * tab_lo[cab, 3]
                           + wba * tab_lo[cba, 3] + wbb * tab_lo[cbb, 3])
                    l10 = (waa * tab_lo[caa, 4] + wab * tab_lo[cab, 4]
                           + wba * tab_lo[cba, 4] + wbb * tab_lo[cbb, 4])
                    l11 = (waa * tab_lo[caa, 5] + wab * tab_lo[cab, 5]
                           + wba * tab_lo[cba, 5] + wbb * tab_lo[cbb, 5])
                mh00 = 0.5 * (m00 + l00)
                mh01 = 0.5 * (m01 + l01)
                mh10 = 0.5 * (m10 + l10)
                mh11 = 0.5 * (m11 + l11)
                h00 = g00 - 0.5 * dt * mg00
                h01 = g01 - 0.5 * dt * mg01
                h10 = g10 - 0.5 * dt * mg10
                h11 = g11 - 0.5 * dt * mg11
                G[i, 0, 0] = g00 - dt * (mh00 * h00 + mh01 * h10)
                G[i, 0, 1] = g01 - dt * (mh00 * h01 + mh01 * h11)
                G[i, 1, 0] = g10 - dt * (mh10 * h00 + mh11 * h10)
                G[i, 1, 1] = g11 - dt * (mh10 * h01 + mh11 * h11)

        if hit:
            ex0 = x0 + lam * (nx0 - x0)
            ex1 = x1 + lam * (nx1 - x1)
            if ax == 0:
                ex0 = wallc
            else:
                ex1 = wallc
            exit_x[i, 0] = ex0
            exit_x[i, 1] = ex1
            sigma[i] = s_hi - lam * dt
            lam_out[i] = lam
            status[i] = 1
            exited[i] = True
            alive[i] = False
        elif killed:
            ex0 = 0.5 * (x0 + nx0)
            ex1 = 0.5 * (x1 + nx1)
            if kax == 0:
                ex0 = kwall
            else:
                ex1 = kwall
            exit_x[i, 0] = ex0
            exit_x[i, 1] = ex1
            sigma[i] = s_hi - 0.5 * dt
            lam_out[i] = 0.5
            status[i] = 2
            exited[i] = True
            alive[i] = False
        else:
            X[i, 0] = nx0
            X[i, 1] = nx1
