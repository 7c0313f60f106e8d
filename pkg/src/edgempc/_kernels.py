"""Compiled rollout / cost / adjoint kernels for the MPC solver.

``mp`` is the flat model tuple from ``ModelParams.as_tuple()``:
(g, Ax, Ay, Az, K_roll, K_pitch, tau_roll, tau_pitch).
"""
import math

import numpy as np
from numba import njit

NX = 8
NU = 3


@njit(cache=True, nogil=True)
def _f(x, u, mp, out):
    g, ax, ay, az, kr, kp, tr, tp = mp
    roll = x[6]
    pitch = x[7]
    cr = math.cos(roll)
    t = u[0]
    out[0] = x[3]
    out[1] = x[4]
    out[2] = x[5]
    out[3] = t * math.sin(pitch) * cr - ax * x[3]
    out[4] = -t * math.sin(roll) - ay * x[4]
    out[5] = t * math.cos(pitch) * cr - g - az * x[5]
    out[6] = (kr * u[1] - roll) / tr
    out[7] = (kp * u[2] - pitch) / tp


@njit(cache=True, nogil=True)
def rollout(x0, U, dt, mp):
    """Euler rollout; row 0 is x0, row j is x_{k+j|k}."""
    n = U.shape[0]
    X = np.empty((n + 1, NX))
    X[0] = x0
    d = np.empty(NX)
    for j in range(n):
        _f(X[j], U[j], mp, d)
        for i in range(NX):
            X[j + 1, i] = X[j, i] + dt * d[i]
    return X


@njit(cache=True, nogil=True)
def _quad(M, e):
    s = 0.0
    n = e.shape[0]
    for i in range(n):
        mi = 0.0
        for k in range(n):
            mi += M[i, k] * e[k]
        s += e[i] * mi
    return s


@njit(cache=True, nogil=True)
def cost_from_rollout(X, U, Xref, u_prev, Qx, Qu, Qdu, ud):
    n = U.shape[0]
    ex = np.empty(NX)
    eu = np.empty(NU)
    du = np.empty(NU)
    J = 0.0
    for j in range(n):
        for i in range(NX):
            ex[i] = Xref[j, i] - X[j + 1, i]
        for i in range(NU):
            eu[i] = ud[i] - U[j, i]
            if j == 0:
                du[i] = U[j, i] - u_prev[i]
            else:
                du[i] = U[j, i] - U[j - 1, i]
        J += _quad(Qx, ex) + _quad(Qu, eu) + _quad(Qdu, du)
    return J


@njit(cache=True, nogil=True)
def cost(x0, U, Xref, u_prev, dt, mp, Qx, Qu, Qdu, ud):
    X = rollout(x0, U, dt, mp)
    return cost_from_rollout(X, U, Xref, u_prev, Qx, Qu, Qdu, ud)


@njit(cache=True, nogil=True)
def cost_and_gradient(x0, U, Xref, u_prev, dt, mp, Qx, Qu, Qdu, ud):
    """Cost and its exact gradient w.r.t. U via a discrete adjoint sweep."""
    g, ax, ay, az, kr, kp, tr, tp = mp
    n = U.shape[0]
    X = rollout(x0, U, dt, mp)
    J = cost_from_rollout(X, U, Xref, u_prev, Qx, Qu, Qdu, ud)
    G = np.zeros((n, NU))

    # input and rate terms
    for j in range(n):
        for i in range(NU):
            s = 0.0
            for k in range(NU):
                s += Qu[i, k] * (U[j, k] - ud[k])
            G[j, i] += 2.0 * s
        for i in range(NU):
            s = 0.0
            for k in range(NU):
                if j == 0:
                    s += Qdu[i, k] * (U[j, k] - u_prev[k])
                else:
                    s += Qdu[i, k] * (U[j, k] - U[j - 1, k])
            G[j, i] += 2.0 * s
            if j > 0:
                G[j - 1, i] -= 2.0 * s

    # lam holds dJ/dX_{j+1} including all downstream effects
    lam = np.zeros(NX)
    nxt = np.empty(NX)
    for j in range(n - 1, -1, -1):
        for i in range(NX):
            s = 0.0
            for k in range(NX):
                s += Qx[i, k] * (X[j + 1, k] - Xref[j, k])
            lam[i] += 2.0 * s
        xj = X[j]
        roll = xj[6]
        pitch = xj[7]
        sr = math.sin(roll)
        cr = math.cos(roll)
        sp = math.sin(pitch)
        cp = math.cos(pitch)
        t = U[j, 0]
        # dX_{j+1}/dU_j = dt * df/du
        G[j, 0] += dt * (lam[3] * sp * cr - lam[4] * sr + lam[5] * cp * cr)
        G[j, 1] += dt * lam[6] * kr / tr
        G[j, 2] += dt * lam[7] * kp / tp
        if j == 0:
            break
        # lam_j = (I + dt df/dx)^T lam_{j+1}; state cost at X_j added next pass
        nxt[0] = lam[0]
        nxt[1] = lam[1]
        nxt[2] = lam[2]
        nxt[3] = lam[3] + dt * (lam[0] - ax * lam[3])
        nxt[4] = lam[4] + dt * (lam[1] - ay * lam[4])
        nxt[5] = lam[5] + dt * (lam[2] - az * lam[5])
        nxt[6] = lam[6] + dt * (t * (-lam[3] * sp * sr - lam[4] * cr - lam[5] * cp * sr)
                                - lam[6] / tr)
        nxt[7] = lam[7] + dt * (t * (lam[3] * cp * cr - lam[5] * sp * cr) - lam[7] / tp)
        for i in range(NX):
            lam[i] = nxt[i]
    return J, G


@njit(cache=True, nogil=True)
def project(U, lo, hi):
    out = np.empty_like(U)
    for j in range(U.shape[0]):
        for i in range(NU):
            v = U[j, i]
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            out[j, i] = v
    return out


@njit(cache=True, nogil=True)
def projected_gradient(x0, U0, Xref, u_prev, dt, mp, Qx, Qu, Qdu, ud, lo, hi,
                       max_iters, tol, step0, beta, sigma, max_backtracks):
    """Projected gradient descent with Armijo backtracking.

    Returns (U, J, iterations, status, history) where status is 0 when the
    projected-gradient tolerance was met, 1 on max_iters, 2 when the line
    search stalled and 3 on a non-finite cost (U is then the last finite
    iterate). ``history`` holds the accepted costs, starting with the initial one.
    """
    U = project(U0, lo, hi)
    J, G = cost_and_gradient(x0, U, Xref, u_prev, dt, mp, Qx, Qu, Qdu, ud)
    history = np.empty(max_iters + 1)
    history[0] = J
    if not math.isfinite(J):
        return U, J, 0, 3, history[:1]
    n = U.shape[0]
    step = step0
    it = 0
    status = 1
    while it < max_iters:
        # stationarity measure: ||U - P(U - G)||_inf
        pg = 0.0
        for j in range(n):
            for i in range(NU):
                v = U[j, i] - G[j, i]
                if v < lo[i]:
                    v = lo[i]
                elif v > hi[i]:
                    v = hi[i]
                r = abs(U[j, i] - v)
                if r > pg:
                    pg = r
        if pg < tol:
            status = 0
            break
        accepted = False
        a = step
        for _ in range(max_backtracks):
            Un = project(U - a * G, lo, hi)
            dec = 0.0
            for j in range(n):
                for i in range(NU):
                    dec += G[j, i] * (Un[j, i] - U[j, i])
            Jn = cost(x0, Un, Xref, u_prev, dt, mp, Qx, Qu, Qdu, ud)
            if not math.isfinite(Jn):
                a *= beta
                continue
            if Jn <= J + sigma * dec and Jn <= J:
                accepted = True
                break
            a *= beta
        if not accepted:
            status = 2
            break
        it += 1
        U = Un
        J, G = cost_and_gradient(x0, U, Xref, u_prev, dt, mp, Qx, Qu, Qdu, ud)
        history[it] = J
        if not math.isfinite(J):
            return U, J, it, 3, history[:it + 1]
        # next trial step: grow from the accepted one, capped at step0
        step = min(step0, a / beta)
    return U, J, it, status, history[:it + 1]
