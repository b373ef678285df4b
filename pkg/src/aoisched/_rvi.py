"""Compiled sweeps for relative value iteration.

Value arrays are indexed ``f[a - 1, d]``.  Transitions leaving the grid are
clamped to its edge.  Each sweep applies ``f <- f + tau * (Tf - f - c)``,
where ``c`` is ``(Tf - f)`` at the reference state ``(1, 0)``, so
``f(1, 0)`` stays pinned at 0.  ``tau < 1`` makes periodic chains (e.g.
``lam = 1``) converge.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def decoupled_sweeps(f, lam, m, tol, max_iters, tau):
    A, W = f.shape
    g = np.empty_like(f)
    span = np.inf
    jmid = 0.0
    it = 0
    for it in range(1, max_iters + 1):
        gmax = -np.inf
        gmin = np.inf
        for ai in range(A):
            a = ai + 1
            an = min(ai + 1, A - 1)
            sched = a + m + (1.0 - lam) * f[an, 0] + lam * f[0, min(a, W - 1)]
            for d in range(W):
                idle = d + a + (1.0 - lam) * f[an, d] + lam * f[0, min(d + a, W - 1)]
                v = idle if idle < sched else sched
                x = v - f[ai, d]
                g[ai, d] = x
                if x > gmax:
                    gmax = x
                if x < gmin:
                    gmin = x
        ref = g[0, 0]
        for ai in range(A):
            for d in range(W):
                f[ai, d] += tau * (g[ai, d] - ref)
        span = gmax - gmin
        jmid = 0.5 * (gmax + gmin)
        if span <= tol:
            break
    return jmid, span, it


@njit(cache=True)
def decoupled_q_gap(f, lam, m):
    """``Q(idle) - Q(schedule)`` for every grid state."""
    A, W = f.shape
    out = np.empty_like(f)
    for ai in range(A):
        a = ai + 1
        an = min(ai + 1, A - 1)
        sched = a + m + (1.0 - lam) * f[an, 0] + lam * f[0, min(a, W - 1)]
        for d in range(W):
            idle = d + a + (1.0 - lam) * f[an, d] + lam * f[0, min(d + a, W - 1)]
            out[ai, d] = idle - sched
    return out


@njit(cache=True)
def _joint_q(f, l1, l2, a1i, d1, a2i, d2, who):
    # expected next value + cost when terminal ``who`` (0 or 1) is scheduled
    A = f.shape[0]
    W = f.shape[1]
    a1 = a1i + 1
    a2 = a2i + 1
    n1 = min(a1i + 1, A - 1)
    n2 = min(a2i + 1, A - 1)
    if who == 0:
        cost = a1 + a2 + d2
        x1d0 = 0            # no arrival: (a1+1, 0)
        x1d1 = min(a1, W - 1)  # arrival: (1, a1)
        x2d0 = d2
        x2d1 = min(d2 + a2, W - 1)
    else:
        cost = a1 + d1 + a2
        x1d0 = d1
        x1d1 = min(d1 + a1, W - 1)
        x2d0 = 0
        x2d1 = min(a2, W - 1)
    ev = ((1 - l1) * (1 - l2) * f[n1, x1d0, n2, x2d0]
          + (1 - l1) * l2 * f[n1, x1d0, 0, x2d1]
          + l1 * (1 - l2) * f[0, x1d1, n2, x2d0]
          + l1 * l2 * f[0, x1d1, 0, x2d1])
    return cost + ev


@njit(cache=True)
def joint_sweeps(f, l1, l2, tol, max_iters, tau):
    A, W = f.shape[0], f.shape[1]
    g = np.empty_like(f)
    span = np.inf
    jmid = 0.0
    it = 0
    for it in range(1, max_iters + 1):
        gmax = -np.inf
        gmin = np.inf
        for a1i in range(A):
            for d1 in range(W):
                for a2i in range(A):
                    for d2 in range(W):
                        q0 = _joint_q(f, l1, l2, a1i, d1, a2i, d2, 0)
                        q1 = _joint_q(f, l1, l2, a1i, d1, a2i, d2, 1)
                        v = q0 if q0 < q1 else q1
                        x = v - f[a1i, d1, a2i, d2]
                        g[a1i, d1, a2i, d2] = x
                        if x > gmax:
                            gmax = x
                        if x < gmin:
                            gmin = x
        ref = g[0, 0, 0, 0]
        for a1i in range(A):
            for d1 in range(W):
                for a2i in range(A):
                    for d2 in range(W):
                        f[a1i, d1, a2i, d2] += tau * (g[a1i, d1, a2i, d2] - ref)
        span = gmax - gmin
        jmid = 0.5 * (gmax + gmin)
        if span <= tol:
            break
    return jmid, span, it


@njit(cache=True)
def joint_q_gap(f, l1, l2):
    """``Q(schedule terminal 2) - Q(schedule terminal 1)`` for every grid state."""
    A, W = f.shape[0], f.shape[1]
    out = np.empty_like(f)
    for a1i in range(A):
        for d1 in range(W):
            for a2i in range(A):
                for d2 in range(W):
                    out[a1i, d1, a2i, d2] = (_joint_q(f, l1, l2, a1i, d1, a2i, d2, 1)
                                             - _joint_q(f, l1, l2, a1i, d1, a2i, d2, 0))
    return out
