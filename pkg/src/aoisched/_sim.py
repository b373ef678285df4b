"""Compiled inner loops of the slotted simulator and the IPRA protocol.

The Python-level reference paths (``sim.trace`` and ``ipra.IpraNetwork``)
implement the same dynamics one step at a time; tests check the two agree.
"""
import numpy as np
from numba import njit

WHITTLE_1BUF = 0
WHITTLE_0BUF = 1
RR_ONE = 2
MAX_AGE = 3
RANDOM = 4
MDP = 5

IDLE, SUCCESS, COLLISION = 0, 1, 2


@njit(cache=True, inline="always")
def index(lam, a, d):
    if d > 0.5 * lam * a * a + (1.0 - 0.5 * lam) * a:
        x = (d + 0.5 * a * (a - 1) * lam) / (1.0 - lam + a * lam)
        return 0.5 * x * x + (1.0 / lam - 0.5) * x
    return d / lam


@njit(cache=True)
def _decide(kind, lam, a, d, u, cursor, table):
    N = a.shape[0]
    best = -1
    if kind == WHITTLE_1BUF:
        bv = 0.0
        for i in range(N):
            if d[i] > 0:
                v = index(lam[i], a[i], d[i])
                if v > bv:
                    bv = v
                    best = i
    elif kind == WHITTLE_0BUF:
        bv = -1.0
        for i in range(N):
            if a[i] == 1 and d[i] > 0:
                v = index(lam[i], 1, a[i] + d[i] - 1)
                if v > bv:
                    bv = v
                    best = i
    elif kind == RR_ONE:
        best = cursor[0]
        cursor[0] = (cursor[0] + 1) % N
    elif kind == MAX_AGE:
        bv = 0
        for i in range(N):
            if d[i] > 0 and a[i] + d[i] > bv:
                bv = a[i] + d[i]
                best = i
    elif kind == RANDOM:
        k = 0
        for i in range(N):
            if d[i] > 0:
                k += 1
        if k > 0:
            pick = min(int(u * k), k - 1)
            for i in range(N):
                if d[i] > 0:
                    if pick == 0:
                        best = i
                        break
                    pick -= 1
    elif kind == MDP:
        A = table.shape[0]
        W = table.shape[1]
        t = table[min(a[0], A) - 1, min(d[0], W - 1), min(a[1], A) - 1, min(d[1], W - 1)]
        if d[t] > 0:
            best = t
    return best


@njit(cache=True)
def centralized_chunk(kind, lam, a, d, arrivals, pol_u, cursor, table, t0, warmup,
                      sums, counts, drop):
    """Run ``arrivals.shape[0]`` slots in place.  ``sums`` collects per-terminal
    post-action AoI for slots ``t >= warmup``; ``counts`` is (idle, success, collision)."""
    C, N = arrivals.shape
    for s in range(C):
        n = _decide(kind, lam, a, d, pol_u[s], cursor, table)
        measure = t0 + s >= warmup
        if measure:
            counts[IDLE if n < 0 else SUCCESS] += 1
        for i in range(N):
            arr = arrivals[s, i]
            if i == n:
                if measure:
                    sums[i] += a[i]
                if arr:
                    d[i] = a[i]
                    a[i] = 1
                else:
                    a[i] += 1
                    d[i] = 0
            else:
                if measure:
                    sums[i] += a[i] + d[i]
                if drop:
                    a[i] += d[i]
                    d[i] = 0
                if arr:
                    d[i] += a[i]
                    a[i] = 1
                else:
                    a[i] += 1


@njit(cache=True)
def ipra_chunk(lam, p, thr, R, Rc, c, g, mu, clock, arrivals, kbase, uni, ucur,
               warmup, horizon, sums, counts, acc):
    """Advance the IPRA network in whole contention rounds.

    Time is in ticks; a transmission frame lasts ``R`` ticks, a collision
    frame ``Rc`` ticks and a contention slot ``c`` ticks (0 or 1).  Arrival
    opportunities occur at multiples of ``R``; row ``k - kbase`` of
    ``arrivals`` holds the draws for boundary ``k * R`` and a packet arriving
    there is stamped as generated at ``(k - 1) * R``.

    ``clock[0]`` is the current tick, ``ucur[0]`` the next unused uniform.
    ``acc`` holds (measured ticks, successful-frame ticks).  Returns 0 when
    the horizon is reached, 1 when more arrival rows are needed and 2 when
    more uniforms are needed.
    """
    N = g.shape[0]
    K = arrivals.shape[0]
    span_max = c + max(R, Rc)
    fR = float(R)
    while clock[0] < horizon:
        t = clock[0]
        if (t + span_max) // R - kbase >= K:
            return 1
        if ucur[0] + N > uni.shape[0]:
            return 2
        measure = t >= warmup
        n_elig = 0
        for i in range(N):
            dd = g[i] - mu[i]
            if dd > 0 and index(lam[i], (t - g[i]) / fR, dd / fR) >= thr:
                n_elig += 1
        if n_elig == 0:
            # indices never grow without an arrival: idle until the next boundary
            k = (t // R + 1) * R - t
            if measure:
                for i in range(N):
                    h = t - mu[i]
                    sums[i] += k * h + k * (k - 1) // 2
                counts[IDLE] += k
                acc[0] += k
            e = k
        else:
            winner = -1
            ntx = 0
            for i in range(N):
                dd = g[i] - mu[i]
                if dd > 0 and index(lam[i], (t - g[i]) / fR, dd / fR) >= thr:
                    x = uni[ucur[0]]
                    ucur[0] += 1
                    if x < p:
                        ntx += 1
                        winner = i
            if ntx == 0:
                e = c
                if measure:
                    for i in range(N):
                        sums[i] += c * (t - mu[i])
                    counts[IDLE] += 1
            elif ntx == 1:
                e = c + R
                if measure:
                    for i in range(N):
                        post = g[i] if i == winner else mu[i]
                        sums[i] += c * (t - mu[i]) + R * (t + c - post)
                    counts[SUCCESS] += 1
                    acc[1] += R
                mu[winner] = g[winner]
            else:
                e = c + Rc
                if measure:
                    for i in range(N):
                        sums[i] += c * (t - mu[i]) + Rc * (t + c - mu[i])
                    counts[COLLISION] += 1
            if measure:
                acc[0] += e
        # arrival boundaries in (t, t + e]
        for k in range(t // R + 1, (t + e) // R + 1):
            row = k - kbase
            for i in range(N):
                if arrivals[row, i]:
                    g[i] = (k - 1) * R
        clock[0] = t + e
    return 0
