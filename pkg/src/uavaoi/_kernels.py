"""Compiled inner loops of the bounded-variable simplex in :mod:`uavaoi.lp`.

Every kernel works in place on the tableau ``T`` (C order), the full point
``x`` and the basis arrays, and returns a status code; the Python driver
owns factorisation, phase sequencing and result assembly.
"""
from __future__ import annotations

import numpy as np
from numba import njit

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
REFACTOR = 3
STALLED = 4
ITER_LIMIT = 5


@njit(cache=True)
def pivot(T, basic, is_basic, r, j):
    m, N = T.shape
    piv = T[r, j]
    for k in range(N):
        T[r, k] /= piv
    for i in range(m):
        if i == r:
            continue
        f = T[i, j]
        if f != 0.0:
            for k in range(N):
                T[i, k] -= f * T[r, k]
            T[i, j] = 0.0
    T[r, j] = 1.0
    is_basic[basic[r]] = False
    is_basic[j] = True
    basic[r] = j


@njit(cache=True)
def reduced_costs(T, cost, basic):
    m, N = T.shape
    d = cost.copy()
    for i in range(m):
        cb = cost[basic[i]]
        if cb != 0.0:
            for k in range(N):
                d[k] -= cb * T[i, k]
    return d


@njit(cache=True)
def max_infeasibility(x, basic, lo, hi):
    worst = 0.0
    for i in range(basic.size):
        b = basic[i]
        v = x[b]
        if v < lo[b]:
            worst = max(worst, lo[b] - v)
        elif v > hi[b]:
            worst = max(worst, v - hi[b])
    return worst


@njit(cache=True)
def dual_feasible(d, x, is_basic, lo, hi, feas_tol, tol):
    for j in range(d.size):
        if is_basic[j] or lo[j] == hi[j]:
            continue
        at_lo = np.isfinite(lo[j]) and abs(x[j] - lo[j]) <= feas_tol
        at_hi = (not at_lo) and np.isfinite(hi[j]) and abs(x[j] - hi[j]) <= feas_tol
        if at_lo:
            if d[j] < -tol:
                return False
        elif at_hi:
            if d[j] > tol:
                return False
        elif abs(d[j]) > tol:
            return False
    return True


@njit(cache=True)
def dual_simplex(T, x, basic, is_basic, lo, hi, d, counters, max_iter, refactor_every,
                 feas_tol, pivot_tol):
    """Dual simplex iterations; ``counters`` = [iterations, pivots since factor, local limit]."""
    m, N = T.shape
    local = 0
    while True:
        r = -1
        worst = feas_tol
        for i in range(m):
            b = basic[i]
            v = x[b]
            inf = 0.0
            if v < lo[b]:
                inf = lo[b] - v
            elif v > hi[b]:
                inf = v - hi[b]
            if inf > worst:
                worst = inf
                r = i
        if r < 0:
            return OPTIMAL
        if local >= counters[2]:
            return STALLED
        if counters[0] >= max_iter:
            return ITER_LIMIT
        counters[0] += 1
        local += 1
        bi = basic[r]
        go_up = x[bi] < lo[bi]
        target = lo[bi] if go_up else hi[bi]
        s = 1.0 if go_up else -1.0
        rmin = np.inf
        for j in range(N):
            if is_basic[j] or lo[j] == hi[j]:
                continue
            a = T[r, j]
            if abs(a) <= pivot_tol:
                continue
            xj = x[j]
            at_lo = xj <= lo[j] + feas_tol
            at_hi = (not at_lo) and xj >= hi[j] - feas_tol
            if at_lo and not s * a < 0:
                continue
            if at_hi and not s * a > 0:
                continue
            ratio = abs(d[j]) / abs(a)
            if ratio < rmin:
                rmin = ratio
        if rmin == np.inf:
            return INFEASIBLE
        jb = -1
        ab = -1.0
        for j in range(N):
            if is_basic[j] or lo[j] == hi[j]:
                continue
            a = T[r, j]
            if abs(a) <= pivot_tol:
                continue
            xj = x[j]
            at_lo = xj <= lo[j] + feas_tol
            at_hi = (not at_lo) and xj >= hi[j] - feas_tol
            if at_lo and not s * a < 0:
                continue
            if at_hi and not s * a > 0:
                continue
            if abs(d[j]) / abs(a) <= rmin + 1e-12 and abs(a) > ab:
                ab = abs(a)
                jb = j
        j = jb
        a = T[r, j]
        dx = (x[bi] - target) / a
        x[j] += dx
        for i in range(m):
            x[basic[i]] -= dx * T[i, j]
        f = d[j] / a
        for k in range(N):
            d[k] -= f * T[r, k]
        d[j] = 0.0
        pivot(T, basic, is_basic, r, j)
        x[bi] = target
        counters[1] += 1
        if counters[1] >= refactor_every:
            return REFACTOR


@njit(cache=True)
def primal_simplex(T, x, basic, is_basic, lo, hi, cost, d, phase, counters, state, max_iter,
                   refactor_every, feas_tol, opt_tol, pivot_tol, bland_after):
    """Primal iterations (phase 1: composite infeasibility, phase 2: ``cost``).

    ``state`` = [degenerate run, bland flag, ray column, ray direction].
    In phase 2 ``d`` must hold current reduced costs and is kept updated.
    """
    m, N = T.shape
    below = np.zeros(m, dtype=np.bool_)
    above = np.zeros(m, dtype=np.bool_)
    alpha = np.empty(m)
    while True:
        if counters[0] >= max_iter:
            return ITER_LIMIT
        counters[0] += 1
        if phase == 1:
            anyinf = False
            for i in range(m):
                b = basic[i]
                below[i] = x[b] < lo[b] - feas_tol
                above[i] = x[b] > hi[b] + feas_tol
                if below[i] or above[i]:
                    anyinf = True
            if not anyinf:
                return OPTIMAL
            for k in range(N):
                d[k] = 0.0
            for i in range(m):
                # gradient of sum(lo - x_B) + sum(x_B - hi) over nonbasics
                if below[i]:
                    for k in range(N):
                        d[k] += T[i, k]
                elif above[i]:
                    for k in range(N):
                        d[k] -= T[i, k]
        # entering variable
        j = -1
        direction = 0
        best = 0.0
        bland = state[1] == 1
        for k in range(N):
            if is_basic[k] or lo[k] == hi[k]:
                continue
            xk = x[k]
            at_lo = xk <= lo[k] + feas_tol
            at_hi = (not at_lo) and xk >= hi[k] - feas_tol
            dk = d[k]
            dirk = 0
            if (not at_hi) and dk < -opt_tol:
                dirk = 1
            elif (not at_lo) and dk > opt_tol:
                dirk = -1
            if dirk == 0:
                continue
            if bland:
                j = k
                direction = dirk
                break
            if abs(dk) > best:
                best = abs(dk)
                j = k
                direction = dirk
        if j < 0:
            return INFEASIBLE if phase == 1 else OPTIMAL
        for i in range(m):
            alpha[i] = T[i, j]
        t_best = np.inf
        if direction > 0:
            span = hi[j] - x[j]
        else:
            span = x[j] - lo[j]
        if np.isfinite(span):
            t_best = max(span, 0.0)
        rmin = np.inf
        for i in range(m):
            rate = direction * alpha[i]
            b = basic[i]
            ratio = np.inf
            if rate > pivot_tol:
                if above[i]:
                    ratio = (x[b] - hi[b]) / rate
                elif (not below[i]) and np.isfinite(lo[b]):
                    ratio = (x[b] - lo[b]) / rate
            elif rate < -pivot_tol:
                if below[i]:
                    ratio = (lo[b] - x[b]) / -rate
                elif (not above[i]) and np.isfinite(hi[b]):
                    ratio = (hi[b] - x[b]) / -rate
            if ratio < 0.0:
                ratio = 0.0
            if ratio < rmin:
                rmin = ratio
        r_best = -1
        target = 0.0
        if rmin < t_best:
            key = np.inf
            for i in range(m):
                rate = direction * alpha[i]
                b = basic[i]
                ratio = np.inf
                bound = 0.0
                if rate > pivot_tol:
                    if above[i]:
                        ratio = (x[b] - hi[b]) / rate
                        bound = hi[b]
                    elif (not below[i]) and np.isfinite(lo[b]):
                        ratio = (x[b] - lo[b]) / rate
                        bound = lo[b]
                elif rate < -pivot_tol:
                    if below[i]:
                        ratio = (lo[b] - x[b]) / -rate
                        bound = lo[b]
                    elif (not above[i]) and np.isfinite(hi[b]):
                        ratio = (hi[b] - x[b]) / -rate
                        bound = hi[b]
                if ratio < 0.0:
                    ratio = 0.0
                if ratio > rmin + 1e-12:
                    continue
                # Bland: smallest basic index; otherwise the largest pivot
                k2 = float(b) if bland else -abs(alpha[i])
                if k2 < key:
                    key = k2
                    r_best = i
                    target = bound
            t_best = rmin
        if not np.isfinite(t_best):
            if phase == 1:
                return INFEASIBLE
            state[2] = j
            state[3] = direction
            return UNBOUNDED
        if t_best <= 1e-12:
            state[0] += 1
            if state[0] > bland_after:
                state[1] = 1
        else:
            state[0] = 0
            state[1] = 0
        step = direction * t_best
        x[j] += step
        for i in range(m):
            x[basic[i]] -= step * alpha[i]
        if r_best < 0:
            x[j] = hi[j] if direction > 0 else lo[j]
            continue
        leaving = basic[r_best]
        pivot(T, basic, is_basic, r_best, j)
        x[leaving] = target
        counters[1] += 1
        if phase == 2:
            dj = d[j]
            for k in range(N):
                d[k] -= dj * T[r_best, k]
            d[j] = 0.0
        if counters[1] >= refactor_every:
            return REFACTOR
