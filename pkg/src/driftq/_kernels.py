"""Compiled inner loops: the RK4 walker and the Euler reflection stepper.

Kept in a separate module so importing the package stays light; numba loads
and compiles only when a solver or simulator actually runs (compiled code is
cached on disk after the first call).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def phi_scan(y, ck, th, cth):
    """Conjugate of the activation cost: linear scan over the kinks.

    Same half-open breakpoint convention as the reference implementation:
    slope theta_j applies for c_j < y <= c_{j+1}.
    """
    j = 0
    n = ck.shape[0]
    while j < n and y > ck[j]:
        j += 1
    return th[j] * y - cth[j]


@njit(cache=True)
def rhs(x, v, beta, inv_half, hcost, p, ck, th, cth):
    return inv_half * (beta - hcost * x + phi_scan(p - v, ck, th, cth))


@njit(cache=True)
def _rk4_step(x, v, s, beta, inv_half, hcost, p, ck, th, cth):
    k1 = rhs(x, v, beta, inv_half, hcost, p, ck, th, cth)
    k2 = rhs(x + 0.5 * s, v + 0.5 * s * k1, beta, inv_half, hcost, p, ck, th, cth)
    k3 = rhs(x + 0.5 * s, v + 0.5 * s * k2, beta, inv_half, hcost, p, ck, th, cth)
    k4 = rhs(x + s, v + s * k3, beta, inv_half, hcost, p, ck, th, cth)
    return v + (s / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _crosses_level(v0, v1, vlevels):
    lo = v0 if v0 < v1 else v1
    hi = v1 if v0 < v1 else v0
    for i in range(vlevels.shape[0]):
        if lo < vlevels[i] < hi:
            return True
    return False


@njit(cache=True)
def rk4_walk(beta, inv_half, hcost, p, ck, th, cth, vlevels, tail_level,
             n_steps, step, guard, stop_on_turn, stop_on_tail, record,
             out_v, out_dv):
    """Fixed-step RK4 on the uniform grid i*step, i = 0..n_steps.

    Steps that would jump across a kink level of the conjugate are halved
    (down to step/4096) so the crossing stays localized; every accepted
    macro node lands exactly on the uniform grid, which lets callers compare
    walks at different rates on a shared grid.

    Returns (count, status, x_last, v_last, turn_x, tail_x, tail_v) where
    status is 0 = ran to the end of the grid, 1 = stopped at a falling
    derivative, 2 = stopped on entering the outermost band, 3 = left the
    overflow guard band. turn_x is the first node with a falling derivative
    (NaN if none); (tail_x, tail_v) is the first node at or above
    tail_level (NaN if never reached). count is the number of nodes written
    when recording.
    """
    hmin = step / 4096.0
    x = 0.0
    v = 0.0
    status = 0
    turn_x = np.nan
    tail_x = np.nan
    tail_v = np.nan
    count = 0
    i = 0
    while True:
        dv = rhs(x, v, beta, inv_half, hcost, p, ck, th, cth)
        if record:
            out_v[i] = v
            out_dv[i] = dv
        count = i + 1
        if v > guard or v < -guard:
            status = 3
            break
        if dv < 0.0 and np.isnan(turn_x):
            turn_x = x
            if stop_on_turn:
                status = 1
                break
        if v >= tail_level and np.isnan(tail_x):
            tail_x = x
            tail_v = v
            if stop_on_tail:
                status = 2
                break
        if i >= n_steps:
            break
        # advance one macro step with kink-aware sub-stepping
        rem = step
        s = step
        xx = x
        while rem > 1e-14 * step:
            if s > rem:
                s = rem
            v_try = _rk4_step(xx, v, s, beta, inv_half, hcost, p, ck, th, cth)
            if s > hmin and _crosses_level(v, v_try, vlevels):
                s *= 0.5
                continue
            xx += s
            v = v_try
            rem -= s
            s = rem
        i += 1
        x = i * step
    return count, status, x, v, turn_x, tail_x, tail_v


@njit(cache=True)
def euler_chunk(z, dt, sig_sqdt, thresholds_asc, cell_drift, cell_cost,
                normals, bill_from, acc):
    """One chunk of the reflected Euler recursion for a band policy.

    State z evolves by z <- max(z + drift dt + sig sqrt(dt) xi, 0); the
    reflected mass is the idleness increment. Band membership (how many
    thresholds sit at or below z) picks the drift, matching the band
    convention used everywhere else. Costs are accumulated for step indices
    at or past bill_from into acc = [outlay*dt, z*dt, idleness, idleness_all]
    (the last entry ignores billing, for cumulative idleness traces).
    Returns the end-of-chunk state.
    """
    n = normals.shape[0]
    nthr = thresholds_asc.shape[0]
    for i in range(n):
        m = 0
        while m < nthr and thresholds_asc[m] <= z:
            m += 1
        cand = z + cell_drift[m] * dt + sig_sqdt * normals[i]
        if cand < 0.0:
            inc = -cand
            z = 0.0
        else:
            inc = 0.0
            z = cand
        acc[3] += inc
        if i >= bill_from:
            acc[0] += cell_cost[m] * dt
            acc[1] += z * dt
            acc[2] += inc
    return z


@njit(cache=True)
def euler_chunk_traced(z, dt, sig_sqdt, thresholds_asc, cell_drift, cell_cost,
                       normals, bill_from, acc, stride, start_index,
                       trace_z, trace_l, cursor):
    """Same recursion as euler_chunk, snapshotting (z, cumulative idleness)
    every stride-th global step into the trace arrays. start_index is the
    global index of the chunk's first step; cursor the next write slot.
    Returns (end state, new cursor)."""
    n = normals.shape[0]
    nthr = thresholds_asc.shape[0]
    for i in range(n):
        m = 0
        while m < nthr and thresholds_asc[m] <= z:
            m += 1
        cand = z + cell_drift[m] * dt + sig_sqdt * normals[i]
        if cand < 0.0:
            inc = -cand
            z = 0.0
        else:
            inc = 0.0
            z = cand
        acc[3] += inc
        if i >= bill_from:
            acc[0] += cell_cost[m] * dt
            acc[1] += z * dt
            acc[2] += inc
        gi = start_index + i
        if gi % stride == 0 and cursor < trace_z.shape[0]:
            trace_z[cursor] = z
            trace_l[cursor] = acc[3]
            cursor += 1
    return z, cursor
