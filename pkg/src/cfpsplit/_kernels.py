"""Batched projection kernel used by the solver hot loop.

Each row is an independent point projected onto the intersection of (up to)
a hyperplane, a halfspace and a box by cyclic projections with Dykstra
increments, mirroring the per-set code path in :mod:`cfpsplit.sets`.
Compiled with numba when available; plain-Python execution is the fallback.

Row layout is padded to the widest block: padded coordinates carry zero
inputs, zero normal-vector entries and (-inf, +inf) box bounds, so they are
fixed points of every projection and never influence a result.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap

_EPS_FLOOR = 8.0 * np.finfo(np.float64).eps


@njit(cache=True)
def dykstra_rows(
    z,
    dims,
    has_h,
    ah,
    bh,
    nh2,
    has_g,
    ag,
    bg,
    ng2,
    has_box,
    lo,
    hi,
    tol,
    max_cycles,
    out,
    cycles,
):
    """Project every row of ``z`` onto its own constraint intersection.

    ``cycles[i]`` reports the cycles used, or -1 if row ``i`` failed to meet
    the stopping rule (membership residual and full-cycle movement both at
    or below ``tol[i]``) within ``max_cycles[i]`` cycles.
    """
    n_rows, width = z.shape
    for i in range(n_rows):
        d = dims[i]
        x = np.empty(d)
        xs = np.empty(d)
        for q in range(d):
            x[q] = z[i, q]
        ph = np.zeros(d)
        pg = np.zeros(d)
        pb = np.zeros(d)
        cycles[i] = -1
        for cyc in range(max_cycles[i]):
            for q in range(d):
                xs[q] = x[q]
            if has_h[i]:
                t = -bh[i]
                for q in range(d):
                    y = x[q] + ph[q]
                    ph[q] = y
                    t += ah[i, q] * y
                t /= nh2[i]
                for q in range(d):
                    xn = ph[q] - t * ah[i, q]
                    ph[q] -= xn
                    x[q] = xn
            if has_g[i]:
                t = -bg[i]
                for q in range(d):
                    y = x[q] + pg[q]
                    pg[q] = y
                    t += ag[i, q] * y
                if t > 0.0:
                    t /= ng2[i]
                else:
                    t = 0.0
                for q in range(d):
                    xn = pg[q] - t * ag[i, q]
                    pg[q] -= xn
                    x[q] = xn
            if has_box[i]:
                for q in range(d):
                    y = x[q] + pb[q]
                    xn = y
                    if xn < lo[i, q]:
                        xn = lo[i, q]
                    if xn > hi[i, q]:
                        xn = hi[i, q]
                    pb[q] = y - xn
                    x[q] = xn
            res = 0.0
            if has_h[i]:
                t = -bh[i]
                for q in range(d):
                    t += ah[i, q] * x[q]
                r = abs(t) / np.sqrt(nh2[i])
                if r > res:
                    res = r
            if has_g[i]:
                t = -bg[i]
                for q in range(d):
                    t += ag[i, q] * x[q]
                if t > 0.0:
                    r = t / np.sqrt(ng2[i])
                    if r > res:
                        res = r
            if has_box[i]:
                b2 = 0.0
                for q in range(d):
                    xq = x[q]
                    if xq < lo[i, q]:
                        b2 += (lo[i, q] - xq) * (lo[i, q] - xq)
                    elif xq > hi[i, q]:
                        b2 += (xq - hi[i, q]) * (xq - hi[i, q])
                r = np.sqrt(b2)
                if r > res:
                    res = r
            move2 = 0.0
            xnrm2 = 0.0
            for q in range(d):
                dm = x[q] - xs[q]
                move2 += dm * dm
                xnrm2 += x[q] * x[q]
            mtol = tol[i]
            floor = _EPS_FLOOR * (1.0 + np.sqrt(xnrm2))
            if floor > mtol:
                mtol = floor
            if res <= mtol and np.sqrt(move2) <= mtol:
                cycles[i] = cyc + 1
                break
        for q in range(d):
            out[i, q] = x[q]
        for q in range(d, width):
            out[i, q] = 0.0
