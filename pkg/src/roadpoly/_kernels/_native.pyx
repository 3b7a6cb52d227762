# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels.

Arithmetic mirrors the numpy fallback operation for operation (and the
extension is built without FMA contraction), so both backends return
bit-identical results.
"""

from libc.math cimport INFINITY, ceil, floor

import numpy as np

NAME = "native"


def project_many(
    const double[::1] ax not None,
    const double[::1] ay not None,
    const double[::1] bx not None,
    const double[::1] by not None,
    const double[::1] qx not None,
    const double[::1] qy not None,
):
    """Nearest sub-segment per query point; ties keep the lowest index."""
    cdef Py_ssize_t m = ax.shape[0]
    cdef Py_ssize_t nq = qx.shape[0]
    idx_arr = np.empty(nq, dtype=np.int64)
    t_arr = np.empty(nq, dtype=np.float64)
    d2_arr = np.empty(nq, dtype=np.float64)
    cdef long long[::1] idx = idx_arr
    cdef double[::1] ts = t_arr
    cdef double[::1] d2s = d2_arr
    cdef Py_ssize_t k, i, best_i
    cdef double px, py, ux, uy, vx, vy, vv, t, dx, dy, d2, best_d2, best_t
    for k in range(nq):
        px = qx[k]
        py = qy[k]
        best_d2 = INFINITY
        best_i = 0
        best_t = 0.0
        for i in range(m):
            vx = bx[i] - ax[i]
            vy = by[i] - ay[i]
            vv = vx * vx + vy * vy
            ux = px - ax[i]
            uy = py - ay[i]
            if vv > 0.0:
                t = (ux * vx + uy * vy) / vv
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            else:
                t = 0.0
            dx = ux - t * vx
            dy = uy - t * vy
            d2 = dx * dx + dy * dy
            if d2 < best_d2:
                best_d2 = d2
                best_i = i
                best_t = t
        idx[k] = best_i
        ts[k] = best_t
        d2s[k] = best_d2
    return idx_arr, t_arr, d2_arr


def stamp_band(
    unsigned char[:, ::1] img not None,
    const double[::1] ax not None,
    const double[::1] ay not None,
    const double[::1] bx not None,
    const double[::1] by not None,
    double half_width,
):
    """Set pixels whose centers lie within half_width of any sub-segment."""
    cdef Py_ssize_t rows = img.shape[0]
    cdef Py_ssize_t cols = img.shape[1]
    cdef double hw2 = half_width * half_width
    cdef Py_ssize_t s, r, c, r_lo, r_hi, c_lo, c_hi
    cdef double x0, y0, x1, y1, vx, vy, vv, px, py, ux, uy, t, dx, dy, lo, hi
    for s in range(ax.shape[0]):
        x0 = ax[s]
        y0 = ay[s]
        x1 = bx[s]
        y1 = by[s]
        lo = x0 if x0 < x1 else x1
        hi = x0 if x0 > x1 else x1
        c_lo = <Py_ssize_t>floor(lo - half_width - 0.5)
        c_hi = <Py_ssize_t>ceil(hi + half_width - 0.5)
        if c_lo < 0:
            c_lo = 0
        if c_hi > cols - 1:
            c_hi = cols - 1
        lo = y0 if y0 < y1 else y1
        hi = y0 if y0 > y1 else y1
        r_lo = <Py_ssize_t>floor(lo - half_width - 0.5)
        r_hi = <Py_ssize_t>ceil(hi + half_width - 0.5)
        if r_lo < 0:
            r_lo = 0
        if r_hi > rows - 1:
            r_hi = rows - 1
        if c_lo > c_hi or r_lo > r_hi:
            continue
        vx = x1 - x0
        vy = y1 - y0
        vv = vx * vx + vy * vy
        for r in range(r_lo, r_hi + 1):
            py = r + 0.5
            uy = py - y0
            for c in range(c_lo, c_hi + 1):
                px = c + 0.5
                ux = px - x0
                if vv > 0.0:
                    t = (ux * vx + uy * vy) / vv
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                dx = ux - t * vx
                dy = uy - t * vy
                if dx * dx + dy * dy <= hw2:
                    img[r, c] = 1
