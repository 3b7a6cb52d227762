"""Pure-numpy implementations of the hot geometry kernels.

These are the fallback when the compiled extension is unavailable. The
arithmetic (operation order, clamping, first-minimum ties) matches the
Cython kernels exactly so both backends return bit-identical results.
"""

from __future__ import annotations

import numpy as np

NAME = "pure"


def project_many(
    ax: np.ndarray,
    ay: np.ndarray,
    bx: np.ndarray,
    by: np.ndarray,
    qx: np.ndarray,
    qy: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project each query point onto the nearest of the given sub-segments.

    ``ax..by`` are flat arrays of sub-segment endpoints; ``qx, qy`` are the
    query coordinates. Returns (index of winning sub-segment, clamped
    parameter along it, squared distance) per query. Ties keep the lowest
    index.
    """
    vx = bx - ax
    vy = by - ay
    vv = vx * vx + vy * vy
    nq = qx.size
    idx = np.empty(nq, dtype=np.int64)
    ts = np.empty(nq)
    d2s = np.empty(nq)
    t_raw = np.empty_like(vv)
    for k in range(nq):
        ux = qx[k] - ax
        uy = qy[k] - ay
        np.divide(ux * vx + uy * vy, vv, out=t_raw, where=vv > 0.0)
        t_raw[vv <= 0.0] = 0.0
        t = np.clip(t_raw, 0.0, 1.0)
        dx = ux - t * vx
        dy = uy - t * vy
        d2 = dx * dx + dy * dy
        i = int(np.argmin(d2))
        idx[k] = i
        ts[k] = t[i]
        d2s[k] = d2[i]
    return idx, ts, d2s


def stamp_band(
    img: np.ndarray,
    ax: np.ndarray,
    ay: np.ndarray,
    bx: np.ndarray,
    by: np.ndarray,
    half_width: float,
) -> None:
    """Set image pixels whose centers lie within ``half_width`` of any sub-segment.

    Coordinates are in pixel units: pixel (row, col) has its center at
    (col + 0.5, row + 0.5). ``img`` is modified in place.
    """
    size_r, size_c = img.shape
    hw2 = half_width * half_width
    for s in range(ax.size):
        x0, y0, x1, y1 = ax[s], ay[s], bx[s], by[s]
        c_lo = max(0, int(np.floor(min(x0, x1) - half_width - 0.5)))
        c_hi = min(size_c - 1, int(np.ceil(max(x0, x1) + half_width - 0.5)))
        r_lo = max(0, int(np.floor(min(y0, y1) - half_width - 0.5)))
        r_hi = min(size_r - 1, int(np.ceil(max(y0, y1) + half_width - 0.5)))
        if c_lo > c_hi or r_lo > r_hi:
            continue
        px = np.arange(c_lo, c_hi + 1) + 0.5
        py = (np.arange(r_lo, r_hi + 1) + 0.5)[:, None]
        vx = x1 - x0
        vy = y1 - y0
        vv = vx * vx + vy * vy
        ux = px - x0
        uy = py - y0
        if vv > 0.0:
            t = np.clip((ux * vx + uy * vy) / vv, 0.0, 1.0)
        else:
            t = np.zeros((py.size, px.size))
        dx = ux - t * vx
        dy = uy - t * vy
        hit = dx * dx + dy * dy <= hw2
        block = img[r_lo : r_hi + 1, c_lo : c_hi + 1]
        block[hit] = 1
