"""NumPy implementations of the hot kernels.

These mirror the compiled extension (:mod:`fhv._ckern`) operation for
operation; given the same inputs both backends must produce bit-identical
output.  Keep the arithmetic expression trees in sync when touching either
side.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def coverage(ax, ay, bx, by, cx, cy, w, h):
    """Pixel-center coverage of one raster-space triangle.

    Vertices must be wound so the doubled signed area
    ``(bx-ax)(cy-ay) - (by-ay)(cx-ax)`` is positive (y grows downward).
    A pixel center is covered when every edge function is positive, or
    zero on a top or left edge.  Returns ``(px, py, l0, l1, l2)`` for the
    covered pixels in row-major order; ``l`` are the barycentric weights
    of v0, v1, v2.
    """
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area2 <= 0.0:
        raise ValueError("coverage() requires positively wound vertices")

    x0 = max(0, math.ceil(min(ax, bx, cx) - 0.5))
    x1 = min(w - 1, math.floor(max(ax, bx, cx) - 0.5))
    y0 = max(0, math.ceil(min(ay, by, cy) - 0.5))
    y1 = min(h - 1, math.floor(max(ay, by, cy) - 0.5))
    empty = (np.empty(0, np.int32), np.empty(0, np.int32),
             np.empty(0, np.float64), np.empty(0, np.float64), np.empty(0, np.float64))
    if x1 < x0 or y1 < y0:
        return empty

    pxs = np.arange(x0, x1 + 1, dtype=np.int32)
    pys = np.arange(y0, y1 + 1, dtype=np.int32)
    sx = pxs.astype(np.float64) + 0.5
    sy = (pys.astype(np.float64) + 0.5)[:, None]

    def edge(fx, fy, tx, ty):
        dx = tx - fx
        dy = ty - fy
        f = dx * (sy - fy) - dy * (sx - fx)
        topleft = (dy < 0.0) or (dy == 0.0 and dx > 0.0)
        ok = (f > 0.0) | ((f == 0.0) & topleft)
        return f, ok

    f0, ok0 = edge(bx, by, cx, cy)  # opposite v0
    f1, ok1 = edge(cx, cy, ax, ay)  # opposite v1
    f2, ok2 = edge(ax, ay, bx, by)  # opposite v2
    keep = (ok0 & ok1 & ok2).ravel()
    if not keep.any():
        return empty

    shape = (len(pys), len(pxs))
    px = np.broadcast_to(pxs[None, :], shape).ravel()[keep]
    py = np.broadcast_to(pys[:, None], shape).ravel()[keep]
    l0 = f0.ravel()[keep] / area2
    l1 = f1.ravel()[keep] / area2
    l2 = f2.ravel()[keep] / area2
    return (np.ascontiguousarray(px), np.ascontiguousarray(py), l0, l1, l2)


def linked_insert(keys, heads, prev, start):
    """Chain ``len(keys)`` new records starting at pool index ``start``.

    ``prev[start+i]`` receives the old head for ``keys[i]`` and the head is
    swapped to the new index, i.e. heads always point at the most recently
    inserted record.
    """
    idx = start
    for k in keys.tolist():
        prev[idx] = heads[k]
        heads[k] = idx
        idx += 1


def pofa_scatter(codes, offsets, counts, cursors, dest):
    """Assign contiguous per-leaf slots: dest[i] = offsets[c] + cursors[c]++.

    Returns -1, or the position of the first fragment whose leaf cursor
    would exceed the count recorded in the sizing pass.
    """
    for i, c in enumerate(codes.tolist()):
        cur = cursors[c]
        if cur >= counts[c]:
            return i
        dest[i] = offsets[c] + cur
        cursors[c] = cur + 1
    return -1
