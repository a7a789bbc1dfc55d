# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled masking hot loops.

Mirrors _pykernels exactly: same SplitMix64 stream, same draw protocol,
byte-identical outputs. Any change to the draw order there must be
mirrored here.
"""

import numpy as np

BACKEND = "compiled"

ctypedef unsigned long long u64

cdef inline u64 _mix64(u64 z) nogil:
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)

cdef u64 _GOLDEN = <u64>0x9E3779B97F4A7C15


def sample_positions(long n, long k, object seed):
    """First k entries of a seeded Fisher-Yates shuffle of range(n)."""
    if k < 0 or k > n:
        raise ValueError(f"need 0 <= k <= n, got k={k} n={n}")
    out = np.arange(n, dtype=np.int64)
    if k == 0:
        return out[:0].copy()
    cdef long long[::1] a = out
    cdef u64 state = <u64>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef long j, i
    cdef long long tmp
    with nogil:
        for j in range(k):
            state += _GOLDEN
            i = j + <long>(_mix64(state) % <u64>(n - j))
            tmp = a[j]; a[j] = a[i]; a[i] = tmp
    return out[:k].copy()


def paint_shapes(unsigned char[:, :, ::1] pixels, double need, object seed,
                 long area_cap, long r_cap, long black_start):
    """Paint random rectangles/circles black until black >= need.

    Returns the final black-pixel count. See _pykernels.paint_shapes for
    the draw protocol.
    """
    cdef long h_total = pixels.shape[0]
    cdef long w_total = pixels.shape[1]
    cdef u64 state = <u64>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef long black = black_start
    cdef long max_w = w_total if w_total < area_cap else area_cap
    cdef long kind, w, h, h_cap, x0, y0, r, cx, cy
    cdef long x, y, x_lo, x_hi, y_lo, y_hi, newly
    cdef long dx, dy, rr

    with nogil:
        while black < need:
            # the kind draw is skipped entirely when circles are disabled,
            # matching the python backend's stream position
            if r_cap >= 1:
                state += _GOLDEN
                kind = <long>(_mix64(state) % 2)
            else:
                kind = 0
            if kind == 0:
                state += _GOLDEN
                w = 1 + <long>(_mix64(state) % <u64>max_w)
                h_cap = area_cap // w
                if h_cap > h_total:
                    h_cap = h_total
                state += _GOLDEN
                h = 1 + <long>(_mix64(state) % <u64>h_cap)
                state += _GOLDEN
                x0 = <long>(_mix64(state) % <u64>(w_total - w + 1))
                state += _GOLDEN
                y0 = <long>(_mix64(state) % <u64>(h_total - h + 1))
                newly = 0
                for y in range(y0, y0 + h):
                    for x in range(x0, x0 + w):
                        if pixels[y, x, 0] or pixels[y, x, 1] or pixels[y, x, 2]:
                            newly += 1
                            pixels[y, x, 0] = 0
                            pixels[y, x, 1] = 0
                            pixels[y, x, 2] = 0
                black += newly
            else:
                state += _GOLDEN
                r = 1 + <long>(_mix64(state) % <u64>r_cap)
                state += _GOLDEN
                cx = <long>(_mix64(state) % <u64>w_total)
                state += _GOLDEN
                cy = <long>(_mix64(state) % <u64>h_total)
                x_lo = cx - r
                if x_lo < 0: x_lo = 0
                x_hi = cx + r
                if x_hi > w_total - 1: x_hi = w_total - 1
                y_lo = cy - r
                if y_lo < 0: y_lo = 0
                y_hi = cy + r
                if y_hi > h_total - 1: y_hi = h_total - 1
                rr = r * r
                newly = 0
                for y in range(y_lo, y_hi + 1):
                    dy = y - cy
                    for x in range(x_lo, x_hi + 1):
                        dx = x - cx
                        if dx * dx + dy * dy <= rr:
                            if pixels[y, x, 0] or pixels[y, x, 1] or pixels[y, x, 2]:
                                newly += 1
                            pixels[y, x, 0] = 0
                            pixels[y, x, 1] = 0
                            pixels[y, x, 2] = 0
                black += newly
    return black
