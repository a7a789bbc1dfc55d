"""Pure numpy/Python implementations of the masking hot loops.

The compiled backend (_cykernels) implements the same draw protocol with
the same SplitMix64 stream; outputs are byte-identical between backends.
Any change to the draw order here must be mirrored there.
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

BACKEND = "python"


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def sample_positions(n: int, k: int, seed: int) -> np.ndarray:
    """First k entries of a seeded Fisher-Yates shuffle of range(n).

    The raw SplitMix64 stream is counter-based, so the k draws are
    generated vectorized; only the swaps run as a Python loop.
    """
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k} n={n}")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    steps = np.arange(1, k + 1, dtype=np.uint64)
    raw = _mix64_vec(np.uint64(seed) + steps * _GOLDEN)
    bounds = np.arange(n, n - k, -1, dtype=np.uint64)
    offsets = (raw % bounds).astype(np.int64).tolist()
    positions = list(range(n))
    for j, off in enumerate(offsets):
        i = j + off
        positions[j], positions[i] = positions[i], positions[j]
    return np.asarray(positions[:k], dtype=np.int64)


def paint_shapes(pixels: np.ndarray, need: float, seed: int,
                 area_cap: int, r_cap: int, black_start: int) -> int:
    """Paint random rectangles/circles black until ``black >= need``.

    pixels is (H, W, 3) uint8, modified in place. Returns the final count
    of black pixels. Draw protocol per shape (SplitMix64 stream):

        kind = next() % 2            (only when r_cap >= 1, else rect)
        rect:   w  = 1 + next() % min(W, area_cap)
                h  = 1 + next() % min(H, area_cap // w)
                x0 = next() % (W - w + 1)
                y0 = next() % (H - h + 1)
        circle: r  = 1 + next() % r_cap
                cx = next() % W ; cy = next() % H   (clipped to the frame)
    """
    h_total, w_total = pixels.shape[:2]
    state = int(seed) & 0xFFFFFFFFFFFFFFFF

    def draw() -> int:
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        return z ^ (z >> 31)

    black = black_start
    max_w = min(w_total, area_cap)
    while black < need:
        kind = draw() % 2 if r_cap >= 1 else 0
        if kind == 0:
            w = 1 + draw() % max_w
            h_cap = min(h_total, area_cap // w)
            h = 1 + draw() % h_cap
            x0 = draw() % (w_total - w + 1)
            y0 = draw() % (h_total - h + 1)
            region = pixels[y0:y0 + h, x0:x0 + w]
            newly = int(np.count_nonzero(region.any(axis=2)))
            region[:] = 0
        else:
            r = 1 + draw() % r_cap
            cx = draw() % w_total
            cy = draw() % h_total
            x_lo, x_hi = max(0, cx - r), min(w_total - 1, cx + r)
            y_lo, y_hi = max(0, cy - r), min(h_total - 1, cy + r)
            ys = np.arange(y_lo, y_hi + 1)[:, None] - cy
            xs = np.arange(x_lo, x_hi + 1)[None, :] - cx
            inside = (xs * xs + ys * ys) <= r * r
            region = pixels[y_lo:y_hi + 1, x_lo:x_hi + 1]
            newly = int(np.count_nonzero(region.any(axis=2) & inside))
            region[inside] = 0
        black += newly
    return black
