#!/usr/bin/env python3
"""Benchmark the compiled masking kernels against the pure-Python backend.

Usage: python benchmarks/bench_kernels.py [--frames 20] [--size 320x240]
"""

import argparse
import math
import time

import numpy as np

from displab._kernels import backends


def _r_cap(area_cap):
    def count(r):
        return sum(2 * math.isqrt(r * r - dy * dy) + 1 for dy in range(-r, r + 1))

    r = 0
    while count(r + 1) <= area_cap:
        r += 1
    return r


def bench_pixels(backend, frames, w, h, p):
    total = w * h
    k = int(p * total)
    start = time.perf_counter()
    for i in range(frames):
        backend.sample_positions(total, k, 1000 + i)
    return (time.perf_counter() - start) / frames


def bench_shapes(backend, frames, w, h, p):
    rng = np.random.default_rng(7)
    base = rng.integers(1, 256, size=(h, w, 3), dtype=np.uint8)
    area_cap = max(1, int(0.05 * w * h))
    r_cap = _r_cap(area_cap)
    start = time.perf_counter()
    for i in range(frames):
        img = base.copy()
        backend.paint_shapes(img, p * w * h, 2000 + i, area_cap, r_cap, 0)
    return (time.perf_counter() - start) / frames


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=20, help="frames per measurement")
    parser.add_argument("--size", default="320x240", help="frame size WxH")
    args = parser.parse_args()
    w, h = (int(x) for x in args.size.lower().split("x"))

    found = backends()
    if "compiled" not in found:
        print("compiled backend not built; showing pure-Python timings only")

    print(f"frame {w}x{h}, {args.frames} frames per cell; times are ms/frame\n")
    header = f"{'kernel':<28}" + "".join(f"{name:>12}" for name in found)
    print(header)
    print("-" * len(header))
    rows = [
        ("pixel sample p=0.10", bench_pixels, 0.10),
        ("pixel sample p=0.50", bench_pixels, 0.50),
        ("shape paint  p=0.10", bench_shapes, 0.10),
        ("shape paint  p=0.50", bench_shapes, 0.50),
    ]
    for label, fn, p in rows:
        cells = {name: fn(mod, args.frames, w, h, p) * 1e3 for name, mod in found.items()}
        line = f"{label:<28}" + "".join(f"{cells[name]:>12.3f}" for name in found)
        if "compiled" in cells and "python" in cells and cells["compiled"] > 0:
            line += f"   ({cells['python'] / cells['compiled']:.1f}x)"
        print(line)


if __name__ == "__main__":
    main()
