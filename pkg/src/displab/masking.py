"""Frame perturbations: random pixel masking, random shape masking,
feature masking, and isolation masking.

All maskers blacken pixels (set them to (0,0,0)); nothing is inpainted
and no other pixel values are ever introduced. Random maskers take an
explicit 64-bit seed and are reproducible bit-for-bit across runs,
platforms, and kernel backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .frames import ImageFrame, SegmentationMask

__all__ = [
    "MaskSpec",
    "mask_random_pixels",
    "mask_random_shapes",
    "apply_feature_mask",
    "apply_isolation_mask",
    "black_fraction",
    "DEFAULT_MAX_SHAPE_FRACTION",
]

DEFAULT_MAX_SHAPE_FRACTION = 0.05

RANDOM_STRATEGIES = ("random_pixel", "random_shape")
STRATEGIES = RANDOM_STRATEGIES + ("feature", "isolation")


@dataclass(frozen=True)
class MaskSpec:
    """Declarative description of one perturbation.

    Random strategies require ``p`` and use ``seed``; feature/isolation
    strategies require at least one mask reference.
    """

    strategy: str
    p: float | None = None
    mask_refs: tuple[str, ...] = field(default_factory=tuple)
    seed: int = 0
    max_shape_fraction: float = DEFAULT_MAX_SHAPE_FRACTION

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy in RANDOM_STRATEGIES:
            if self.p is None:
                raise ValueError(f"strategy {self.strategy!r} requires fraction p")
            if not (0.0 <= self.p <= 1.0):
                raise ValueError(f"p must be in [0,1], got {self.p}")
        elif not self.mask_refs:
            raise ValueError(f"strategy {self.strategy!r} requires at least one mask reference")


def black_fraction(frame: ImageFrame) -> float:
    """Fraction of pixels equal to (0,0,0)."""
    nonblack = int(np.count_nonzero(frame.pixels.any(axis=2)))
    total = frame.width * frame.height
    return (total - nonblack) / total


def _black_count(pixels: np.ndarray) -> int:
    total = pixels.shape[0] * pixels.shape[1]
    return total - int(np.count_nonzero(pixels.any(axis=2)))


def mask_random_pixels(frame: ImageFrame, p: float, seed: int) -> ImageFrame:
    """Blacken exactly floor(p * W * H) distinct pixel positions.

    Positions are sampled without replacement via a seeded partial
    Fisher-Yates shuffle; the input frame is not modified.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0,1], got {p}")
    total = frame.width * frame.height
    k = math.floor(p * total)
    out = frame.pixels.copy()
    if k > 0:
        positions = _kernels.sample_positions(total, k, seed)
        flat = out.reshape(total, 3)
        flat[positions] = 0
    return ImageFrame(out)


def _circle_pixel_count(r: int) -> int:
    return sum(2 * math.isqrt(r * r - dy * dy) + 1 for dy in range(-r, r + 1))


def _max_radius(area_cap: int) -> int:
    r = 0
    while _circle_pixel_count(r + 1) <= area_cap:
        r += 1
    return r


def mask_random_shapes(frame: ImageFrame, p: float, seed: int,
                       max_shape_fraction: float = DEFAULT_MAX_SHAPE_FRACTION):
    """Paint seeded random rectangles and filled circles black until the
    frame's black fraction first reaches or exceeds p.

    Returns (masked frame, achieved fraction). Every single shape covers
    at most ``max_shape_fraction`` of the frame area, so for frames whose
    pre-existing black fraction does not already exceed the target the
    achieved fraction lies in [p, min(1, p + max_shape_fraction)] (plus at
    most one pixel of slack when the frame is smaller than
    1/max_shape_fraction pixels).
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0,1], got {p}")
    if not (0.0 < max_shape_fraction <= 1.0):
        raise ValueError(f"max_shape_fraction must be in (0,1], got {max_shape_fraction}")
    total = frame.width * frame.height
    out = frame.pixels.copy()
    area_cap = max(1, math.floor(max_shape_fraction * total))
    r_cap = _max_radius(area_cap)
    need = p * total
    black = _kernels.paint_shapes(out, need, seed, area_cap, r_cap, _black_count(out))
    return ImageFrame(out), black / total


def apply_feature_mask(frame: ImageFrame, masks) -> ImageFrame:
    """Blacken every pixel covered by ANY of the supplied masks (union)."""
    masks = list(masks)
    if not masks:
        raise ValueError("feature masking requires at least one mask")
    union = np.zeros((frame.height, frame.width), dtype=bool)
    for mask in masks:
        if not isinstance(mask, SegmentationMask):
            mask = SegmentationMask(np.asarray(mask))
        if not mask.matches(frame):
            raise ValueError(
                f"mask {mask.width}x{mask.height} does not match frame {frame.width}x{frame.height}"
            )
        union |= mask.bits.astype(bool)
    out = frame.pixels.copy()
    out[union] = 0
    return ImageFrame(out)


def apply_isolation_mask(frame: ImageFrame, keep: SegmentationMask) -> ImageFrame:
    """Blacken everything the keep mask does not cover.

    Equivalent to apply_feature_mask(frame, [keep.complement()]).
    """
    if not keep.matches(frame):
        raise ValueError(
            f"mask {keep.width}x{keep.height} does not match frame {frame.width}x{frame.height}"
        )
    out = frame.pixels.copy()
    out[~keep.bits.astype(bool)] = 0
    return ImageFrame(out)
