"""Pixel frames and segmentation masks, plus their PNG file formats.

Frames are 8-bit RGB; masks are binary grids read from 8-bit grayscale
PNGs where value >= 128 means "in the region" (writers emit only 0/255).
"""

from __future__ import annotations

from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError

__all__ = [
    "ImageFrame",
    "SegmentationMask",
    "load_frame",
    "save_frame",
    "load_mask",
    "save_mask",
]


@dataclass(frozen=True)
class ImageFrame:
    """Dense RGB pixel grid; ``pixels`` has shape (height, width, 3), uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise ValueError(f"pixels must be (H, W, 3) uint8, got {arr.shape} {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("frame must have positive dimensions")
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "ImageFrame":
        return ImageFrame(self.pixels.copy())

    def same_bytes(self, other: "ImageFrame") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class SegmentationMask:
    """Binary region grid aligned to a frame; ``bits`` has shape (H, W) in {0,1}."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValueError(f"mask bits must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("mask must have positive dimensions")
        arr = arr.astype(np.uint8, copy=False)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask bits must be 0 or 1")
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def complement(self) -> "SegmentationMask":
        return SegmentationMask(np.uint8(1) - self.bits)

    def matches(self, frame: ImageFrame) -> bool:
        return self.bits.shape == frame.pixels.shape[:2]


def load_frame(path) -> ImageFrame:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load frame {path}: {exc}") from exc
    return ImageFrame(arr)


def save_frame(frame: ImageFrame, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame.pixels, mode="RGB").save(path, format="PNG")


def frame_png_bytes(frame: ImageFrame) -> bytes:
    buf = BytesIO()
    Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_mask(path) -> SegmentationMask:
    try:
        with Image.open(path) as img:
            gray = img.convert("L")
            arr = np.asarray(gray, dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot load mask {path}: {exc}") from exc
    return SegmentationMask((arr >= 128).astype(np.uint8))


def save_mask(mask: SegmentationMask, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.bits * np.uint8(255), mode="L").save(path, format="PNG")
