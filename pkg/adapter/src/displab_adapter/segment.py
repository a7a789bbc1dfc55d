"""Segmentation backends producing the harness's 8-bit 0/255 mask PNGs.

``region``
    Offline color-similarity region growing from prompt points: a BFS
    flood fill that admits neighbouring pixels within a color tolerance
    of the seed points' mean color. Deterministic and dependency-free;
    intended for fixtures and images with coherent regions.

``sam``
    The pretrained promptable segmenter via transformers, when its
    weights are available.

Each named feature gets one mask; ``emit_keep`` additionally writes the
complement of the union as the ``keep`` mask for isolation masking, so
mask/keep duality holds pixel-exactly by construction.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path

import numpy as np
from PIL import Image


class SegmenterUnavailable(RuntimeError):
    pass


def _check_points(points, width, height):
    if not points:
        raise ValueError("empty point list")
    for x, y in points:
        if not (0 <= x < width and 0 <= y < height):
            raise ValueError(f"prompt point ({x}, {y}) outside {width}x{height} frame")


def region_grow(pixels: np.ndarray, points, tolerance: float = 30.0) -> np.ndarray:
    """Binary mask of pixels connected to the prompt points within a
    Euclidean RGB tolerance of the seeds' mean color."""
    height, width = pixels.shape[:2]
    _check_points(points, width, height)
    img = pixels.astype(np.int32)
    seed_color = np.mean([img[y, x] for x, y in points], axis=0)
    within = np.sqrt(((img - seed_color) ** 2).sum(axis=2)) <= tolerance
    mask = np.zeros((height, width), dtype=np.uint8)
    queue = deque()
    for x, y in points:
        if within[y, x] and not mask[y, x]:
            mask[y, x] = 1
            queue.append((x, y))
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height and not mask[ny, nx] and within[ny, nx]:
                mask[ny, nx] = 1
                queue.append((nx, ny))
    return mask


class RegionSegmenter:
    name = "region-grow"
    version = "1"

    def __init__(self, tolerance: float = 30.0):
        self.tolerance = tolerance

    def segment(self, pixels: np.ndarray, points) -> np.ndarray:
        return region_grow(pixels, points, self.tolerance)


class SamSegmenter:
    name = "sam-vit-base"

    def __init__(self):
        try:
            import torch  # noqa: F401
            from transformers import SamModel, SamProcessor
        except ImportError as exc:
            raise SegmenterUnavailable(f"transformers/torch not installed: {exc}") from exc
        try:
            self._model = SamModel.from_pretrained("facebook/sam-vit-base")
            self._processor = SamProcessor.from_pretrained("facebook/sam-vit-base")
        except Exception as exc:
            raise SegmenterUnavailable(f"cannot load SAM weights: {exc}") from exc
        self.version = getattr(self._model.config, "transformers_version", "unknown")

    def segment(self, pixels: np.ndarray, points) -> np.ndarray:
        import torch

        height, width = pixels.shape[:2]
        _check_points(points, width, height)
        image = Image.fromarray(pixels, mode="RGB")
        inputs = self._processor(
            image, input_points=[[list(p) for p in points]], return_tensors="pt"
        )
        with torch.no_grad():
            outputs = self._model(**inputs)
        masks = self._processor.image_processor.post_process_masks(
            outputs.pred_masks.cpu(),
            inputs["original_sizes"].cpu(),
            inputs["reshaped_input_sizes"].cpu(),
        )
        best = int(outputs.iou_scores[0, 0].argmax())
        return masks[0][0, best].numpy().astype(np.uint8)


def get_segmenter(name: str, tolerance: float = 30.0):
    if name in ("region", RegionSegmenter.name):
        return RegionSegmenter(tolerance)
    if name in ("sam", SamSegmenter.name):
        return SamSegmenter()
    raise SegmenterUnavailable(f"unknown segmenter {name!r}")


def save_mask(bits: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(bits.astype(np.uint8) * np.uint8(255), mode="L").save(path, format="PNG")


def segment_features(segmenter, pixels: np.ndarray, features: dict, out_dir,
                     stem: str, emit_keep: bool = False) -> dict:
    """Produce one mask PNG per named feature (``features`` maps name ->
    point list), plus the complement ``keep`` mask when requested.
    Returns {name: path}."""
    names = list(features)
    if len(set(names)) != len(names):
        raise ValueError("feature names must be unique")
    out_dir = Path(out_dir)
    written = {}
    union = np.zeros(pixels.shape[:2], dtype=np.uint8)
    for name, points in features.items():
        bits = segmenter.segment(pixels, points)
        union |= bits
        path = out_dir / f"{stem}_{name}.png"
        save_mask(bits, path)
        written[name] = path
    if emit_keep:
        keep = (np.uint8(1) - union).astype(np.uint8)
        path = out_dir / f"{stem}_keep.png"
        save_mask(keep, path)
        written["keep"] = path
    return written
