"""Frame extraction from videos and image directories.

Input layout: one subdirectory per class named ``<index>_<anything>``,
containing video files and/or images. Videos are sampled uniform-stride;
images pass through byte-preserved. Output: PNG frames named
``<source_stem>_f<k>.png`` plus a manifest-fragment JSON listing
(frame_id, class_index, image path) rows in the harness's schema.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

VIDEO_SUFFIXES = {".avi", ".mp4", ".mov", ".mkv", ".webm"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass
class ExtractionJob:
    input_dir: Path
    output_dir: Path
    frames_per_video: int = 1
    errors: list = field(default_factory=list)

    def __post_init__(self):
        if self.frames_per_video < 1:
            raise ValueError("frames_per_video must be >= 1")


def _class_dirs(root: Path):
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        head = sub.name.split("_", 1)[0]
        try:
            index = int(head)
        except ValueError:
            continue
        yield index, sub


def _sample_indices(total: int, k: int) -> list[int]:
    k = min(k, total)
    return [(i * total) // k for i in range(k)]


def extract_video_frames(video: Path, out_dir: Path, frames_per_video: int):
    """Uniform-stride sample; returns the written PNG paths."""
    cap = cv2.VideoCapture(str(video))
    try:
        total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if not cap.isOpened() or total <= 0:
            raise IOError(f"cannot read video {video}")
        wanted = _sample_indices(total, frames_per_video)
        written = []
        for k, idx in enumerate(wanted):
            cap.set(cv2.CAP_PROP_POS_FRAMES, idx)
            ok, frame_bgr = cap.read()
            if not ok:
                raise IOError(f"cannot decode frame {idx} of {video}")
            rgb = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2RGB)
            out = out_dir / f"{video.stem}_f{k}.png"
            Image.fromarray(rgb, mode="RGB").save(out, format="PNG")
            written.append(out)
        return written
    finally:
        cap.release()


def extract_frames(job: ExtractionJob) -> dict:
    """Walk the class directories, emit PNGs and the manifest fragment.

    Unreadable sources append an error entry and the job continues."""
    rows = []
    out_frames = job.output_dir / "frames"
    out_frames.mkdir(parents=True, exist_ok=True)
    for class_index, sub in _class_dirs(job.input_dir):
        for source in sorted(sub.iterdir()):
            suffix = source.suffix.lower()
            try:
                if suffix in VIDEO_SUFFIXES:
                    written = extract_video_frames(source, out_frames, job.frames_per_video)
                elif suffix in IMAGE_SUFFIXES:
                    target = out_frames / f"{source.stem}_f0.png"
                    if suffix == ".png":
                        shutil.copyfile(source, target)  # byte-preserved
                    else:
                        Image.open(source).convert("RGB").save(target, format="PNG")
                    written = [target]
                else:
                    continue
            except Exception as exc:
                job.errors.append({"source": str(source), "error": str(exc)})
                continue
            for path in written:
                rows.append({
                    "frame_id": path.stem,
                    "class_index": class_index,
                    "image": str(path.relative_to(job.output_dir)),
                })
    fragment = {"format": "displab-manifest-fragment/1", "frames": rows}
    frag_path = job.output_dir / "manifest_fragment.json"
    frag_path.write_text(json.dumps(fragment, indent=2) + "\n", encoding="utf-8")
    if job.errors:
        (job.output_dir / "extract_errors.json").write_text(
            json.dumps(job.errors, indent=2) + "\n", encoding="utf-8"
        )
    return fragment


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
