"""displab-adapter command line: extract, embed, segment, serve.

Exit codes: 0 success, 2 bad input, 3 encoder/segmenter load failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .emb1io import write_emb1
from .encoders import EncoderUnavailable, get_encoder
from .frames import ExtractionJob, extract_frames, load_image
from .provider import serve
from .segment import SegmenterUnavailable, get_segmenter, segment_features

DEFAULT_TEMPLATE = "a photo of a person doing {class}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="displab-adapter",
                                     description="encoder/segmenter adapter for displab")
    sub = parser.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("extract", help="extract frames from videos/images")
    pe.add_argument("--input", required=True, help="root dir with <index>_<name> class subdirs")
    pe.add_argument("--out", required=True)
    pe.add_argument("--frames-per-video", type=int, default=1)

    pm = sub.add_parser("embed", help="embed images or class prompts to EMB1")
    src = pm.add_mutually_exclusive_group(required=True)
    src.add_argument("--images", help="directory of PNG frames (ids = file stems)")
    src.add_argument("--texts", help="catalog TSV (index<TAB>name per line)")
    pm.add_argument("--out", required=True, help="output EMB1 path")
    pm.add_argument("--encoder", default="hash512",
                    help="encoder backend (hash512 | clip-vit-base-patch32)")
    pm.add_argument("--template", default=DEFAULT_TEMPLATE,
                    help="prompt template with a {class} placeholder")

    ps = sub.add_parser("segment", help="produce feature masks from prompt points")
    ps.add_argument("--frame", required=True, help="input PNG")
    ps.add_argument("--points", required=True,
                    help="JSON file: {feature_name: [[x, y], ...], ...}")
    ps.add_argument("--out", required=True, help="output directory")
    ps.add_argument("--segmenter", default="region", help="region | sam")
    ps.add_argument("--tolerance", type=float, default=30.0)
    ps.add_argument("--keep", action="store_true",
                    help="also emit the complement 'keep' mask")

    pv = sub.add_parser("serve", help="serve one provider-exchange request directory")
    pv.add_argument("--request-dir", required=True)
    pv.add_argument("--encoder", default="hash512")

    return parser


def _cmd_extract(args) -> int:
    job = ExtractionJob(Path(args.input), Path(args.out),
                        frames_per_video=args.frames_per_video)
    fragment = extract_frames(job)
    print(f"extracted {len(fragment['frames'])} frames -> {args.out}")
    if job.errors:
        print(f"{len(job.errors)} source(s) failed; see extract_errors.json", file=sys.stderr)
    return 0


def _cmd_embed(args) -> int:
    encoder = get_encoder(args.encoder)
    ids, rows = [], []
    if args.images:
        frames = sorted(Path(args.images).glob("*.png"))
        if not frames:
            print(f"error: no PNG frames in {args.images}", file=sys.stderr)
            return 2
        for png in frames:
            ids.append(png.stem)
            rows.append(encoder.embed_image(load_image(png)))
    else:
        if "{class}" not in args.template:
            print("error: --template must contain {class}", file=sys.stderr)
            return 2
        for line in Path(args.texts).read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            index, name = line.split("\t", 1)
            ids.append(index.strip())
            prompt = args.template.replace("{class}", name.strip())
            rows.append(encoder.embed_text(prompt))
    header = dict(encoder.lock_record())
    if args.texts:
        header["prompt_template"] = args.template
    vectors = np.stack(rows) if rows else np.zeros((0, encoder.dim), np.float32)
    write_emb1(Path(args.out), vectors, ids, header=header)
    print(f"embedded {len(ids)} item(s) at dim {encoder.dim} -> {args.out}")
    return 0


def _cmd_segment(args) -> int:
    segmenter = get_segmenter(args.segmenter, tolerance=args.tolerance)
    features = json.loads(Path(args.points).read_text(encoding="utf-8"))
    if not isinstance(features, dict) or not features:
        print("error: points file must map feature names to point lists", file=sys.stderr)
        return 2
    pixels = load_image(args.frame)
    written = segment_features(
        segmenter, pixels,
        {name: [tuple(p) for p in pts] for name, pts in features.items()},
        Path(args.out), Path(args.frame).stem, emit_keep=args.keep,
    )
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0


def _cmd_serve(args) -> int:
    encoder = get_encoder(args.encoder)
    response = serve(Path(args.request_dir), encoder)
    print(f"served -> {response}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "extract": _cmd_extract,
        "embed": _cmd_embed,
        "segment": _cmd_segment,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except (EncoderUnavailable, SegmenterUnavailable) as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
