"""Command-line entry points for the task runners.

Exit codes: 0 success, 2 input validation failure, 3 provider failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import InputError, ProviderError
from .manifest import load_config, load_manifest
from . import pipeline


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", required=True, help="dataset manifest JSON")
    common.add_argument("--config", default=None, help="run config JSON")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="run seed (64-bit)")
    common.add_argument(
        "--labels", default=None,
        help="comma-separated class-index subset to use as candidates",
    )
    common.add_argument("--no-charts", action="store_true", help="skip SVG chart output")
    return common


def _parse_labels(text: str | None):
    if text is None:
        return None
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad --labels value {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="displab",
        description="label-dispersion harness over precomputed embeddings",
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="task", required=True)

    sub.add_parser("task1", parents=[common], help="classify frames, report dispersion")

    p2 = sub.add_parser("task2", parents=[common], help="random masking sweep")
    p2.add_argument("--percents", default="10,30,50",
                    help="comma-separated masking percentages (0-100)")
    p2.add_argument("--strategy", choices=("pixel", "shape"), default=None)
    p2.add_argument("--provider-cmd", default=None,
                    help="command run with the request dir to produce embeddings")
    p2.add_argument("--provider-timeout", type=float, default=None)

    p3 = sub.add_parser("task3", parents=[common], help="feature-specific masking")
    p3.add_argument("--mode", choices=("one", "all"), default=None)
    p3.add_argument("--provider-cmd", default=None)
    p3.add_argument("--provider-timeout", type=float, default=None)

    p4 = sub.add_parser("task4", parents=[common], help="isolation masking")
    p4.add_argument("--provider-cmd", default=None)
    p4.add_argument("--provider-timeout", type=float, default=None)

    p5 = sub.add_parser("task5", help="class-noise training and evaluation")
    sub5 = p5.add_subparsers(dest="subtask", required=True)
    sub5.add_parser("train", parents=[common], help="learn the noise dictionary")
    p5e = sub5.add_parser("eval", parents=[common], help="paired baseline/noise evaluation")
    p5e.add_argument("--dict", required=True, help="noise dictionary EMB1 path")

    return parser


def _config_from_args(args) -> "pipeline.RunConfig":
    overrides = {
        "seed": args.seed,
        "label_subset": _parse_labels(args.labels),
    }
    if args.out is not None:
        overrides["out_dir"] = Path(args.out)
    if getattr(args, "provider_cmd", None) is not None:
        overrides["provider_cmd"] = args.provider_cmd
    if getattr(args, "provider_timeout", None) is not None:
        overrides["provider_timeout"] = args.provider_timeout
    if getattr(args, "strategy", None) is not None:
        overrides["mask_strategy"] = args.strategy
    if getattr(args, "mode", None) is not None:
        overrides["task3_mode"] = args.mode
    if args.no_charts:
        overrides["write_charts"] = False
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = load_manifest(args.manifest)
        config = _config_from_args(args)
        if args.task == "task1":
            report = pipeline.run_task1(manifest, config)
            print(f"task1: {len(report.records)} frames -> {report.out_dir}")
        elif args.task == "task2":
            percents = [float(x) / 100.0 for x in args.percents.split(",") if x.strip()]
            reports = pipeline.run_task2(manifest, config, percents=percents)
            for rep in reports:
                print(f"task2 {rep.tag}: {len(rep.records)} frames -> {rep.out_dir}")
        elif args.task == "task3":
            reports = pipeline.run_task3(manifest, config)
            for rep in reports:
                print(f"task3 {rep.tag}: {len(rep.records)} frames -> {rep.out_dir}")
        elif args.task == "task4":
            report = pipeline.run_task4(manifest, config)
            print(f"task4: {len(report.records)} frames -> {report.out_dir}")
        elif args.task == "task5" and args.subtask == "train":
            noise, trace, path = pipeline.run_task5_train(manifest, config)
            print(f"task5 train: {len(noise.classes())} classes, "
                  f"final mean loss {trace[-1]:.6f} -> {path}")
        elif args.task == "task5" and args.subtask == "eval":
            baseline, noise_aware, deltas = pipeline.run_task5_eval(
                manifest, config, Path(args.dict)
            )
            for cls in sorted(deltas):
                d = deltas[cls]
                print(
                    f"task5 eval class {cls}: distinct {d['distinct_labels']:+d}, "
                    f"entropy {d['entropy_bits']:+.4f} bits"
                )
        else:  # pragma: no cover - argparse enforces choices
            raise InputError(f"unknown task {args.task!r}")
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 3
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
