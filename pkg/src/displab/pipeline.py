"""Task runners: bind manifests, masking, classification, noise learning,
and reporting into reproducible commands.

Every runner returns the in-memory report objects and writes a bundle
under the configured output directory: ``report.json`` (structured, full
precision, embedding the run config and input digests), ``report.rows.txt``
(the tab-separated table layout), and per-class SVG charts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__ as _version
from .analytics import (
    FrequencyHistogram,
    build_fhc,
    dispersion_metrics,
    render_chart,
    render_report,
)
from .emb1 import EmbeddingTable
from .embedding import PredictionRecord, cosine_scores, zero_shot_classify
from .errors import InputError
from .frames import load_frame, load_mask
from .manifest import DatasetManifest, RunConfig
from .masking import apply_feature_mask, apply_isolation_mask, mask_random_pixels, mask_random_shapes
from .noise import (
    FeatureStore,
    NoiseDictionary,
    load_noise_dictionary,
    noise_aware_classify,
    save_noise_dictionary,
    train_noise_dictionary,
)
from .provider import fetch_embeddings
from .rng import SplitMix64, derive_seed

__all__ = [
    "ClassReportSet",
    "run_task1",
    "run_task2",
    "run_task3",
    "run_task4",
    "run_task5_train",
    "run_task5_eval",
    "split_frames",
]


@dataclass
class ClassReportSet:
    """Aligned per-class histograms and metrics for one perturbation tag."""

    tag: str
    records: list[PredictionRecord]
    histograms: list[FrequencyHistogram]
    metrics: list
    out_dir: Path | None = None

    def histogram_for(self, ground_truth: int) -> FrequencyHistogram:
        for h in self.histograms:
            if h.ground_truth == ground_truth:
                return h
        raise KeyError(f"no histogram for class {ground_truth}")

    def metrics_for(self, ground_truth: int):
        for h, m in zip(self.histograms, self.metrics):
            if h.ground_truth == ground_truth:
                return m
        raise KeyError(f"no metrics for class {ground_truth}")

    def ground_truth_fraction(self, ground_truth: int) -> float:
        """Fraction of this class's records predicted as the class itself."""
        h = self.histogram_for(ground_truth)
        for e in h.entries:
            if e.predicted == ground_truth:
                return e.count / h.total
        return 0.0


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def input_digests(manifest: DatasetManifest, extra: list[Path] = ()) -> dict[str, str]:
    digests = {}
    for path in list(manifest.referenced_files()) + list(extra):
        path = Path(path)
        if path.exists():
            digests[str(path)] = _sha256(path)
    return digests


def _candidate_indices(manifest: DatasetManifest, config: RunConfig) -> list[int]:
    if config.label_subset is not None:
        for idx in config.label_subset:
            if idx not in manifest.catalog:
                raise InputError(f"label_subset index {idx} not in catalog")
        return sorted(config.label_subset)
    return manifest.catalog.indices()


def _text_candidates(manifest: DatasetManifest, config: RunConfig):
    if manifest.text_embeddings is None:
        raise InputError("manifest has no text_embeddings table")
    table = EmbeddingTable.load(manifest.text_embeddings)
    candidates = []
    missing = []
    for idx in _candidate_indices(manifest, config):
        if str(idx) in table:
            candidates.append((idx, table.get(str(idx))))
        else:
            missing.append(idx)
    if missing:
        raise InputError(f"text embeddings missing for class indices {missing}")
    return candidates


def _frame_embeddings(manifest: DatasetManifest, frames) -> dict[str, np.ndarray]:
    """Resolve precomputed embeddings for the given frames; errors list
    every frame id that has none."""
    shared = None
    if manifest.image_embeddings is not None:
        shared = EmbeddingTable.load(manifest.image_embeddings)
    per_frame_tables: dict[Path, EmbeddingTable] = {}
    out = {}
    missing = []
    for fr in frames:
        vec = None
        if fr.embedding is not None:
            table = per_frame_tables.get(fr.embedding)
            if table is None:
                table = EmbeddingTable.load(fr.embedding)
                per_frame_tables[fr.embedding] = table
            if fr.frame_id in table:
                vec = table.get(fr.frame_id)
        if vec is None and shared is not None and fr.frame_id in shared:
            vec = shared.get(fr.frame_id)
        if vec is None:
            missing.append(fr.frame_id)
        else:
            out[fr.frame_id] = vec
    if missing:
        raise InputError(f"no embeddings for {len(missing)} frame(s): {missing[:10]}")
    return out


def _classify_frames(frames, vectors, candidates, config: RunConfig, tag: str,
                     noise: NoiseDictionary | None = None):
    records = []
    similarities = {} if config.include_similarities else None
    for fr in frames:
        vec = vectors[fr.frame_id]
        if noise is None:
            predicted, dist = zero_shot_classify(vec, candidates, config.classifier)
        else:
            predicted, dist = noise_aware_classify(vec, candidates, noise, config.classifier)
        records.append(
            PredictionRecord(
                frame_id=fr.frame_id,
                ground_truth=fr.class_index,
                predicted=predicted,
                confidence=dist[predicted],
                perturbation_tag=tag,
            )
        )
        if similarities is not None:
            similarities[fr.frame_id] = cosine_scores(vec, candidates)
    return records, similarities


def _aggregate(records, tag: str) -> ClassReportSet:
    by_class: dict[int, list] = {}
    for rec in records:
        by_class.setdefault(rec.ground_truth, []).append(rec)
    histograms = [build_fhc(by_class[gt], gt) for gt in sorted(by_class)]
    metrics = [dispersion_metrics(h) for h in histograms]
    return ClassReportSet(tag, records, histograms, metrics)


def _write_bundle(out_dir: Path, report: ClassReportSet, manifest: DatasetManifest,
                  config: RunConfig, metadata: dict, similarities=None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "tool": {"name": "displab", "version": _version},
        "task": metadata.get("task"),
        "tag": report.tag,
        "seed": config.seed,
        "config": config.to_dict(),
        "prompt_template": manifest.prompt_template,
        "inputs": metadata.get("inputs", {}),
    }
    meta.update({k: v for k, v in metadata.items() if k not in ("task", "inputs")})
    if similarities:
        meta["similarities"] = {
            fid: {str(c): s for c, s in scores.items()} for fid, scores in similarities.items()
        }
    names = manifest.catalog
    (out_dir / "report.json").write_bytes(
        render_report(report.histograms, report.metrics, "structured", names, meta)
    )
    (out_dir / "report.rows.txt").write_bytes(
        render_report(report.histograms, report.metrics, "rows", names)
    )
    if config.write_charts:
        charts = out_dir / "charts"
        charts.mkdir(exist_ok=True)
        for h, m in zip(report.histograms, report.metrics):
            svg, height = render_chart(h, m, names.name_of(h.ground_truth))
            doc = (
                f'<svg xmlns="http://www.w3.org/2000/svg" width="720" height="{height}" '
                f'font-family="sans-serif">\n{svg}\n</svg>\n'
            )
            (charts / f"class_{h.ground_truth}.svg").write_text(doc, encoding="utf-8")
    report.out_dir = out_dir


def run_task1(manifest: DatasetManifest, config: RunConfig) -> ClassReportSet:
    """Classify every frame from its precomputed embedding and aggregate
    one frequency histogram per ground-truth class."""
    candidates = _text_candidates(manifest, config)
    vectors = _frame_embeddings(manifest, manifest.frames)
    records, sims = _classify_frames(manifest.frames, vectors, candidates, config, "none")
    report = _aggregate(records, "none")
    _write_bundle(
        config.out_dir / "task1", report, manifest, config,
        {"task": "task1", "inputs": input_digests(manifest)}, sims,
    )
    return report


def _tag_for_percent(p: float) -> str:
    return f"p{round(p * 100):g}"


def _masked_frame_vectors(manifest: DatasetManifest, config: RunConfig, frames,
                          tag: str, masker, request_dir: Path, provider=None):
    """Embeddings of perturbed frames: manifest-precomputed when available,
    otherwise through the provider exchange. ``masker(frame_record)``
    returns the perturbed ImageFrame plus a metadata dict."""
    precomputed = None
    if tag in manifest.masked_embeddings:
        precomputed = EmbeddingTable.load(manifest.masked_embeddings[tag])
    vectors = {}
    to_request = []
    mask_meta = {}
    for fr in frames:
        if precomputed is not None and fr.frame_id in precomputed:
            vectors[fr.frame_id] = precomputed.get(fr.frame_id)
            continue
        if fr.image is None:
            raise InputError(
                f"frame {fr.frame_id!r} has no image path and no precomputed "
                f"embedding for tag {tag!r}"
            )
        masked, meta = masker(fr)
        mask_meta[fr.frame_id] = meta
        to_request.append((fr.frame_id, masked))
    if to_request:
        table = fetch_embeddings(
            request_dir, to_request,
            provider=provider, provider_cmd=config.provider_cmd,
            timeout=config.provider_timeout,
        )
        for frame_id, _ in to_request:
            vectors[frame_id] = table.get(frame_id)
    return vectors, mask_meta


def run_task2(manifest: DatasetManifest, config: RunConfig,
              percents=None, strategy: str | None = None,
              provider=None) -> list[ClassReportSet]:
    """Random masking sweep: one report per masking percentage.

    ``strategy`` is "pixel" or "shape" (config.mask_strategy by default);
    per-frame masking seeds derive from (seed base, tag, frame_id), where
    the base is the configured mask-spec seed or else the run seed, and
    the derivation is recorded in the report."""
    percents = list(config.percents if percents is None else percents)
    if not percents:
        raise InputError("task2 needs at least one masking percentage")
    strategy = strategy or config.mask_strategy
    if strategy in ("pixel", "random_pixel"):
        strategy = "random_pixel"
    elif strategy in ("shape", "random_shape"):
        strategy = "random_shape"
    else:
        raise InputError(f"unknown task2 strategy {strategy!r}")
    candidates = _text_candidates(manifest, config)
    max_frac = config.mask.max_shape_fraction if config.mask is not None else None
    # per-frame seeds derive from the mask spec's seed when one was
    # configured, else from the run seed; the rule is recorded in reports
    seed_base = config.mask.seed if config.mask is not None else config.seed
    reports = []
    digests = input_digests(manifest)
    for p in percents:
        tag = _tag_for_percent(p)

        def masker(fr, _p=p, _tag=tag):
            frame = load_frame(fr.image)
            seed = derive_seed(seed_base, "mask", _tag, fr.frame_id)
            if strategy == "random_pixel":
                return mask_random_pixels(frame, _p, seed), {"seed": seed}
            kwargs = {} if max_frac is None else {"max_shape_fraction": max_frac}
            masked, achieved = mask_random_shapes(frame, _p, seed, **kwargs)
            return masked, {"seed": seed, "achieved_fraction": achieved}

        request_dir = config.out_dir / "task2" / tag / "provider"
        vectors, mask_meta = _masked_frame_vectors(
            manifest, config, manifest.frames, tag, masker, request_dir, provider
        )
        records, sims = _classify_frames(manifest.frames, vectors, candidates, config, tag)
        report = _aggregate(records, tag)
        _write_bundle(
            config.out_dir / "task2" / tag, report, manifest, config,
            {
                "task": "task2",
                "inputs": digests,
                "masking": {"strategy": strategy, "p": p, "seed_base": seed_base,
                            "seed_rule": "derive_seed(seed_base, 'mask', tag, frame_id)",
                            "frames": mask_meta},
            },
            sims,
        )
        reports.append(report)
    return reports


def _named_masks(frames, exclude_keep: bool = True) -> list[str]:
    names = set()
    for fr in frames:
        names.update(fr.masks)
    if exclude_keep:
        names.discard("keep")
    if not names:
        raise InputError("frames carry no named feature masks")
    missing = [
        (fr.frame_id, name)
        for fr in frames
        for name in sorted(names)
        if name not in fr.masks
    ]
    if missing:
        raise InputError(f"frames lacking masks: {missing[:10]}")
    return sorted(names)


def run_task3(manifest: DatasetManifest, config: RunConfig, mode: str | None = None,
              provider=None) -> list[ClassReportSet]:
    """Feature-specific masking: blacken named non-class regions, either
    one report per feature name or a single union report."""
    mode = mode or config.task3_mode
    if mode not in ("one", "all"):
        raise InputError(f"task3 mode must be 'one' or 'all', got {mode!r}")
    candidates = _text_candidates(manifest, config)
    names = _named_masks(manifest.frames)
    digests = input_digests(manifest)
    groups = [[n] for n in names] if mode == "one" else [names]
    reports = []
    for group in groups:
        tag = "feat:all" if len(group) > 1 else f"feat:{group[0]}"

        def masker(fr, _group=tuple(group)):
            frame = load_frame(fr.image)
            masks = [load_mask(fr.masks[name]) for name in _group]
            return apply_feature_mask(frame, masks), {"masks": list(_group)}

        sub = "all" if len(group) > 1 else f"feat_{group[0]}"
        request_dir = config.out_dir / "task3" / sub / "provider"
        vectors, _ = _masked_frame_vectors(
            manifest, config, manifest.frames, tag, masker, request_dir, provider
        )
        records, sims = _classify_frames(manifest.frames, vectors, candidates, config, tag)
        report = _aggregate(records, tag)
        _write_bundle(
            config.out_dir / "task3" / sub, report, manifest, config,
            {"task": "task3", "inputs": digests, "masked_features": list(group)},
            sims,
        )
        reports.append(report)
    return reports


def run_task4(manifest: DatasetManifest, config: RunConfig, provider=None) -> ClassReportSet:
    """Isolation masking: keep only the designated class-defining region
    (the mask named "keep") and blacken everything else."""
    for fr in manifest.frames:
        if "keep" not in fr.masks:
            raise InputError(f"frame {fr.frame_id!r} has no 'keep' mask for isolation masking")
    candidates = _text_candidates(manifest, config)
    tag = "isolation"

    def masker(fr):
        frame = load_frame(fr.image)
        keep = load_mask(fr.masks["keep"])
        return apply_isolation_mask(frame, keep), {"keep": str(fr.masks["keep"])}

    request_dir = config.out_dir / "task4" / "provider"
    vectors, _ = _masked_frame_vectors(
        manifest, config, manifest.frames, tag, masker, request_dir, provider
    )
    records, sims = _classify_frames(manifest.frames, vectors, candidates, config, tag)
    report = _aggregate(records, tag)
    _write_bundle(
        config.out_dir / "task4", report, manifest, config,
        {"task": "task4", "inputs": input_digests(manifest)}, sims,
    )
    return report


def split_frames(manifest: DatasetManifest, seed: int, fraction: float = 0.8):
    """Seeded per-class train/eval split.

    Depends only on (seed, the set of frame ids): ids are sorted before
    the seeded shuffle, so manifest ordering is irrelevant. Classes with a
    single frame put it in the train side."""
    by_class: dict[int, list] = {}
    for fr in manifest.frames:
        by_class.setdefault(fr.class_index, []).append(fr.frame_id)
    train_ids, eval_ids = set(), set()
    for cls in sorted(by_class):
        ids = sorted(by_class[cls])
        rng = SplitMix64(derive_seed(seed, "split", cls))
        rng.shuffle(ids)
        n = len(ids)
        if n == 1:
            train_ids.add(ids[0])
            continue
        n_train = int(np.floor(fraction * n))
        n_train = min(max(n_train, 1), n - 1)
        train_ids.update(ids[:n_train])
        eval_ids.update(ids[n_train:])
    train = [fr for fr in manifest.frames if fr.frame_id in train_ids]
    evaluation = [fr for fr in manifest.frames if fr.frame_id in eval_ids]
    return train, evaluation


def _train_confusions(frames, vectors, candidates, config):
    records, _ = _classify_frames(frames, vectors, candidates, config, "train-baseline")
    by_class: dict[int, list] = {}
    for rec in records:
        by_class.setdefault(rec.ground_truth, []).append(rec)
    return {gt: build_fhc(recs, gt) for gt, recs in by_class.items()}


def run_task5_train(manifest: DatasetManifest, config: RunConfig):
    """Learn the class-noise dictionary on the train split and persist it
    with a provenance header; returns (dictionary, loss trace, artifact path)."""
    train, _ = split_frames(manifest, config.seed, config.split_fraction)
    if not train:
        raise InputError("empty train split")
    candidates = _text_candidates(manifest, config)
    vectors = _frame_embeddings(manifest, train)
    features: dict[int, list] = {}
    for fr in train:
        features.setdefault(fr.class_index, []).append(vectors[fr.frame_id])
    if len(features) < 2:
        raise InputError("task5 training needs frames of at least 2 classes")
    store = FeatureStore({cls: np.array(rows) for cls, rows in features.items()})
    confusions = _train_confusions(train, vectors, candidates, config)
    cfg = config.resolved_triplet()
    noise, trace = train_noise_dictionary(store, cfg, confusions)
    out_dir = config.out_dir / "task5_train"
    out_dir.mkdir(parents=True, exist_ok=True)
    dict_path = out_dir / "noise.emb1"
    save_noise_dictionary(dict_path, noise, cfg)
    trace_doc = {
        "task": "task5-train",
        "tool": {"name": "displab", "version": _version},
        "seed": config.seed,
        "config": config.to_dict(),
        "triplet": {
            "margin": cfg.margin, "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs, "triplets_per_class": cfg.triplets_per_class,
            "seed": cfg.seed, "noise_init_scale": cfg.noise_init_scale,
        },
        "train_frames": sorted(fr.frame_id for fr in train),
        "loss_trace": trace,
        "inputs": input_digests(manifest),
    }
    (out_dir / "trace.json").write_text(
        json.dumps(trace_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return noise, trace, dict_path


def run_task5_eval(manifest: DatasetManifest, config: RunConfig,
                   dictionary: NoiseDictionary | Path | str):
    """Paired held-out evaluation: baseline vs noise-aware classification,
    plus per-class dispersion deltas (noise minus baseline)."""
    if not isinstance(dictionary, NoiseDictionary):
        dictionary, _ = load_noise_dictionary(dictionary)
    _, evaluation = split_frames(manifest, config.seed, config.split_fraction)
    if not evaluation:
        raise InputError("empty evaluation split")
    candidates = _text_candidates(manifest, config)
    vectors = _frame_embeddings(manifest, evaluation)
    dim = next(iter(vectors.values())).shape[0]
    if dictionary.dim != dim:
        raise InputError(f"noise dictionary dim {dictionary.dim} != embedding dim {dim}")
    base_records, base_sims = _classify_frames(
        evaluation, vectors, candidates, config, "baseline"
    )
    noise_records, noise_sims = _classify_frames(
        evaluation, vectors, candidates, config, "noise", noise=dictionary
    )
    baseline = _aggregate(base_records, "baseline")
    noise_aware = _aggregate(noise_records, "noise")
    deltas = {}
    for h, m in zip(baseline.histograms, baseline.metrics):
        m2 = noise_aware.metrics_for(h.ground_truth)
        deltas[h.ground_truth] = {
            "distinct_labels": m2.distinct_labels - m.distinct_labels,
            "dominant_fraction": m2.dominant_fraction - m.dominant_fraction,
            "entropy_bits": m2.entropy_bits - m.entropy_bits,
        }
    digests = input_digests(manifest)
    out_dir = config.out_dir / "task5_eval"
    _write_bundle(
        out_dir / "without_noise", baseline, manifest, config,
        {"task": "task5-eval", "inputs": digests}, base_sims,
    )
    _write_bundle(
        out_dir / "with_noise", noise_aware, manifest, config,
        {"task": "task5-eval", "inputs": digests}, noise_sims,
    )
    names = manifest.catalog
    paired = {
        "format": "displab-paired-report/1",
        "task": "task5-eval",
        "tool": {"name": "displab", "version": _version},
        "seed": config.seed,
        "config": config.to_dict(),
        "inputs": digests,
        "eval_frames": sorted(fr.frame_id for fr in evaluation),
        "without_noise": json.loads(
            render_report(baseline.histograms, baseline.metrics, "structured", names)
        ),
        "with_noise": json.loads(
            render_report(noise_aware.histograms, noise_aware.metrics, "structured", names)
        ),
        "deltas": {str(cls): d for cls, d in sorted(deltas.items())},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(paired, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return baseline, noise_aware, deltas
