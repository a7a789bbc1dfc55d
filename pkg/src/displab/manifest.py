"""Dataset manifests and run configuration.

Both are JSON documents. Schemas:

Manifest (``displab-manifest/1``)::

    {
      "format": "displab-manifest/1",
      "catalog": [[1, "Apply Eye Makeup"], ...] | "catalog.tsv",
      "prompt_template": "a photo of a person doing {class}",
      "image_embeddings": "frames.emb1",            # optional
      "text_embeddings": "texts.emb1",              # optional
      "masked_embeddings": {"p10": "p10.emb1"},     # optional, per tag
      "frames": [
        {"frame_id": "v1_f0", "class_index": 24,
         "image": "frames/v1_f0.png",               # optional
         "embedding": "extra.emb1",                 # optional per-frame table
         "masks": {"grass": "m/grass.png",          # optional named masks
                   "keep": "m/keep.png"}}
      ]
    }

Relative paths resolve against the manifest file's directory. Every
referenced file must exist at load time; every frame needs an image path
or an embedding reference (a per-frame table or the manifest-level
image_embeddings table).

Run config (``displab-config/1``) carries the classifier, mask, and
triplet settings plus seed/output fields; the CLI can override any of the
scalar fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embedding import ClassCatalog, ClassifierConfig
from .errors import InputError
from .masking import DEFAULT_MAX_SHAPE_FRACTION, MaskSpec
from .noise import TripletConfig
from .rng import derive_seed

__all__ = ["FrameRecord", "DatasetManifest", "RunConfig", "load_manifest", "load_config"]

DEFAULT_PROMPT = "a photo of a person doing {class}"


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    class_index: int
    image: Path | None = None
    embedding: Path | None = None
    masks: dict[str, Path] = field(default_factory=dict)


class DatasetManifest:
    def __init__(self, catalog: ClassCatalog, frames: list[FrameRecord],
                 prompt_template: str = DEFAULT_PROMPT,
                 image_embeddings: Path | None = None,
                 text_embeddings: Path | None = None,
                 masked_embeddings: dict[str, Path] | None = None,
                 source: Path | None = None):
        self.catalog = catalog
        self.frames = list(frames)
        self.prompt_template = prompt_template
        self.image_embeddings = image_embeddings
        self.text_embeddings = text_embeddings
        self.masked_embeddings = dict(masked_embeddings or {})
        self.source = source
        self._validate()

    def _validate(self):
        if "{class}" not in self.prompt_template:
            raise InputError("prompt_template must contain one {class} placeholder")
        if not self.frames:
            raise InputError("manifest lists no frames")
        seen = set()
        for fr in self.frames:
            if fr.frame_id in seen:
                raise InputError(f"duplicate frame_id {fr.frame_id!r}")
            seen.add(fr.frame_id)
            if fr.class_index not in self.catalog:
                raise InputError(
                    f"frame {fr.frame_id!r}: class index {fr.class_index} not in catalog"
                )
            if fr.image is None and fr.embedding is None and self.image_embeddings is None:
                raise InputError(
                    f"frame {fr.frame_id!r} has neither an image path nor an embedding reference"
                )

    def frame_ids(self) -> list[str]:
        return [fr.frame_id for fr in self.frames]

    def class_of(self, frame_id: str) -> int:
        for fr in self.frames:
            if fr.frame_id == frame_id:
                return fr.class_index
        raise KeyError(frame_id)

    def referenced_files(self) -> list[Path]:
        paths = []
        if self.source is not None:
            paths.append(self.source)
        for p in (self.image_embeddings, self.text_embeddings):
            if p is not None:
                paths.append(p)
        paths.extend(self.masked_embeddings.values())
        for fr in self.frames:
            for p in (fr.image, fr.embedding):
                if p is not None:
                    paths.append(p)
            paths.extend(fr.masks.values())
        return paths


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise InputError(f"{what} does not exist: {path}")
    return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != "displab-manifest/1":
        raise InputError(f"manifest {path}: unknown format {doc.get('format')!r}")
    base = path.parent

    catalog_spec = doc.get("catalog")
    if isinstance(catalog_spec, str):
        catalog = ClassCatalog.from_tsv(_require_file(_resolve(base, catalog_spec), "catalog"))
    elif isinstance(catalog_spec, list):
        try:
            catalog = ClassCatalog(catalog_spec)
        except ValueError as exc:
            raise InputError(f"manifest {path}: bad catalog: {exc}") from exc
    else:
        raise InputError(f"manifest {path}: catalog must be a path or a list of [index, name]")

    def opt_file(key: str) -> Path | None:
        value = doc.get(key)
        if value is None:
            return None
        return _require_file(_resolve(base, value), key)

    image_embeddings = opt_file("image_embeddings")
    text_embeddings = opt_file("text_embeddings")
    masked = {}
    for tag, value in (doc.get("masked_embeddings") or {}).items():
        masked[str(tag)] = _require_file(_resolve(base, value), f"masked_embeddings[{tag}]")

    frames = []
    for i, row in enumerate(doc.get("frames", [])):
        try:
            frame_id = str(row["frame_id"])
            class_index = int(row["class_index"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"manifest {path}: frame #{i} malformed: {exc}") from exc
        image = row.get("image")
        if image is not None:
            image = _require_file(_resolve(base, image), f"frame {frame_id!r} image")
        emb = row.get("embedding")
        if emb is not None:
            emb = _require_file(_resolve(base, emb), f"frame {frame_id!r} embedding")
        masks = {}
        for name, value in (row.get("masks") or {}).items():
            masks[str(name)] = _require_file(
                _resolve(base, value), f"frame {frame_id!r} mask {name!r}"
            )
        frames.append(FrameRecord(frame_id, class_index, image, emb, masks))

    try:
        return DatasetManifest(
            catalog, frames,
            prompt_template=doc.get("prompt_template", DEFAULT_PROMPT),
            image_embeddings=image_embeddings,
            text_embeddings=text_embeddings,
            masked_embeddings=masked,
            source=path,
        )
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"manifest {path}: {exc}") from exc


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: Path = Path("out")
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    mask: MaskSpec | None = None
    triplet: TripletConfig | None = None
    label_subset: list[int] | None = None
    percents: list[float] = field(default_factory=lambda: [0.10, 0.30, 0.50])
    mask_strategy: str = "random_pixel"
    task3_mode: str = "one"
    split_fraction: float = 0.8
    provider_timeout: float = 120.0
    provider_cmd: str | None = None
    include_similarities: bool = False
    noise_dict: Path | None = None
    write_charts: bool = True

    def __post_init__(self):
        if self.label_subset is not None:
            if len(self.label_subset) < 2:
                raise InputError("label_subset needs at least 2 entries")
            if len(set(self.label_subset)) != len(self.label_subset):
                raise InputError("label_subset entries must be unique")
        if not (0.0 < self.split_fraction < 1.0):
            raise InputError(f"split_fraction must be in (0,1), got {self.split_fraction}")
        if self.task3_mode not in ("one", "all"):
            raise InputError(f"task3 mode must be 'one' or 'all', got {self.task3_mode!r}")
        for p in self.percents:
            if not (0.0 <= p <= 1.0):
                raise InputError(f"mask percentage out of range: {p}")

    def resolved_triplet(self) -> TripletConfig:
        """Triplet config with a seed derived from the run seed unless one
        was set explicitly."""
        if self.triplet is not None:
            return self.triplet
        return TripletConfig(seed=derive_seed(self.seed, "triplet"))

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "classifier": {"logit_scale": self.classifier.logit_scale},
            "label_subset": self.label_subset,
            "split_fraction": self.split_fraction,
            "include_similarities": self.include_similarities,
        }
        if self.mask is not None:
            doc["mask"] = {
                "strategy": self.mask.strategy,
                "p": self.mask.p,
                "seed": self.mask.seed,
                "max_shape_fraction": self.mask.max_shape_fraction,
            }
        if self.triplet is not None:
            t = self.triplet
            doc["triplet"] = {
                "margin": t.margin,
                "learning_rate": t.learning_rate,
                "epochs": t.epochs,
                "triplets_per_class": t.triplets_per_class,
                "seed": t.seed,
                "noise_init_scale": t.noise_init_scale,
            }
        return doc


def load_config(path, **overrides) -> RunConfig:
    """Load a run config document; keyword overrides win over the file."""
    doc = {}
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from exc
        if doc.get("format", "displab-config/1") != "displab-config/1":
            raise InputError(f"config {path}: unknown format {doc.get('format')!r}")
    kwargs = {}
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    if "out_dir" in doc:
        kwargs["out_dir"] = Path(doc["out_dir"])
    if "classifier" in doc:
        try:
            kwargs["classifier"] = ClassifierConfig(**doc["classifier"])
        except (TypeError, ValueError) as exc:
            raise InputError(f"config classifier section: {exc}") from exc
    if "mask" in doc:
        try:
            m = dict(doc["mask"])
            m.setdefault("max_shape_fraction", DEFAULT_MAX_SHAPE_FRACTION)
            kwargs["mask"] = MaskSpec(
                strategy=m["strategy"], p=m.get("p"),
                mask_refs=tuple(m.get("mask_refs", ())),
                seed=int(m.get("seed", 0)),
                max_shape_fraction=m["max_shape_fraction"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"config mask section: {exc}") from exc
    if "triplet" in doc:
        try:
            kwargs["triplet"] = TripletConfig(**doc["triplet"])
        except (TypeError, ValueError) as exc:
            raise InputError(f"config triplet section: {exc}") from exc
    for key in ("label_subset", "percents", "mask_strategy", "task3_mode", "split_fraction",
                "provider_timeout", "provider_cmd", "include_similarities", "write_charts"):
        if key in doc:
            kwargs[key] = doc[key]
    if "noise_dict" in doc:
        kwargs["noise_dict"] = Path(doc["noise_dict"])
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid run config: {exc}") from exc
