"""Vector arithmetic and contrastive zero-shot classification.

Embeddings are 1-D float64 numpy arrays. Classification ranks candidate
class-text embeddings by cosine similarity to an image embedding, scales
by a configurable logit scale, and applies a softmax; no encoder runs
here, all embeddings are precomputed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "ClassCatalog",
    "ClassifierConfig",
    "PredictionRecord",
    "as_embedding",
    "cosine_similarity",
    "cosine_scores",
    "softmax",
    "zero_shot_classify",
    "ucf101_catalog",
]


def as_embedding(values, name: str = "embedding") -> np.ndarray:
    """Validate and return a finite 1-D float64 vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] < 1:
        raise ValueError(f"{name} must be a 1-D vector with dim >= 1, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} contains non-finite values")
    return vec


class ClassCatalog:
    """Ordered class index/name table; indices contiguous from 1."""

    def __init__(self, entries):
        self.entries = [(int(i), str(n)) for i, n in entries]
        if not self.entries:
            raise ValueError("catalog must not be empty")
        indices = [i for i, _ in self.entries]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError("catalog indices must be unique and contiguous from 1")
        names = [n for _, n in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("catalog names must be unique")
        self._by_index = dict(self.entries)
        self._by_name = {n: i for i, n in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, index: int) -> bool:
        return index in self._by_index

    def name_of(self, index: int) -> str:
        try:
            return self._by_index[index]
        except KeyError:
            raise KeyError(f"no class with index {index}") from None

    def index_of(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"no class named {name!r}") from None

    def indices(self) -> list[int]:
        return [i for i, _ in self.entries]

    @classmethod
    def from_tsv(cls, path) -> "ClassCatalog":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                idx, name = line.split("\t", 1)
                entries.append((int(idx), name))
        return cls(entries)


def ucf101_catalog() -> ClassCatalog:
    """The 101-class action catalog used by the bundled fixtures."""
    ref = resources.files("displab").joinpath("data/ucf101.tsv")
    entries = []
    for line in ref.read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        idx, name = line.split("\t", 1)
        entries.append((int(idx), name))
    return ClassCatalog(entries)


@dataclass(frozen=True)
class ClassifierConfig:
    """Softmax temperature for similarity scores. logit_scale must be > 0."""

    logit_scale: float = 100.0

    def __post_init__(self):
        if not (self.logit_scale > 0):
            raise ValueError(f"logit_scale must be positive, got {self.logit_scale}")


@dataclass(frozen=True)
class PredictionRecord:
    """One classification outcome for one frame."""

    frame_id: str
    ground_truth: int
    predicted: int
    confidence: float
    perturbation_tag: str = "none"

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two same-dimension vectors.

    Zero-norm inputs are rejected: they signal a degenerate upstream
    embedding, not a legitimate "orthogonal to everything" vector.
    """
    va = as_embedding(a, "a")
    vb = as_embedding(b, "b")
    if va.shape[0] != vb.shape[0]:
        raise ValueError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm embedding")
    return float(np.dot(va, vb) / (na * nb))


def cosine_scores(image, texts) -> dict[int, float]:
    """Raw cosine similarity of an image embedding to each candidate text.

    ``texts`` is a sequence of (class index, embedding). Restricting the
    candidate set never changes the score of a surviving candidate.
    """
    img = as_embedding(image, "image")
    scores: dict[int, float] = {}
    for idx, vec in texts:
        idx = int(idx)
        if idx in scores:
            raise ValueError(f"duplicate candidate class index {idx}")
        scores[idx] = cosine_similarity(img, vec)
    if not scores:
        raise ValueError("empty candidate set")
    return scores


def softmax(values: np.ndarray) -> np.ndarray:
    shifted = values - np.max(values)
    exps = np.exp(shifted)
    return exps / np.sum(exps)


def _predict_from_scores(scores: dict[int, float], logit_scale: float):
    indices = sorted(scores)
    logits = np.array([logit_scale * scores[i] for i in indices], dtype=np.float64)
    probs = softmax(logits)
    dist = {i: float(p) for i, p in zip(indices, probs)}
    best = max(probs)
    predicted = min(i for i, p in zip(indices, probs) if p == best)
    return predicted, dist


def zero_shot_classify(image, texts, cfg: ClassifierConfig = ClassifierConfig()):
    """Classify an image embedding against candidate class-text embeddings.

    Returns (predicted class index, probability distribution). Probabilities
    are softmax(logit_scale * cosine); exact ties in probability break
    toward the lowest class index.
    """
    scores = cosine_scores(image, texts)
    return _predict_from_scores(scores, cfg.logit_scale)
