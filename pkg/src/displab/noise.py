"""Class-specific noise learning with an augmented triplet loss.

Each class gets a learnable noise vector living in embedding space. The
loss hinges the gap between the intra-class distance d(anchor, positive)
(noise cancels there, since anchor and positive share the class noise)
and the noise-augmented inter-class distance d(anchor + N_c, negative +
N_c'). Training is plain per-triplet gradient descent with analytic
gradients; everything is deterministic given the config seed.

At inference the true class is unknown, so each candidate class is scored
under its own noise hypothesis: score_c = logit_scale * cos(image + N_c,
text_c).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .emb1 import read_emb1, write_emb1
from .embedding import ClassifierConfig, as_embedding, cosine_similarity, _predict_from_scores
from .errors import InputError
from .rng import SplitMix64, derive_seed

__all__ = [
    "FeatureStore",
    "NoiseDictionary",
    "TripletConfig",
    "Triplet",
    "triplet_loss",
    "augmented_triplet_loss",
    "noise_gradient",
    "mine_triplets",
    "train_noise_dictionary",
    "noise_aware_classify",
    "save_noise_dictionary",
    "load_noise_dictionary",
]


class FeatureStore:
    """Per-class collections of extracted feature vectors, one shared dim."""

    def __init__(self, features: dict[int, np.ndarray]):
        if not features:
            raise ValueError("feature store must not be empty")
        self.features: dict[int, np.ndarray] = {}
        dim = None
        for cls in sorted(features):
            arr = np.asarray(features[cls], dtype=np.float64)
            if arr.ndim == 1:
                arr = arr.reshape(1, -1)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ValueError(f"class {cls}: features must be (n, dim) with n >= 1")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"class {cls}: non-finite feature values")
            if dim is None:
                dim = arr.shape[1]
            elif arr.shape[1] != dim:
                raise ValueError(
                    f"class {cls}: dim {arr.shape[1]} differs from {dim}"
                )
            self.features[int(cls)] = arr
        self.dim = dim

    def classes(self) -> list[int]:
        return sorted(self.features)

    def count(self, cls: int) -> int:
        return self.features[cls].shape[0]

    def vector(self, cls: int, index: int) -> np.ndarray:
        return self.features[cls][index]


class NoiseDictionary:
    """Mapping class index -> learned noise vector of one shared dim."""

    def __init__(self, noise: dict[int, np.ndarray]):
        if not noise:
            raise ValueError("noise dictionary must not be empty")
        self.noise: dict[int, np.ndarray] = {}
        dim = None
        for cls in sorted(noise):
            vec = as_embedding(noise[cls], f"noise[{cls}]")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(f"noise[{cls}]: dim {vec.shape[0]} differs from {dim}")
            self.noise[int(cls)] = vec
        self.dim = dim

    @classmethod
    def zeros(cls, classes, dim: int) -> "NoiseDictionary":
        return cls({c: np.zeros(dim) for c in classes})

    def classes(self) -> list[int]:
        return sorted(self.noise)

    def __contains__(self, cls: int) -> bool:
        return cls in self.noise

    def get(self, cls: int) -> np.ndarray:
        try:
            return self.noise[cls]
        except KeyError:
            raise KeyError(f"no noise vector for class {cls}") from None


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 0.2
    learning_rate: float = 0.02
    epochs: int = 20
    triplets_per_class: int = 8
    seed: int = 0
    noise_init_scale: float = 0.01

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.triplets_per_class < 1:
            raise ValueError("triplets_per_class must be >= 1")
        if self.noise_init_scale < 0:
            raise ValueError("noise_init_scale must be >= 0")


@dataclass(frozen=True)
class Triplet:
    """Anchor/positive are distinct frames of one class; negative is a
    frame of a different class."""

    cls: int
    anchor: int
    positive: int
    negative_cls: int
    negative: int

    def __post_init__(self):
        if self.anchor == self.positive:
            raise ValueError("anchor and positive must be distinct frames")
        if self.cls == self.negative_cls:
            raise ValueError("negative must come from a different class")


def triplet_loss(d_ap: float, d_an: float, margin: float) -> float:
    """Hinge over raw distances: max(0, d_ap - d_an + margin)."""
    if d_ap < 0 or d_an < 0:
        raise ValueError("distances must be non-negative")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return max(0.0, d_ap - d_an + margin)


def _triplet_vectors(t: Triplet, store: FeatureStore, noise: NoiseDictionary):
    if noise.dim != store.dim:
        raise ValueError(f"noise dim {noise.dim} != feature dim {store.dim}")
    f_a = store.vector(t.cls, t.anchor)
    f_p = store.vector(t.cls, t.positive)
    f_n = store.vector(t.negative_cls, t.negative)
    return f_a, f_p, f_n, noise.get(t.cls), noise.get(t.negative_cls)


def augmented_triplet_loss(t: Triplet, store: FeatureStore, noise: NoiseDictionary,
                           margin: float) -> float:
    """Hinge over noise-augmented Euclidean distances.

    The anchor and positive share the class noise, so the intra-class term
    equals the raw distance d(f_a, f_p) identically.
    """
    f_a, f_p, f_n, n_c, n_cn = _triplet_vectors(t, store, noise)
    d_ap = float(np.linalg.norm((f_a + n_c) - (f_p + n_c)))
    d_an = float(np.linalg.norm((f_a + n_c) - (f_n + n_cn)))
    return triplet_loss(d_ap, d_an, margin)


def noise_gradient(t: Triplet, store: FeatureStore, noise: NoiseDictionary,
                   margin: float):
    """Analytic gradients of the augmented loss w.r.t. (N_c, N_c').

    With u = (a - n)/||a - n|| for a = f_a + N_c, n = f_n + N_c': the
    active-hinge gradients are (-u, +u); the intra-class term contributes
    nothing because anchor and positive share N_c. An inactive (or exactly
    zero) hinge returns zero subgradients.
    """
    f_a, f_p, f_n, n_c, n_cn = _triplet_vectors(t, store, noise)
    a = f_a + n_c
    n = f_n + n_cn
    d_ap = float(np.linalg.norm(f_a - f_p))
    d_an = float(np.linalg.norm(a - n))
    loss = d_ap - d_an + margin
    dim = store.dim
    if loss <= 0.0:
        zero = np.zeros(dim)
        return zero, zero.copy()
    if d_an == 0.0:
        raise ValueError(
            "degenerate triplet: augmented anchor equals augmented negative with active hinge"
        )
    u = (a - n) / d_an
    return -u, u.copy()


def _weighted_choice(rng: SplitMix64, options, weights):
    total = sum(weights)
    if total <= 0:
        return options[rng.randbelow(len(options))]
    r = rng.randbelow(total)
    acc = 0
    for opt, w in zip(options, weights):
        acc += w
        if r < acc:
            return opt
    return options[-1]


def _confusion_weights(confusions, cls: int, others):
    """Misprediction counts of ``cls`` toward each other class, from its
    frequency histogram; zero when absent."""
    if confusions is None:
        return None
    hist = confusions.get(cls)
    if hist is None:
        return None
    counts = {e.predicted: e.count for e in hist.entries}
    weights = [counts.get(o, 0) for o in others]
    return weights if sum(weights) > 0 else None


def mine_triplets(store: FeatureStore, confusions: Optional[dict], count_per_class: int,
                  seed: int) -> list[Triplet]:
    """Deterministically mine ``count_per_class`` triplets per class.

    Anchor and positive are drawn without replacement from the anchor
    class. The negative class is drawn proportionally to its misprediction
    count in the anchor class's confusion histogram when one is supplied
    (hard negatives), else uniformly over the other classes.
    """
    classes = store.classes()
    if len(classes) < 2:
        raise ValueError("no negative class available: need at least 2 classes")
    if count_per_class < 1:
        raise ValueError("count_per_class must be >= 1")
    for cls in classes:
        if store.count(cls) < 2:
            raise ValueError(
                f"class {cls} has {store.count(cls)} feature vector(s); anchors need >= 2"
            )
    rng = SplitMix64(seed)
    triplets: list[Triplet] = []
    for cls in classes:
        n = store.count(cls)
        others = [c for c in classes if c != cls]
        weights = _confusion_weights(confusions, cls, others)
        for _ in range(count_per_class):
            anchor = rng.randbelow(n)
            positive = rng.randbelow(n - 1)
            if positive >= anchor:
                positive += 1
            if weights is None:
                neg_cls = others[rng.randbelow(len(others))]
            else:
                neg_cls = _weighted_choice(rng, others, weights)
            negative = rng.randbelow(store.count(neg_cls))
            triplets.append(Triplet(cls, anchor, positive, neg_cls, negative))
    return triplets


def train_noise_dictionary(store: FeatureStore, cfg: TripletConfig,
                           confusions: Optional[dict] = None):
    """Learn the per-class noise dictionary by seeded gradient descent.

    Noise is initialized componentwise uniform in [-s, +s] with
    s = cfg.noise_init_scale. Each epoch mines a fresh triplet set and
    applies one gradient step per triplet; the loss trace records the mean
    augmented loss over that epoch's triplets evaluated after its updates.
    """
    classes = store.classes()
    if len(classes) < 2:
        raise ValueError("training requires at least 2 classes")
    init_rng = SplitMix64(derive_seed(cfg.seed, "noise-init"))
    s = cfg.noise_init_scale
    noise = NoiseDictionary(
        {
            cls: np.array([init_rng.uniform(-s, s) for _ in range(store.dim)])
            for cls in classes
        }
    )
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        triplets = mine_triplets(
            store, confusions, cfg.triplets_per_class,
            seed=derive_seed(cfg.seed, "mine", epoch),
        )
        for t in triplets:
            grad_c, grad_cn = noise_gradient(t, store, noise, cfg.margin)
            noise.noise[t.cls] = noise.noise[t.cls] - cfg.learning_rate * grad_c
            noise.noise[t.negative_cls] = (
                noise.noise[t.negative_cls] - cfg.learning_rate * grad_cn
            )
        epoch_losses = [augmented_triplet_loss(t, store, noise, cfg.margin) for t in triplets]
        trace.append(float(np.mean(epoch_losses)))
    return noise, trace


def noise_aware_classify(image, texts, noise: NoiseDictionary,
                         cfg: ClassifierConfig = ClassifierConfig()):
    """Classify with hypothesis-conditioned noise: each candidate class c
    is scored as cos(image + N_c, text_c); softmax and tie rules match
    zero_shot_classify. Every candidate must have a noise vector."""
    img = as_embedding(image, "image")
    scores: dict[int, float] = {}
    for idx, vec in texts:
        idx = int(idx)
        if idx in scores:
            raise ValueError(f"duplicate candidate class index {idx}")
        if idx not in noise:
            raise ValueError(f"missing noise vector for candidate class {idx}")
        n_c = noise.get(idx)
        if n_c.shape[0] != img.shape[0]:
            raise ValueError(f"noise dim {n_c.shape[0]} != image dim {img.shape[0]}")
        scores[idx] = cosine_similarity(img + n_c, vec)
    if not scores:
        raise ValueError("empty candidate set")
    return _predict_from_scores(scores, cfg.logit_scale)


def save_noise_dictionary(path, noise: NoiseDictionary, cfg: TripletConfig) -> None:
    """Persist as EMB1 rows keyed by class index, with a provenance header
    recording (margin, learning_rate, epochs, seed)."""
    classes = noise.classes()
    vectors = np.array([noise.get(c) for c in classes], dtype=np.float32)
    header = {
        "kind": "noise-dictionary",
        "margin": cfg.margin,
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
    }
    write_emb1(path, vectors, [str(c) for c in classes], header=header)


def load_noise_dictionary(path):
    """Load a persisted dictionary; returns (NoiseDictionary, provenance)."""
    vectors, ids, header = read_emb1(path)
    try:
        classes = [int(i) for i in ids]
    except ValueError as exc:
        raise InputError(f"{path}: sidecar ids must be class indices: {exc}") from exc
    noise = NoiseDictionary({c: vectors[row].astype(np.float64) for row, c in enumerate(classes)})
    return noise, header
