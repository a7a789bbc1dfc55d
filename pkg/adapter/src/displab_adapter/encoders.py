"""Encoder backends that turn images and class prompts into embeddings.

Two backends share one interface:

``clip-vit-base-patch32``
    The pinned contrastive vision-language encoder, loaded through
    transformers. Needs downloaded weights; unavailable environments get
    an EncoderUnavailable so callers can exit with the provider failure
    code instead of silently substituting a different model.

``hash512``
    A fully offline deterministic stand-in at the same 512-dim width as
    the pinned encoder: images are average-pooled to a fixed grid and
    projected through a seeded random matrix; texts are hashed
    character-trigram bags. Useful for integration tests and dry runs;
    it is a format/protocol-faithful encoder, not a semantic one.

Every backend reports a lock record (name, version, dim) that gets
written into EMB1 sidecar headers so downstream runs can detect mixing
embeddings from different encoders.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

PINNED_CLIP = "clip-vit-base-patch32"
PINNED_CLIP_DIM = 512


class EncoderUnavailable(RuntimeError):
    """The requested encoder backend cannot run in this environment."""


class HashEncoder:
    """Deterministic offline encoder at the pinned 512-dim width."""

    name = "hash512"
    version = "1"
    dim = PINNED_CLIP_DIM
    _GRID = 16  # images are pooled to GRID x GRID x 3 before projection

    def __init__(self):
        rng = np.random.default_rng(np.random.PCG64(20240801))
        # affine projection: the bias row keeps distinct solid colors from
        # collapsing onto one ray and gives all-black frames a nonzero image
        raw = self._GRID * self._GRID * 3 + 1
        self._projection = rng.standard_normal((raw, self.dim)) / np.sqrt(raw)

    def lock_record(self) -> dict:
        return {"encoder": self.name, "version": self.version, "dim": self.dim}

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        img = Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB")
        small = img.resize((self._GRID, self._GRID), Image.BILINEAR)
        flat = np.asarray(small, dtype=np.float64).reshape(-1) / 255.0
        vec = np.concatenate([flat, [1.0]]) @ self._projection
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        padded = f"  {text.lower()}  "
        for i in range(len(padded) - 2):
            trigram = padded[i:i + 3].encode("utf-8")
            digest = hashlib.blake2b(trigram, digest_size=8).digest()
            slot = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[slot] += sign
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


class ClipEncoder:
    """The pinned CLIP backend via transformers; weights must be present."""

    name = PINNED_CLIP
    dim = PINNED_CLIP_DIM

    def __init__(self):
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderUnavailable(f"transformers/torch not installed: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(f"openai/{self.name}")
            self._processor = CLIPProcessor.from_pretrained(f"openai/{self.name}")
        except Exception as exc:
            raise EncoderUnavailable(
                f"cannot load {self.name} weights (offline environment?): {exc}"
            ) from exc
        self._model.eval()
        self.version = getattr(self._model.config, "transformers_version", "unknown")

    def lock_record(self) -> dict:
        return {"encoder": self.name, "version": str(self.version), "dim": self.dim}

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        import torch

        image = Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB")
        inputs = self._processor(images=image, return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        vec = feats[0].numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)

    def embed_text(self, text: str) -> np.ndarray:
        import torch

        inputs = self._processor(text=[text], return_tensors="pt", padding=True)
        with torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        vec = feats[0].numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)


_ENCODERS = {
    HashEncoder.name: HashEncoder,
    ClipEncoder.name: ClipEncoder,
}


def get_encoder(name: str):
    try:
        factory = _ENCODERS[name]
    except KeyError:
        raise EncoderUnavailable(
            f"unknown encoder {name!r}; available: {sorted(_ENCODERS)}"
        ) from None
    return factory()
