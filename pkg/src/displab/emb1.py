"""EMB1 embedding container: reader and writer.

Layout (little-endian throughout):

    bytes 0-3   magic b"EMB1"
    bytes 4-7   uint32 dim
    bytes 8-11  uint32 count
    then        count rows of dim float32 values

A sidecar text file at ``<path>.ids`` maps row ordinal to an identifier
(frame_id or class index), one per line in row order. Lines starting
with ``#`` are header records (used for provenance) and do not count as
rows. Readers reject a wrong magic and truncated payloads.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


def sidecar_path(path) -> Path:
    return Path(str(path) + ".ids")


def write_emb1(path, vectors, ids, header: dict | None = None) -> None:
    """Write vectors (count x dim, float32-coerced) plus the id sidecar.

    ``header``, when given, is stored as a single JSON comment line at the
    top of the sidecar.
    """
    path = Path(path)
    arr = np.asarray(vectors, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"vectors must be 2-D (count x dim), got shape {arr.shape}")
    count, dim = arr.shape
    ids = [str(i) for i in ids]
    if len(ids) != count:
        raise ValueError(f"{count} rows but {len(ids)} ids")
    if count > 0 and dim < 1:
        raise ValueError("dim must be >= 1")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, count))
        fh.write(arr.tobytes(order="C"))
    lines = []
    if header is not None:
        lines.append("# " + json.dumps(header, sort_keys=True))
    lines.extend(ids)
    sidecar_path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_emb1(path, with_ids: bool = True):
    """Read an EMB1 file; returns (vectors, ids, header).

    vectors is a float32 array of shape (count, dim). ids is None when
    ``with_ids`` is false or the sidecar is absent and count == 0.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read embedding file {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise InputError(f"{path}: truncated header ({len(data)} bytes)")
    magic, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if count > 0 and dim < 1:
        raise InputError(f"{path}: dim must be >= 1, got {dim}")
    expected = _HEADER.size + 4 * dim * count
    if len(data) < expected:
        raise InputError(f"{path}: truncated payload ({len(data)} bytes, expected {expected})")
    if len(data) > expected:
        raise InputError(f"{path}: {len(data) - expected} trailing bytes")
    vectors = np.frombuffer(data, dtype="<f4", offset=_HEADER.size, count=dim * count)
    vectors = vectors.reshape(count, dim).copy()
    if not with_ids:
        return vectors, None, None
    ids, header = read_sidecar(path, count)
    return vectors, ids, header


def read_sidecar(path, expected_count: int):
    """Read the id sidecar for an EMB1 file; returns (ids, header_dict)."""
    side = sidecar_path(path)
    if not side.exists():
        if expected_count == 0:
            return [], None
        raise InputError(f"missing sidecar {side}")
    header = None
    ids = []
    for line in side.read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if header is None and body.startswith("{"):
                try:
                    header = json.loads(body)
                except json.JSONDecodeError:
                    header = None
            continue
        if line.strip() == "":
            continue
        ids.append(line.strip())
    if len(ids) != expected_count:
        raise InputError(
            f"{side}: {len(ids)} ids for {expected_count} rows"
        )
    return ids, header


class EmbeddingTable:
    """EMB1 contents indexed by id, yielding float64 vectors."""

    def __init__(self, vectors: np.ndarray, ids, header: dict | None = None,
                 source: str | None = None):
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.ids = [str(i) for i in ids]
        self.header = header
        self.source = source
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError("ids/vector count mismatch")
        self._rows = {}
        for row, key in enumerate(self.ids):
            if key in self._rows:
                raise InputError(f"duplicate id {key!r} in {source or 'embedding table'}")
            self._rows[key] = row

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        vectors, ids, header = read_emb1(path)
        return cls(vectors, ids, header, source=str(path))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1] if self.vectors.size else 0

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, key) -> bool:
        return str(key) in self._rows

    def get(self, key) -> np.ndarray:
        try:
            return self.vectors[self._rows[str(key)]]
        except KeyError:
            raise KeyError(f"no embedding for id {key!r} in {self.source or 'table'}") from None
