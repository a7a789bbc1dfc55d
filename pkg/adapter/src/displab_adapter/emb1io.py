"""EMB1 container writer/reader.

Implements the harness's published embedding format: magic ``EMB1``,
little-endian uint32 dim and count, then count rows of dim float32
values, with a ``<path>.ids`` sidecar mapping row ordinal to id (one per
line, ``#`` lines are header records). The adapter talks to the harness
only through files, so this is an independent implementation of the same
wire format.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")


def write_emb1(path, vectors, ids, header: dict | None = None) -> Path:
    path = Path(path)
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {arr.shape}")
    count, dim = arr.shape
    ids = [str(i) for i in ids]
    if len(ids) != count:
        raise ValueError(f"{count} rows but {len(ids)} ids")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, dim, count))
        fh.write(arr.tobytes(order="C"))
    lines = []
    if header is not None:
        lines.append("# " + json.dumps(header, sort_keys=True))
    lines.extend(ids)
    Path(str(path) + ".ids").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_emb1(path):
    """Returns (vectors float32 (count, dim), ids, header dict or None)."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * dim * count
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    vectors = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim).copy()
    ids, header = [], None
    side = Path(str(path) + ".ids")
    if side.exists():
        for line in side.read_text(encoding="utf-8").splitlines():
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if header is None and body.startswith("{"):
                    try:
                        header = json.loads(body)
                    except json.JSONDecodeError:
                        header = None
                continue
            if line.strip():
                ids.append(line.strip())
        if len(ids) != count:
            raise ValueError(f"{side}: {len(ids)} ids for {count} rows")
    elif count:
        raise ValueError(f"missing sidecar {side}")
    return vectors, ids, header
