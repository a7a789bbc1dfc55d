"""Provider-exchange server: embeds requested PNGs for the harness.

Implements the published file protocol: read ``request.json``, embed each
listed PNG in request order, write ``response.emb1`` (+ ``.ids`` sidecar
keyed by frame_id, carrying the encoder lock record), and only then the
``response.done`` marker. On any failure the marker is withheld and an
error log is written instead, so the requesting side times out rather
than reading a partial table.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .emb1io import write_emb1
from .frames import load_image

REQUEST_NAME = "request.json"
RESPONSE_NAME = "response.emb1"
MARKER_NAME = "response.done"
ERROR_LOG = "response.error.log"


def read_request(request_dir: Path):
    index = request_dir / REQUEST_NAME
    if not index.exists():
        raise FileNotFoundError(f"no {REQUEST_NAME} in {request_dir}")
    doc = json.loads(index.read_text(encoding="utf-8"))
    if doc.get("format") != "displab-provider-request/1":
        raise ValueError(f"{index}: unknown request format {doc.get('format')!r}")
    return [(row["frame_id"], request_dir / row["file"]) for row in doc["frames"]]


def serve(request_dir, encoder) -> Path:
    """Serve one request directory; returns the response path."""
    request_dir = Path(request_dir)
    try:
        items = read_request(request_dir)
        ids, rows = [], []
        for frame_id, png in items:
            rows.append(encoder.embed_image(load_image(png)))
            ids.append(frame_id)
        vectors = np.stack(rows) if rows else np.zeros((0, encoder.dim), np.float32)
        response = write_emb1(
            request_dir / RESPONSE_NAME, vectors, ids, header=encoder.lock_record()
        )
    except Exception as exc:
        (request_dir / ERROR_LOG).write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    (request_dir / MARKER_NAME).write_text("done\n", encoding="utf-8")
    return response
