"""Provider exchange protocol: how the model-free pipeline obtains
embeddings of perturbed frames from an external encoder process.

Layout of a request directory::

    request.json          {"format": "displab-provider-request/1",
                           "count": N,
                           "frames": [{"frame_id": ..., "file": "frames/000000.png"}, ...]}
    frames/000000.png     one PNG per requested frame, in request order
    response.emb1         written by the provider (rows keyed by frame_id
    response.emb1.ids      in the sidecar)
    response.done         completion marker, written last

The pipeline writes the request, then blocks polling for the marker.
Missing ids or a missing/late marker raise ProviderError.
"""

from __future__ import annotations

import json
import subprocess
import time
from pathlib import Path

from .emb1 import EmbeddingTable
from .errors import InputError, ProviderError
from .frames import ImageFrame, save_frame

REQUEST_NAME = "request.json"
RESPONSE_NAME = "response.emb1"
MARKER_NAME = "response.done"


def write_request(request_dir, items: list[tuple[str, ImageFrame]]) -> Path:
    """Write perturbed frames plus the index file; returns the request dir.

    Stale responses from a previous run of the same directory are removed
    so the waiter can only observe an answer to this request."""
    request_dir = Path(request_dir)
    (request_dir / "frames").mkdir(parents=True, exist_ok=True)
    for stale in (MARKER_NAME, RESPONSE_NAME, RESPONSE_NAME + ".ids"):
        path = request_dir / stale
        if path.exists():
            path.unlink()
    rows = []
    for i, (frame_id, frame) in enumerate(items):
        rel = f"frames/{i:06d}.png"
        save_frame(frame, request_dir / rel)
        rows.append({"frame_id": frame_id, "file": rel})
    doc = {"format": "displab-provider-request/1", "count": len(rows), "frames": rows}
    (request_dir / REQUEST_NAME).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return request_dir


def read_request(request_dir) -> list[tuple[str, Path]]:
    """Parse a request index; returns [(frame_id, absolute png path)]."""
    request_dir = Path(request_dir)
    index = request_dir / REQUEST_NAME
    if not index.exists():
        raise InputError(f"no {REQUEST_NAME} in {request_dir}")
    doc = json.loads(index.read_text(encoding="utf-8"))
    if doc.get("format") != "displab-provider-request/1":
        raise InputError(f"{index}: unknown format {doc.get('format')!r}")
    return [(row["frame_id"], request_dir / row["file"]) for row in doc["frames"]]


def wait_for_response(request_dir, frame_ids, timeout: float = 120.0,
                      poll: float = 0.05) -> EmbeddingTable:
    """Block until the completion marker appears, then load and validate
    the response table against the requested frame ids."""
    request_dir = Path(request_dir)
    marker = request_dir / MARKER_NAME
    deadline = time.monotonic() + timeout
    while not marker.exists():
        if time.monotonic() >= deadline:
            raise ProviderError(
                f"provider did not produce {MARKER_NAME} in {request_dir} within {timeout:.0f}s"
            )
        time.sleep(poll)
    response = request_dir / RESPONSE_NAME
    if not response.exists():
        raise ProviderError(f"provider wrote the marker but no {RESPONSE_NAME} in {request_dir}")
    try:
        table = EmbeddingTable.load(response)
    except (InputError, ValueError) as exc:
        raise ProviderError(f"bad provider response: {exc}") from exc
    missing = [fid for fid in frame_ids if fid not in table]
    if missing:
        raise ProviderError(
            f"provider response is missing {len(missing)} frame id(s): {missing[:5]}"
        )
    return table


def fetch_embeddings(request_dir, items: list[tuple[str, ImageFrame]],
                     provider=None, provider_cmd: str | None = None,
                     timeout: float = 120.0) -> EmbeddingTable:
    """Write a request and obtain the response table.

    ``provider`` is an optional callable invoked with the request dir
    (in-process providers and test stubs); ``provider_cmd`` is an optional
    shell command run with the request dir appended (or substituted for
    ``{dir}``). With neither, an already-running external provider is
    assumed to be watching the directory.
    """
    request_dir = write_request(request_dir, items)
    if provider is not None:
        provider(request_dir)
    if provider_cmd is not None:
        if "{dir}" in provider_cmd:
            cmd = provider_cmd.replace("{dir}", str(request_dir))
        else:
            cmd = f"{provider_cmd} {request_dir}"
        proc = subprocess.run(cmd, shell=True)
        if proc.returncode != 0:
            raise ProviderError(f"provider command failed with exit code {proc.returncode}")
    return wait_for_response(request_dir, [fid for fid, _ in items], timeout=timeout)


def serve_request(request_dir, embed_frame, dim: int | None = None,
                  header: dict | None = None) -> Path:
    """Serve one request directory with ``embed_frame(pixels) -> vector``.

    Utility for in-process provider stubs: embeds every requested PNG in
    request order, writes the keyed EMB1 response, and finally the marker.
    """
    import numpy as np

    from .emb1 import write_emb1
    from .frames import load_frame

    request_dir = Path(request_dir)
    items = read_request(request_dir)
    vectors = []
    ids = []
    for frame_id, png in items:
        vec = np.asarray(embed_frame(load_frame(png).pixels), dtype=np.float32)
        vectors.append(vec)
        ids.append(frame_id)
    if vectors:
        arr = np.stack(vectors)
    else:
        arr = np.zeros((0, dim or 0), dtype=np.float32)
    response = request_dir / RESPONSE_NAME
    write_emb1(response, arr, ids, header=header)
    (request_dir / MARKER_NAME).write_text("done\n", encoding="utf-8")
    return response
