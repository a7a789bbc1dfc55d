"""Frequency-histogram aggregation of predictions and dispersion metrics.

A FrequencyHistogram tallies, for one ground-truth class, how often each
label was predicted and at what mean confidence. build_fhc emits entries
in canonical order (count descending, ties by ascending predicted index);
the renderers preserve whatever entry order a histogram carries, so
externally sourced fixtures keep their printed order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .embedding import PredictionRecord

__all__ = [
    "HistogramEntry",
    "FrequencyHistogram",
    "DispersionMetrics",
    "build_fhc",
    "dispersion_metrics",
    "render_report",
    "parse_structured_report",
    "render_chart",
]


@dataclass(frozen=True)
class HistogramEntry:
    predicted: int
    count: int
    mean_confidence: float

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("entry count must be >= 1")
        if not (0.0 <= self.mean_confidence <= 1.0):
            raise ValueError(f"mean confidence must be in [0,1], got {self.mean_confidence}")


@dataclass(frozen=True)
class FrequencyHistogram:
    ground_truth: int
    entries: tuple[HistogramEntry, ...]

    def __post_init__(self):
        entries = tuple(
            e if isinstance(e, HistogramEntry) else HistogramEntry(*e) for e in self.entries
        )
        seen = set()
        for e in entries:
            if e.predicted in seen:
                raise ValueError(f"duplicate predicted index {e.predicted}")
            seen.add(e.predicted)
        object.__setattr__(self, "entries", entries)

    @property
    def total(self) -> int:
        return sum(e.count for e in self.entries)


@dataclass(frozen=True)
class DispersionMetrics:
    distinct_labels: int
    dominant_fraction: float
    entropy_bits: float
    ground_truth_rank: int | None


def build_fhc(records, ground_truth: int) -> FrequencyHistogram:
    """Aggregate prediction records of one ground-truth class.

    Order-invariant: counts and confidence sums combine associatively, and
    the output entry order is canonical (count desc, index asc). Means are
    kept at full precision; rounding happens only in the renderers.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot build a histogram from zero records")
    counts: dict[int, int] = {}
    conf_sums: dict[int, float] = {}
    for rec in records:
        if isinstance(rec, PredictionRecord):
            gt, pred, conf = rec.ground_truth, rec.predicted, rec.confidence
        else:
            gt, pred, conf = rec
        if gt != ground_truth:
            raise ValueError(f"record has ground truth {gt}, expected {ground_truth}")
        counts[pred] = counts.get(pred, 0) + 1
        conf_sums[pred] = conf_sums.get(pred, 0.0) + conf
    order = sorted(counts, key=lambda idx: (-counts[idx], idx))
    entries = tuple(
        HistogramEntry(idx, counts[idx], conf_sums[idx] / counts[idx]) for idx in order
    )
    return FrequencyHistogram(ground_truth, entries)


def dispersion_metrics(h: FrequencyHistogram) -> DispersionMetrics:
    """Distinct-label count, dominant fraction, Shannon entropy in bits,
    and the 1-based rank of the ground-truth label (None if never predicted)."""
    if not h.entries:
        raise ValueError("histogram has no entries")
    total = h.total
    fractions = [e.count / total for e in h.entries]
    entropy = -sum(f * math.log2(f) for f in fractions)
    if len(h.entries) == 1:
        entropy = 0.0
    rank = None
    for pos, e in enumerate(h.entries, start=1):
        if e.predicted == h.ground_truth:
            rank = pos
            break
    return DispersionMetrics(
        distinct_labels=len(h.entries),
        dominant_fraction=max(e.count for e in h.entries) / total,
        entropy_bits=entropy,
        ground_truth_rank=rank,
    )


def _row_line(h: FrequencyHistogram, name: str) -> str:
    preds = ", ".join(f"{e.predicted} ({e.count}, {e.mean_confidence:.2f})" for e in h.entries)
    return f"{h.ground_truth}\t{name}\t{preds}"


def render_rows(histograms, names) -> bytes:
    lines = [_row_line(h, names(h.ground_truth)) for h in histograms]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def _metrics_dict(m: DispersionMetrics) -> dict:
    return {
        "distinct_labels": m.distinct_labels,
        "dominant_fraction": m.dominant_fraction,
        "entropy_bits": m.entropy_bits,
        "ground_truth_rank": m.ground_truth_rank,
    }


def render_structured(histograms, metrics, names, metadata: dict | None = None) -> bytes:
    doc = {
        "format": "displab-report/1",
        "metadata": metadata or {},
        "classes": [
            {
                "ground_truth": h.ground_truth,
                "ground_truth_name": names(h.ground_truth),
                "entries": [
                    {
                        "predicted": e.predicted,
                        "count": e.count,
                        "mean_confidence": e.mean_confidence,
                    }
                    for e in h.entries
                ],
                "metrics": _metrics_dict(m),
            }
            for h, m in zip(histograms, metrics)
        ],
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def parse_structured_report(data: bytes):
    """Parse render_structured output back into (histograms, metrics, metadata).

    JSON carries doubles via repr, so the round-trip is exact."""
    doc = json.loads(data.decode("utf-8"))
    if doc.get("format") != "displab-report/1":
        raise ValueError(f"not a structured report: format={doc.get('format')!r}")
    histograms, metrics = [], []
    for cls in doc["classes"]:
        h = FrequencyHistogram(
            cls["ground_truth"],
            tuple(
                HistogramEntry(e["predicted"], e["count"], e["mean_confidence"])
                for e in cls["entries"]
            ),
        )
        m = cls["metrics"]
        histograms.append(h)
        metrics.append(
            DispersionMetrics(
                distinct_labels=m["distinct_labels"],
                dominant_fraction=m["dominant_fraction"],
                entropy_bits=m["entropy_bits"],
                ground_truth_rank=m["ground_truth_rank"],
            )
        )
    return histograms, metrics, doc.get("metadata", {})


_BAR_W = 36
_BAR_GAP = 14
_CHART_H = 150
_MARGIN = 46


def render_chart(h: FrequencyHistogram, m: DispersionMetrics, name: str,
                 y_offset: int = 0) -> tuple[str, int]:
    """One SVG group for one class: a bar per predicted label, height
    proportional to count, annotated with the mean confidence."""
    peak = max(e.count for e in h.entries)
    parts = [f'<g transform="translate(0,{y_offset})">']
    title = f"{h.ground_truth} {name} (n={h.total}, entropy={m.entropy_bits:.3f} bits)"
    parts.append(f'<text x="{_MARGIN}" y="16" font-size="13">{_esc(title)}</text>')
    base = 30 + _CHART_H
    for i, e in enumerate(h.entries):
        x = _MARGIN + i * (_BAR_W + _BAR_GAP)
        bar_h = max(1, round(_CHART_H * e.count / peak))
        y = base - bar_h
        parts.append(
            f'<rect x="{x}" y="{y}" width="{_BAR_W}" height="{bar_h}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + _BAR_W // 2}" y="{y - 4}" font-size="10" text-anchor="middle">'
            f"{e.count} @ {e.mean_confidence:.2f}</text>"
        )
        parts.append(
            f'<text x="{x + _BAR_W // 2}" y="{base + 13}" font-size="11" text-anchor="middle">'
            f"{e.predicted}</text>"
        )
    parts.append("</g>")
    return "\n".join(parts), base + 26


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_charts(histograms, metrics, names) -> bytes:
    groups = []
    offset = 0
    width = _MARGIN * 2
    for h, m in zip(histograms, metrics):
        svg, height = render_chart(h, m, names(h.ground_truth), offset)
        groups.append(svg)
        offset += height
        width = max(width, _MARGIN * 2 + len(h.entries) * (_BAR_W + _BAR_GAP))
    body = "\n".join(groups)
    doc = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{max(offset, 1)}" '
        f'font-family="sans-serif">\n{body}\n</svg>\n'
    )
    return doc.encode("utf-8")


def render_report(histograms, metrics, fmt: str, names=None, metadata: dict | None = None) -> bytes:
    """Render aligned histograms and metrics as ``rows``, ``structured``,
    or ``chart`` document bytes."""
    histograms = list(histograms)
    metrics = list(metrics)
    if len(histograms) != len(metrics):
        raise ValueError(
            f"misaligned inputs: {len(histograms)} histograms vs {len(metrics)} metric sets"
        )
    if names is None:
        names = lambda idx: f"class {idx}"
    elif hasattr(names, "name_of"):
        catalog = names
        names = lambda idx: catalog.name_of(idx)
    if fmt == "rows":
        return render_rows(histograms, names)
    if fmt == "structured":
        return render_structured(histograms, metrics, names, metadata)
    if fmt == "chart":
        return render_charts(histograms, metrics, names)
    raise ValueError(f"unknown report format {fmt!r}")
