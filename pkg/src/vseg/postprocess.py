"""Turn unfolded per-class time masks into detected, classified events.

Three steps: binary saturation (per-sample argmax over the six class masks),
event detection (maximal runs where BG is 0) and class assignment (majority
vote with per-class sample shares kept as an uncertainty signal). A merge/drop
heuristic then counters over-splitting of single events.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .core import ClassLabel, EventDetection, N_CLASSES, N_EVENT_CLASSES, WindowBatch


@dataclass(frozen=True)
class TimeMaskSet:
    """Six per-class 1D arrays of non-negative channel-summed mask values."""

    arrays: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.arrays, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != N_CLASSES:
            raise ValueError(f"expected a {N_CLASSES} x W array, got shape {a.shape}")
        if (a < 0).any():
            raise ValueError("time mask values must be non-negative")
        object.__setattr__(self, "arrays", a)

    @property
    def w(self) -> int:
        return self.arrays.shape[1]


@dataclass(frozen=True)
class PostConfig:
    merge_gap: int = 100
    min_len: int = 0


def binary_saturation(tm: TimeMaskSet) -> np.ndarray:
    """Per-sample one-hot argmax across the six classes; ties go to the lowest code."""
    winners = np.argmax(tm.arrays, axis=0)
    out = np.zeros_like(tm.arrays, dtype=np.uint8)
    out[winners, np.arange(tm.w)] = 1
    return out


def detect_events(binary: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs where the BG row is 0, as sorted end-exclusive spans."""
    bg = np.asarray(binary)[int(ClassLabel.BG)]
    active = (bg == 0).astype(np.int8)
    edges = np.flatnonzero(np.diff(np.concatenate(([0], active, [0]))))
    return [(int(edges[i]), int(edges[i + 1])) for i in range(0, len(edges), 2)]


def assign_class(binary: np.ndarray, span: tuple[int, int]) -> EventDetection:
    """Majority class over the span's non-BG samples, with vote shares retained."""
    start, end = span
    counts = np.asarray(binary)[:N_EVENT_CLASSES, start:end].sum(axis=1).astype(float)
    total = counts.sum()
    if total == 0:
        raise ValueError(f"span [{start}, {end}) contains no event-class samples")
    return EventDetection.from_proportions(start, end, counts / total)


def _merge_adjacent(
    binary: np.ndarray, events: list[EventDetection], merge_gap: int
) -> list[EventDetection]:
    merged: list[EventDetection] = []
    for ev in events:
        prev = merged[-1] if merged else None
        if (
            prev is not None
            and prev.assigned == ev.assigned
            and ev.start_sample - prev.end_sample < merge_gap
        ):
            merged[-1] = assign_class(binary, (prev.start_sample, ev.end_sample))
        else:
            merged.append(ev)
    return merged


def run_postprocessing(
    tm: TimeMaskSet, config: PostConfig | None = None
) -> list[EventDetection]:
    """Saturate, detect and classify, then merge near gaps and drop runts."""
    cfg = config or PostConfig()
    binary = binary_saturation(tm)
    events = [assign_class(binary, span) for span in detect_events(binary)]
    if cfg.merge_gap > 0:
        events = _merge_adjacent(binary, events, cfg.merge_gap)
    return [ev for ev in events if ev.length >= cfg.min_len]


def _detection_record(det: EventDetection, window: WindowBatch | None) -> dict:
    rec: dict = {
        "window_id": window.window_id if window is not None else "",
        "start_sample": det.start_sample,
        "end_sample": det.end_sample,
    }
    if window is not None and window.start_epoch_s != 0.0:
        fs = window.sample_rate_hz
        for key, sample in (("start_utc", det.start_sample), ("end_utc", det.end_sample)):
            ts = window.start_epoch_s + sample / fs
            rec[key] = datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()
    rec["class"] = det.assigned.name
    rec["proportions"] = [round(p, 9) for p in det.class_proportions]
    return rec


def detections_to_jsonl(
    detections: list[EventDetection], window: WindowBatch | None = None
) -> str:
    """One JSON object per detection, newline separated."""
    return "".join(
        json.dumps(_detection_record(d, window)) + "\n" for d in detections
    )


EVENT_TABLE_COLUMNS = (
    "window_id",
    "start_sample",
    "end_sample",
    "start_utc",
    "end_utc",
    "class",
    "proportions",
)


def detections_to_csv(
    detections: list[EventDetection], window: WindowBatch | None = None
) -> str:
    """Same columns as the JSONL table; proportions serialized as a JSON list."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=EVENT_TABLE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for det in detections:
        rec = _detection_record(det, window)
        rec["proportions"] = json.dumps(rec["proportions"])
        writer.writerow({k: rec.get(k, "") for k in EVENT_TABLE_COLUMNS})
    return buf.getvalue()
