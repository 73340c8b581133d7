"""End-to-end inference: preprocess, fold, segment, unfold, post-process.

The streaming path slides a hop-spaced window over a continuous multi-station
feed, runs each window independently, and de-duplicates detections across
overlapping windows by merging same-class spans that overlap in absolute time.
Emission order by absolute start time is a hard contract.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .core import EventDetection, WindowBatch
from .dsp import BandpassSpec, bandpass, normalize_max_abs
from .fold import FoldGeometry, fold, unfold_to_time
from .postprocess import PostConfig, TimeMaskSet, run_postprocessing
from .segmenter.unet import ToyUNet


class StreamError(RuntimeError):
    pass


def preprocess_window(window: WindowBatch, spec: BandpassSpec | None) -> WindowBatch:
    """Bandpass (unless spec is None) then max-abs normalize."""
    if spec is not None:
        window = bandpass(window, spec)
    return normalize_max_abs(window)


def masks_to_time(masks: np.ndarray, geom: FoldGeometry) -> TimeMaskSet:
    """Unfold a 6 x N x N mask stack into per-class 1 x W time arrays."""
    return TimeMaskSet(np.stack([unfold_to_time(m, geom) for m in masks]))


def infer_window(
    window: WindowBatch,
    model: ToyUNet,
    geom: FoldGeometry,
    bandpass_spec: BandpassSpec | None = None,
    post: PostConfig | None = None,
) -> list[EventDetection]:
    """Full recognition chain for one window."""
    if (window.s, window.w) != (geom.s, geom.w):
        raise ValueError(
            f"window shape ({window.s}, {window.w}) does not match geometry "
            f"({geom.s}, {geom.w})"
        )
    pre = preprocess_window(window, bandpass_spec)
    masks = model.segment(fold(pre.samples, geom))
    return run_postprocessing(masks_to_time(masks.masks, geom), post)


def infer_batch(
    windows: list[WindowBatch],
    model: ToyUNet,
    geom: FoldGeometry,
    bandpass_spec: BandpassSpec | None = None,
    post: PostConfig | None = None,
    chunk: int = 32,
) -> list[list[EventDetection]]:
    """infer_window over many windows with batched model forwards."""
    images = []
    for win in windows:
        if (win.s, win.w) != (geom.s, geom.w):
            raise ValueError(f"window {win.window_id!r} does not match geometry")
        images.append(fold(preprocess_window(win, bandpass_spec).samples, geom))
    out = []
    for lo in range(0, len(images), chunk):
        probs = model.segment_batch(np.stack(images[lo : lo + chunk]))
        for stack in probs:
            out.append(run_postprocessing(masks_to_time(stack, geom), post))
    return out


@dataclass
class StreamStats:
    windows: int = 0
    samples_per_channel: int = 0
    channels: int = 0
    wall_s: float = 0.0
    sample_rate_hz: float = 100.0

    @property
    def samples_per_second(self) -> float:
        return self.samples_per_channel / self.wall_s if self.wall_s > 0 else 0.0

    @property
    def realtime_factor(self) -> float:
        return self.samples_per_second / self.sample_rate_hz


@dataclass
class _Pending:
    start: int
    end: int
    assigned: int
    proportions: np.ndarray


def merge_stream_detections(
    existing: list[_Pending], incoming: list[tuple[int, EventDetection]]
) -> None:
    """Fold absolute-time detections into the pending list, merging same-class
    overlapping spans with length-weighted proportion averaging."""
    for offset, det in incoming:
        start, end = offset + det.start_sample, offset + det.end_sample
        props = np.asarray(det.class_proportions) * (end - start)
        placed = False
        for pend in existing:
            if (
                pend.assigned == int(det.assigned)
                and start < pend.end
                and pend.start < end
            ):
                pend.start = min(pend.start, start)
                pend.end = max(pend.end, end)
                pend.proportions += props
                placed = True
                break
        if not placed:
            existing.append(_Pending(start, end, int(det.assigned), props))
    existing.sort(key=lambda p: p.start)


def _finalize(pend: _Pending) -> EventDetection:
    total = pend.proportions.sum()
    return EventDetection.from_proportions(pend.start, pend.end, pend.proportions / total)


class StreamProcessor:
    """Incremental hop-and-slide recognizer over a continuous S-channel feed."""

    def __init__(
        self,
        model: ToyUNet,
        geom: FoldGeometry,
        hop: int | None = None,
        bandpass_spec: BandpassSpec | None = None,
        post: PostConfig | None = None,
        sample_rate_hz: float = 100.0,
    ):
        hop = geom.w // 2 if hop is None else hop
        if not 1 <= hop <= geom.w:
            raise ValueError(f"hop must be in 1..{geom.w}, got {hop}")
        self.model = model
        self.geom = geom
        self.hop = hop
        self.bandpass_spec = bandpass_spec
        self.post = post
        self.stats = StreamStats(channels=geom.s, sample_rate_hz=sample_rate_hz)
        self._buffer = np.empty((geom.s, 0))
        self._next_start = 0
        self._pending: list[_Pending] = []

    def push(self, block: np.ndarray) -> list[EventDetection]:
        """Feed an S x k block; returns detections that can no longer change."""
        a = np.atleast_2d(np.asarray(block, dtype=np.float64))
        if a.shape[0] != self.geom.s:
            raise StreamError(
                f"channel count changed mid-stream: got {a.shape[0]}, "
                f"expected {self.geom.s}"
            )
        t0 = time.perf_counter()
        self._buffer = np.concatenate([self._buffer, a], axis=1)
        self.stats.samples_per_channel += a.shape[1]
        out = self._drain(final=False)
        self.stats.wall_s += time.perf_counter() - t0
        return out

    def finish(self) -> list[EventDetection]:
        """Flush every remaining pending detection at end of stream."""
        t0 = time.perf_counter()
        out = self._drain(final=True)
        out.extend(_finalize(p) for p in self._pending)
        self._pending.clear()
        self.stats.wall_s += time.perf_counter() - t0
        return out

    def _drain(self, final: bool) -> list[EventDetection]:
        w, hop = self.geom.w, self.hop
        emitted: list[EventDetection] = []
        while self._buffer.shape[1] >= w:
            window = WindowBatch(
                samples=self._buffer[:, :w],
                sample_rate_hz=self.stats.sample_rate_hz,
                window_id=f"stream-{self._next_start}",
            )
            pre = preprocess_window(window, self.bandpass_spec)
            masks = self.model.segment(fold(pre.samples, self.geom))
            dets = run_postprocessing(masks_to_time(masks.masks, self.geom), self.post)
            merge_stream_detections(
                self._pending, [(self._next_start, d) for d in dets]
            )
            self.stats.windows += 1
            self._next_start += hop
            self._buffer = self._buffer[:, hop:]
            # safe to emit anything no future window can still overlap, in
            # start order so emission order is monotone
            while self._pending and self._pending[0].end <= self._next_start:
                emitted.append(_finalize(self._pending.pop(0)))
        return emitted


def run_stream(
    source,
    model: ToyUNet,
    geom: FoldGeometry,
    hop: int | None = None,
    bandpass_spec: BandpassSpec | None = None,
    post: PostConfig | None = None,
    sample_rate_hz: float = 100.0,
) -> tuple[list[EventDetection], StreamStats]:
    """Run the streaming recognizer over an iterable of S x k blocks."""
    proc = StreamProcessor(model, geom, hop, bandpass_spec, post, sample_rate_hz)
    detections: list[EventDetection] = []
    for block in source:
        detections.extend(proc.push(block))
    detections.extend(proc.finish())
    return detections, proc.stats


# -- raw stdin/stdout stream framing ---------------------------------------------


def read_stream_header(fh) -> dict:
    """One-line JSON header: {"s": channels, "sample_rate": hz}."""
    line = fh.readline()
    if isinstance(line, bytes):
        line = line.decode()
    try:
        header = json.loads(line)
        s = int(header["s"])
        rate = float(header.get("sample_rate", 100.0))
    except (ValueError, KeyError, TypeError) as exc:
        raise StreamError(f"bad stream header: {exc}") from exc
    return {"s": s, "sample_rate": rate}


def iter_raw_blocks(fh, s: int, chunk_samples: int = 4096):
    """Little-endian float32, channel-interleaved frames -> S x k blocks."""
    frame_bytes = 4 * s
    while True:
        raw = fh.read(frame_bytes * chunk_samples)
        if not raw:
            return
        if len(raw) % frame_bytes:
            raise StreamError(
                f"stream truncated mid-frame ({len(raw) % frame_bytes} stray bytes)"
            )
        yield np.frombuffer(raw, dtype="<f4").reshape(-1, s).T.astype(np.float64)


def write_raw_stream(fh, samples: np.ndarray, sample_rate_hz: float = 100.0) -> None:
    """Inverse of the reader, for tests and interop."""
    a = np.asarray(samples)
    fh.write((json.dumps({"s": a.shape[0], "sample_rate": sample_rate_hz}) + "\n").encode())
    fh.write(a.T.astype("<f4").tobytes(order="C"))
