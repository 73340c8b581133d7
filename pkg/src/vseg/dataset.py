"""Corpus machinery: window extraction, target masks, augmentation, balancing,
synthetic corpus generation and the VSGD on-disk window format.

VSGD layout (little endian): magic "VSGD", u8 version=1, u16 S, u32 W,
f64 sample_rate_hz, f64 start_epoch_seconds (0 when unknown), u16 annotation
count, annotations as (u32 start, u32 end, u8 class), then S*W 32-bit floats
row-major. window_id and station_ids live in a JSON sidecar next to the file.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .core import (
    ClassLabel,
    EVENT_CLASSES,
    EventAnnotation,
    N_CLASSES,
    WindowBatch,
    label_from_code,
)
from .fold import FoldGeometry, fold
from .segmenter.masks import FormatError, MaskStack

WINDOW_MAGIC = b"VSGD"
WINDOW_VERSION = 1
_HEADER = struct.Struct("<4sBHIddH")
_ANNOTATION = struct.Struct("<IIB")


@dataclass(frozen=True)
class LabeledWindow:
    window: WindowBatch
    annotations: tuple[EventAnnotation, ...] = ()

    def __post_init__(self):
        anns = tuple(sorted(self.annotations))
        w = self.window.w
        prev_end = 0
        for a in anns:
            if a.start_sample < prev_end:
                raise ValueError("annotations overlap or are unsorted")
            if a.end_sample > w:
                raise ValueError(f"annotation end {a.end_sample} beyond window length {w}")
            prev_end = a.end_sample
        object.__setattr__(self, "annotations", anns)

    @property
    def label(self) -> ClassLabel:
        """Single-event corpus convention: the event class, or BG if empty."""
        return self.annotations[0].label if self.annotations else ClassLabel.BG


@dataclass(frozen=True)
class SynthClassProfile:
    label: ClassLabel
    duration_mean_s: float
    duration_jitter: float
    band_hz: tuple[float, float]
    envelope: str
    station_decay: float = 0.85

    def __post_init__(self):
        if self.duration_mean_s <= 0:
            raise ValueError("duration_mean_s must be positive")
        if self.envelope not in ("impulsive", "emergent", "sustained"):
            raise ValueError(f"unknown envelope kind {self.envelope!r}")
        if not 0 < self.band_hz[0] < self.band_hz[1]:
            raise ValueError(f"bad frequency band {self.band_hz}")


# Reference full-scale durations (seconds) shrink proportionally for short
# windows so every class stays placeable; tremor always outlasts the window.
_FULL_SCALE_WINDOW_S = 81.92
_PROFILE_TABLE = (
    (ClassLabel.VT, 16.0, 0.25, (6.0, 14.0), "impulsive", 0.85),
    (ClassLabel.LP, 29.0, 0.25, (1.0, 4.0), "emergent", 0.90),
    (ClassLabel.TR, 71.0, 0.15, (2.0, 6.0), "sustained", 0.90),
    (ClassLabel.AV, 36.0, 0.25, (2.0, 10.0), "emergent", 0.80),
    (ClassLabel.IC, 7.0, 0.30, (4.0, 12.0), "impulsive", 0.85),
)


def default_profiles(
    geom: FoldGeometry, sample_rate_hz: float = 100.0, band_shift_hz: float = 0.0
) -> list[SynthClassProfile]:
    """Per-class synthesis profiles scaled to the window length.

    band_shift_hz moves every band upward; use it to fabricate a second
    "volcano" whose spectral signatures differ from the training one.
    """
    window_s = geom.w / sample_rate_hz
    scale = min(1.0, window_s / _FULL_SCALE_WINDOW_S)
    nyq = sample_rate_hz / 2
    profiles = []
    for label, dur, jitter, (lo, hi), env, decay in _PROFILE_TABLE:
        dur = max(dur * scale, 0.6)
        if env == "sustained":
            dur = max(dur, 1.25 * window_s)
        hi_s = min(hi + band_shift_hz, nyq * 0.9)
        lo_s = min(lo + band_shift_hz, hi_s * 0.75)
        profiles.append(
            SynthClassProfile(label, dur, jitter, (lo_s, hi_s), env, decay)
        )
    return profiles


def _envelope(kind: str, length: int) -> np.ndarray:
    """Unimodal amplitude shape on [0, length), peaking at 1."""
    i = np.arange(length, dtype=float)
    if kind == "impulsive":
        attack = max(2, int(0.05 * length))
        tau = 0.18 * length
        env = np.exp(-(i - attack) / tau)
        env[:attack] = i[:attack] / attack
    elif kind == "emergent":
        attack = max(2, int(0.40 * length))
        tau = 0.25 * length
        env = np.exp(-(i - attack) / tau)
        env[:attack] = (i[:attack] / attack) ** 2
    else:  # sustained
        attack = max(2, int(0.05 * length))
        release = max(2, int(0.05 * length))
        env = np.ones(length)
        env[:attack] = i[:attack] / attack
        env[length - release :] = (length - 1 - i[length - release :]) / release
    return np.clip(env, 0.0, 1.0)


def synth_event(
    profile: SynthClassProfile, rng: np.random.Generator, sample_rate_hz: float
) -> tuple[np.ndarray, np.ndarray]:
    """One synthesized event trace and its envelope, at the profile's duration.

    The envelope is applied before a zero-phase bandpass so the emitted burst
    is genuinely band-limited; the short burst's own spectral spread would
    otherwise leak well outside the profile band.
    """
    jitter = 1.0 + profile.duration_jitter * rng.uniform(-1.0, 1.0)
    length = max(8, int(round(profile.duration_mean_s * jitter * sample_rate_hz)))
    env = _envelope(profile.envelope, length)
    pad = 128
    raw = rng.standard_normal(length + 2 * pad)
    raw[:pad] = 0.0
    raw[pad + length :] = 0.0
    raw[pad : pad + length] *= env
    sos = signal.butter(4, profile.band_hz, btype="bandpass", fs=sample_rate_hz, output="sos")
    shaped = signal.sosfiltfilt(sos, raw)[pad : pad + length]
    peak = np.abs(shaped).max()
    return (shaped / peak if peak > 0 else shaped), env


def _support_span(env: np.ndarray, threshold: float) -> tuple[int, int]:
    above = np.flatnonzero(env > threshold)
    if len(above) == 0:
        return 0, len(env)
    return int(above[0]), int(above[-1]) + 1


def synth_corpus(
    profiles: list[SynthClassProfile],
    count_per_class: int,
    geom: FoldGeometry,
    noise_floor: float = 0.05,
    seed: int = 0,
    bg_count: int = 0,
    sample_rate_hz: float = 100.0,
    volcano: str = "SYNTH",
) -> list[LabeledWindow]:
    """Deterministic synthetic corpus: one event per window plus optional
    noise-only BG windows.

    Each window carries Gaussian background noise at noise_floor; the event is
    band-limited noise shaped by the profile envelope, attenuated across
    stations by station_decay^channel. The annotation covers the envelope's
    support above the noise floor.
    """
    have = {p.label for p in profiles}
    missing = [c.name for c in EVENT_CLASSES if c not in have]
    if missing:
        raise ValueError(f"profiles missing event classes: {', '.join(missing)}")
    rng = np.random.default_rng(seed)
    s, w = geom.s, geom.w
    out: list[LabeledWindow] = []
    for profile in sorted(profiles, key=lambda p: int(p.label)):
        for k in range(count_per_class):
            noise = rng.normal(0.0, noise_floor, size=(s, w))
            trace, env = synth_event(profile, rng, sample_rate_hz)
            amp = rng.uniform(0.8, 1.2)
            if len(trace) >= w:
                off_in_event = rng.integers(0, len(trace) - w + 1)
                placed = trace[off_in_event : off_in_event + w]
                placed_env = env[off_in_event : off_in_event + w]
                start = 0
            else:
                start = int(rng.integers(0, w - len(trace) + 1))
                placed = trace
                placed_env = env
            lo, hi = _support_span(placed_env, noise_floor)
            if hi <= lo:
                lo, hi = 0, len(placed_env)
            decay = profile.station_decay ** np.arange(s)
            samples = noise
            samples[:, start : start + len(placed)] += (
                amp * decay[:, None] * placed[None, :]
            )
            window = WindowBatch(
                samples=samples,
                station_ids=tuple(f"ST{c}" for c in range(s)),
                sample_rate_hz=sample_rate_hz,
                window_id=f"{volcano}-{profile.label.name}-{k:05d}",
            )
            ann = EventAnnotation(start + lo, start + hi, profile.label)
            out.append(LabeledWindow(window, (ann,)))
    for k in range(bg_count):
        noise = rng.normal(0.0, noise_floor, size=(s, w))
        window = WindowBatch(
            samples=noise,
            station_ids=tuple(f"ST{c}" for c in range(s)),
            sample_rate_hz=sample_rate_hz,
            window_id=f"{volcano}-BG-{k:05d}",
        )
        out.append(LabeledWindow(window, ()))
    return out


# -- target masks ---------------------------------------------------------------


def make_target(lw: LabeledWindow, geom: FoldGeometry) -> MaskStack:
    """Fold per-class one-hot time arrays (replicated over channels) into masks."""
    if (lw.window.s, lw.window.w) != (geom.s, geom.w):
        raise ValueError(
            f"window shape ({lw.window.s}, {lw.window.w}) does not match geometry "
            f"({geom.s}, {geom.w})"
        )
    rows = np.zeros((N_CLASSES, geom.w))
    rows[int(ClassLabel.BG)] = 1.0
    for ann in lw.annotations:
        rows[int(ann.label), ann.start_sample : ann.end_sample] = 1.0
        rows[int(ClassLabel.BG), ann.start_sample : ann.end_sample] = 0.0
    masks = np.stack(
        [fold(np.tile(row, (geom.s, 1)), geom) for row in rows]
    )
    return MaskStack(masks=masks)


# -- augmentation and balancing ---------------------------------------------------


def augment_shuffle_stations(lw: LabeledWindow, seed: int) -> LabeledWindow:
    """Seeded random permutation of the channel rows; annotations unchanged."""
    perm = np.random.default_rng(seed).permutation(lw.window.s)
    window = WindowBatch(
        samples=lw.window.samples[perm],
        station_ids=tuple(lw.window.station_ids[i] for i in perm),
        sample_rate_hz=lw.window.sample_rate_hz,
        window_id=lw.window.window_id + f"-aug{seed}",
        start_epoch_s=lw.window.start_epoch_s,
    )
    return LabeledWindow(window, lw.annotations)


def balance_classes(
    pool: list[LabeledWindow], per_class: int, seed: int = 0
) -> list[LabeledWindow]:
    """Exactly per_class windows per class present in the pool.

    Over-represented classes are sampled down without replacement; the rest
    are topped up with station-shuffled copies. Every event class must appear
    in the pool; BG windows, when present, are balanced the same way.
    """
    rng = np.random.default_rng(seed)
    groups: dict[ClassLabel, list[LabeledWindow]] = {}
    for lw in pool:
        groups.setdefault(lw.label, []).append(lw)
    for cls in EVENT_CLASSES:
        if not groups.get(cls):
            raise ValueError(f"class {cls.name} is absent from the pool")
    out: list[LabeledWindow] = []
    for cls in sorted(groups, key=int):
        members = groups[cls]
        if len(members) >= per_class:
            picks = rng.choice(len(members), size=per_class, replace=False)
            out.extend(members[i] for i in picks)
        else:
            out.extend(members)
            deficit = per_class - len(members)
            sources = rng.choice(len(members), size=deficit, replace=True)
            for j, src in enumerate(sources):
                out.append(
                    augment_shuffle_stations(members[src], seed=int(rng.integers(2**31)))
                )
    return out


def build_training_pairs(
    windows: list[LabeledWindow],
    geom: FoldGeometry,
    preprocess=None,
) -> list[tuple[np.ndarray, MaskStack]]:
    """(folded image, target mask) pairs, applying an optional window transform."""
    pairs = []
    for lw in windows:
        win = preprocess(lw.window) if preprocess is not None else lw.window
        pairs.append((fold(win.samples, geom), make_target(lw, geom)))
    return pairs


# -- window extraction from continuous records -----------------------------------


def _subtract_interval(
    spans: list[tuple[int, int]], lo: int, hi: int
) -> list[tuple[int, int]]:
    """Remove [lo, hi) from a list of disjoint inclusive-exclusive spans."""
    out = []
    for a, b in spans:
        if hi <= a or b <= lo:
            out.append((a, b))
            continue
        if a < lo:
            out.append((a, lo))
        if hi < b:
            out.append((hi, b))
    return out


def feasible_offsets(
    event: tuple[int, int], others: list[tuple[int, int]], w: int, total: int
) -> list[tuple[int, int]]:
    """Window start offsets (as [lo, hi) spans) isolating one catalog event.

    A window must contain the event fully when it fits (else sit fully inside
    it) and must not intersect any other catalog event.
    """
    start, end = event
    if end - start <= w:
        lo = max(0, end - w)
        hi = min(start, total - w)
    else:
        lo = start
        hi = min(end - w, total - w)
    if hi < lo:
        return []
    spans = [(lo, hi + 1)]
    for s2, e2 in others:
        spans = _subtract_interval(spans, s2 - w + 1, e2)
    return spans


def extract_windows(
    trace: np.ndarray,
    catalog: list[tuple[int, int, ClassLabel]],
    w: int,
    seed: int = 0,
    sample_rate_hz: float = 100.0,
    station_ids: tuple[str, ...] = (),
    start_epoch_s: float = 0.0,
    id_prefix: str = "win",
) -> list[LabeledWindow]:
    """One isolated-event window per catalog entry, placed uniformly at random.

    Events with no isolated placement (neighbors closer than the window) are
    skipped. The portion rule applies to events longer than the window: the
    window lands uniformly inside the event.
    """
    a = np.asarray(trace, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"trace must be S x T, got shape {a.shape}")
    total = a.shape[1]
    rng = np.random.default_rng(seed)
    spans_all = [(s, e) for s, e, _ in catalog]
    out = []
    for k, (start, end, label) in enumerate(catalog):
        if not 0 <= start < end <= total:
            raise ValueError(f"catalog event [{start}, {end}) outside trace [0, {total})")
        others = spans_all[:k] + spans_all[k + 1 :]
        spans = feasible_offsets((start, end), others, w, total)
        count = sum(hi - lo for lo, hi in spans)
        if count == 0:
            continue
        pick = int(rng.integers(count))
        for lo, hi in spans:
            if pick < hi - lo:
                offset = lo + pick
                break
            pick -= hi - lo
        window = WindowBatch(
            samples=a[:, offset : offset + w],
            station_ids=station_ids,
            sample_rate_hz=sample_rate_hz,
            window_id=f"{id_prefix}-{k:05d}",
            start_epoch_s=(
                start_epoch_s + offset / sample_rate_hz if start_epoch_s else 0.0
            ),
        )
        ann = EventAnnotation(max(start - offset, 0), min(end - offset, w), label)
        out.append(LabeledWindow(window, (ann,)))
    return out


# -- VSGD files and manifests ------------------------------------------------------


def write_window_file(path, lw: LabeledWindow) -> None:
    path = Path(path)
    win = lw.window
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                WINDOW_MAGIC,
                WINDOW_VERSION,
                win.s,
                win.w,
                win.sample_rate_hz,
                win.start_epoch_s,
                len(lw.annotations),
            )
        )
        for ann in lw.annotations:
            fh.write(_ANNOTATION.pack(ann.start_sample, ann.end_sample, int(ann.label)))
        fh.write(win.samples.astype("<f4").tobytes(order="C"))
    sidecar = {"window_id": win.window_id, "station_ids": list(win.station_ids)}
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar))


def read_window_file(path) -> LabeledWindow:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated VSGD header at byte {len(raw)}")
    magic, version, s, w, fs, epoch, n_ann = _HEADER.unpack_from(raw)
    if magic != WINDOW_MAGIC:
        raise FormatError("not a VSGD file")
    if version != WINDOW_VERSION:
        raise FormatError(f"unsupported VSGD version {version}")
    pos = _HEADER.size
    annotations = []
    for _ in range(n_ann):
        if len(raw) < pos + _ANNOTATION.size:
            raise FormatError(f"truncated VSGD annotation at byte {len(raw)}")
        start, end, code = _ANNOTATION.unpack_from(raw, pos)
        annotations.append(EventAnnotation(start, end, label_from_code(code)))
        pos += _ANNOTATION.size
    need = pos + s * w * 4
    if len(raw) != need:
        raise FormatError(f"VSGD payload ends at byte {len(raw)}, expected {need}")
    samples = np.frombuffer(raw, dtype="<f4", offset=pos).reshape(s, w)
    sidecar_path = path.with_name(path.name + ".json")
    window_id, station_ids = path.stem, ()
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text())
        window_id = meta.get("window_id", window_id)
        station_ids = tuple(meta.get("station_ids", ()))
    window = WindowBatch(
        samples=samples.astype(np.float64),
        station_ids=station_ids,
        sample_rate_hz=fs,
        window_id=window_id,
        start_epoch_s=epoch,
    )
    return LabeledWindow(window, tuple(annotations))


def write_corpus(
    windows: list[LabeledWindow],
    out_dir,
    volcano: str = "SYNTH",
    split: str = "train",
    manifest_name: str = "manifest.jsonl",
    append: bool = False,
) -> Path:
    """Write VSGD files plus a JSONL manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for lw in windows:
        name = f"{lw.window.window_id}.vsgd"
        write_window_file(out_dir / name, lw)
        records.append(
            {
                "window_id": lw.window.window_id,
                "path": name,
                "class": lw.label.name,
                "volcano": volcano,
                "split": split,
            }
        )
    manifest = out_dir / manifest_name
    with open(manifest, "a" if append else "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return manifest


def read_manifest(path) -> list[dict]:
    path = Path(path)
    records = []
    for line in path.read_text().splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


def load_corpus(manifest_path, split: str | None = None) -> list[LabeledWindow]:
    """Load every window a manifest references, optionally filtered by split tag."""
    manifest_path = Path(manifest_path)
    out = []
    for rec in read_manifest(manifest_path):
        if split is not None and rec.get("split") != split:
            continue
        out.append(read_window_file(manifest_path.parent / rec["path"]))
    return out
