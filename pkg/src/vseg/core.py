"""Shared domain types: class vocabulary, waveform windows, annotations, detections."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class ClassLabel(IntEnum):
    """Six-way vocabulary. Codes are frozen; BG is the unique no-event label."""

    VT = 0
    LP = 1
    TR = 2
    AV = 3
    IC = 4
    BG = 5


EVENT_CLASSES: tuple[ClassLabel, ...] = (
    ClassLabel.VT,
    ClassLabel.LP,
    ClassLabel.TR,
    ClassLabel.AV,
    ClassLabel.IC,
)

N_CLASSES = len(ClassLabel)
N_EVENT_CLASSES = len(EVENT_CLASSES)


def label_from_code(code: int) -> ClassLabel:
    """Decode an integer class code; raises ValueError outside 0..5."""
    try:
        return ClassLabel(code)
    except ValueError:
        raise ValueError(f"class code {code} out of range 0..{N_CLASSES - 1}") from None


def label_from_name(name: str) -> ClassLabel:
    try:
        return ClassLabel[name.upper()]
    except KeyError:
        raise ValueError(f"unknown class label {name!r}") from None


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    if out is a:
        out = a.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class WindowBatch:
    """One S-channel, W-sample waveform window.

    Channels for absent stations are all-zero rows; station_ids may carry the
    empty string for those. Samples are immutable after construction.
    """

    samples: np.ndarray
    station_ids: tuple[str, ...] = ()
    sample_rate_hz: float = 100.0
    window_id: str = ""
    start_epoch_s: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"samples must be a 2D S x W array, got shape {a.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        ids = tuple(self.station_ids)
        if not ids:
            ids = ("",) * a.shape[0]
        elif len(ids) != a.shape[0]:
            raise ValueError(
                f"station_ids has {len(ids)} entries for {a.shape[0]} channels"
            )
        object.__setattr__(self, "samples", _freeze(a))
        object.__setattr__(self, "station_ids", ids)

    @property
    def s(self) -> int:
        return self.samples.shape[0]

    @property
    def w(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples: np.ndarray) -> "WindowBatch":
        """Copy of this window with replaced sample data (same shape)."""
        if np.shape(samples) != self.samples.shape:
            raise ValueError(
                f"replacement shape {np.shape(samples)} != {self.samples.shape}"
            )
        return WindowBatch(
            samples=samples,
            station_ids=self.station_ids,
            sample_rate_hz=self.sample_rate_hz,
            window_id=self.window_id,
            start_epoch_s=self.start_epoch_s,
        )


@dataclass(frozen=True, order=True)
class EventAnnotation:
    """Ground-truth event extent in window sample coordinates, end-exclusive."""

    start_sample: int
    end_sample: int
    label: ClassLabel = field(compare=False)

    def __post_init__(self):
        if self.label == ClassLabel.BG:
            raise ValueError("annotations use event classes only, not BG")
        if not 0 <= self.start_sample < self.end_sample:
            raise ValueError(
                f"invalid span [{self.start_sample}, {self.end_sample})"
            )


@dataclass(frozen=True)
class EventDetection:
    """One detected event with its per-class sample-share uncertainty signal.

    class_proportions holds the share of in-event samples voted for each of the
    five event classes (VT, LP, TR, AV, IC order); assigned is their argmax with
    ties broken toward the lowest class code.
    """

    start_sample: int
    end_sample: int
    assigned: ClassLabel
    class_proportions: tuple[float, ...]

    def __post_init__(self):
        if self.start_sample >= self.end_sample:
            raise ValueError(
                f"invalid span [{self.start_sample}, {self.end_sample})"
            )
        props = tuple(float(p) for p in self.class_proportions)
        if len(props) != N_EVENT_CLASSES:
            raise ValueError(f"expected {N_EVENT_CLASSES} proportions, got {len(props)}")
        if any(p < 0 for p in props):
            raise ValueError("proportions must be non-negative")
        total = sum(props)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"proportions must sum to 1, got {total}")
        winner = max(range(N_EVENT_CLASSES), key=lambda i: (props[i], -i))
        if winner != int(self.assigned):
            raise ValueError(
                f"assigned class {self.assigned.name} is not the proportion argmax"
            )
        object.__setattr__(self, "class_proportions", props)

    @classmethod
    def from_proportions(
        cls, start: int, end: int, proportions
    ) -> "EventDetection":
        props = tuple(float(p) for p in proportions)
        winner = max(range(len(props)), key=lambda i: (props[i], -i))
        return cls(start, end, ClassLabel(winner), props)

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample
