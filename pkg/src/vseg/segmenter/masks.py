"""Per-class mask stacks and the VSGM binary mask-file format.

VSGM layout (little endian): magic "VSGM", u8 version=1, u16 class_count,
u32 n, then class_count * n * n 32-bit floats in class-major, row-major order.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import N_CLASSES

log = logging.getLogger(__name__)

MASK_MAGIC = b"VSGM"
MASK_VERSION = 1
_HEADER = struct.Struct("<4sBHI")


class FormatError(ValueError):
    """Raised for malformed binary files."""


@dataclass(frozen=True)
class MaskStack:
    """6 x N x N stack of per-class masks with values in [0, 1]."""

    masks: np.ndarray
    clamped_count: int = field(default=0, compare=False)

    def __post_init__(self):
        a = np.asarray(self.masks, dtype=np.float64)
        if a.ndim != 3 or a.shape[0] != N_CLASSES or a.shape[1] != a.shape[2]:
            raise ValueError(
                f"expected a {N_CLASSES} x N x N mask stack, got shape {a.shape}"
            )
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("mask values must lie in [0, 1]")
        object.__setattr__(self, "masks", a)

    @property
    def n(self) -> int:
        return self.masks.shape[1]

    def __getitem__(self, label) -> np.ndarray:
        return self.masks[int(label)]


def write_masks(path, masks: np.ndarray, class_count: int | None = None) -> None:
    """Write a class-major stack of square float masks as a VSGM file."""
    a = np.asarray(masks, dtype=np.float32)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected C x N x N masks, got shape {np.shape(masks)}")
    c = class_count if class_count is not None else a.shape[0]
    if c != a.shape[0]:
        raise ValueError(f"class_count {c} does not match {a.shape[0]} masks")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MASK_MAGIC, MASK_VERSION, c, a.shape[1]))
        fh.write(a.astype("<f4").tobytes(order="C"))


def read_mask_file(path) -> np.ndarray:
    """Read any VSGM file back to its C x N x N float32 payload."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated VSGM header at byte {len(raw)}")
    magic, version, class_count, n = _HEADER.unpack_from(raw)
    if magic != MASK_MAGIC:
        raise FormatError("not a VSGM file")
    if version != MASK_VERSION:
        raise FormatError(f"unsupported VSGM version {version}")
    need = _HEADER.size + class_count * n * n * 4
    if len(raw) != need:
        raise FormatError(
            f"VSGM payload ends at byte {len(raw)}, expected {need}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return data.reshape(class_count, n, n).astype(np.float32)


def import_masks(path) -> MaskStack:
    """Load an externally produced 6-class VSGM file as a MaskStack.

    Out-of-range values are clamped into [0, 1]; the clamp count is kept on
    the stack and logged so silent saturation is visible.
    """
    data = read_mask_file(path)
    if data.shape[0] != N_CLASSES:
        raise FormatError(f"expected {N_CLASSES} classes, got {data.shape[0]}")
    clamped = int(np.count_nonzero((data < 0.0) | (data > 1.0)))
    if clamped:
        log.warning("clamped %d out-of-range mask values from %s", clamped, path)
        data = np.clip(data, 0.0, 1.0)
    return MaskStack(masks=data.astype(np.float64), clamped_count=clamped)
