"""Dice loss: 1 - 2|A.B| / (|A| + |B|), averaged over the six classes."""
from __future__ import annotations

import numpy as np

from .masks import MaskStack

DEFAULT_SMOOTHING = 1e-6


def _as_stack(x) -> np.ndarray:
    if isinstance(x, MaskStack):
        return x.masks
    return np.asarray(x, dtype=np.float64)


def dice_loss(pred, target, smoothing: float = DEFAULT_SMOOTHING) -> float:
    """Mean over classes of 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).

    The smoothing term keeps empty classes well defined; with binary inputs and
    perfect overlap the loss is 0 up to smoothing-induced rounding.
    """
    p = _as_stack(pred)
    t = _as_stack(target)
    if p.shape != t.shape:
        raise ValueError(f"pred shape {p.shape} != target shape {t.shape}")
    axes = tuple(range(1, p.ndim))
    inter = (p * t).sum(axis=axes)
    sums = p.sum(axis=axes) + t.sum(axis=axes)
    per_class = 1.0 - (2.0 * inter + smoothing) / (sums + smoothing)
    return float(per_class.mean())
