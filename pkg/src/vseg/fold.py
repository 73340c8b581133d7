"""Folding and unfolding: the bijection between S x W signals and N x N images.

An S x W window is cut into patches of size S x N and the patches are stacked
top-to-bottom in time order, giving a square single-channel image with
N = sqrt(S * W). The normative index map is

    image[p * S + c, j] == window[c, p * N + j]

for patch index p, channel c and column j. Unfolding inverts the map; the
time-mask variant additionally sums over channels to a 1 x W array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised when (s, w) cannot form a square image."""


@dataclass(frozen=True)
class FoldGeometry:
    s: int
    w: int
    n: int

    @property
    def patches(self) -> int:
        return self.n // self.s


def geometry(s: int, w: int) -> FoldGeometry:
    """Validated fold geometry for s channels of w samples; n = sqrt(s*w)."""
    if s < 1 or w < 1:
        raise GeometryError(f"need s >= 1 and w >= 1, got s={s}, w={w}")
    n = math.isqrt(s * w)
    if n * n != s * w:
        raise GeometryError(
            f"s*w = {s}*{w} = {s * w} is not a perfect square, so n = sqrt(s*w) "
            "has no integer solution"
        )
    if n % s != 0:
        raise GeometryError(
            f"image side n={n} is not divisible by channel count s={s}; the image "
            "cannot be cut into whole s x n patches"
        )
    return FoldGeometry(s=s, w=w, n=n)


def _check_window_shape(window: np.ndarray, geom: FoldGeometry) -> np.ndarray:
    a = np.asarray(window)
    if a.shape != (geom.s, geom.w):
        raise ValueError(f"window shape {a.shape} does not match ({geom.s}, {geom.w})")
    return a


def _check_image_shape(image: np.ndarray, geom: FoldGeometry) -> np.ndarray:
    a = np.asarray(image)
    if a.shape != (geom.n, geom.n):
        raise ValueError(f"image shape {a.shape} does not match ({geom.n}, {geom.n})")
    return a


def fold(window: np.ndarray, geom: FoldGeometry) -> np.ndarray:
    """Relocate an S x W window into an N x N image; values are only moved."""
    a = _check_window_shape(window, geom)
    return np.ascontiguousarray(
        a.reshape(geom.s, geom.patches, geom.n).swapaxes(0, 1).reshape(geom.n, geom.n)
    )


def unfold_to_channels(image: np.ndarray, geom: FoldGeometry) -> np.ndarray:
    """Exact inverse of fold: N x N image back to the S x W channel layout."""
    a = _check_image_shape(image, geom)
    return np.ascontiguousarray(
        a.reshape(geom.patches, geom.s, geom.n).swapaxes(0, 1).reshape(geom.s, geom.w)
    )


def unfold_to_time(image: np.ndarray, geom: FoldGeometry) -> np.ndarray:
    """Unfold and sum across channels, producing the 1 x W time mask."""
    return unfold_to_channels(image, geom).sum(axis=0)
