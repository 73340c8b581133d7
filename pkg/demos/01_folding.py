"""Folding and unfolding: how an 8-channel window becomes a square image.

The transform is a pure relocation: the S x W window is cut into S x N
patches along time and the patches are stacked vertically, giving an N x N
image with N = sqrt(S * W). Run it and watch a tiny example move around.
"""
import numpy as np

from vseg import geometry, fold, unfold_to_channels, unfold_to_time

# A 2-channel, 8-sample window is the smallest interesting case: N = 4.
geom = geometry(2, 8)
window = np.array(
    [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [10, 11, 12, 13, 14, 15, 16, 17],
    ],
    dtype=float,
)
print("window (2 x 8):")
print(window)

image = fold(window, geom)
print("\nfolded image (4 x 4) - patches of 2 rows stacked in time order:")
print(image)

back = unfold_to_channels(image, geom)
print("\nunfolded back to channels, identical to the input:", np.array_equal(back, window))

# Summing over channels gives the 1 x W time signal used for detection masks.
print("\nunfold_to_time =", unfold_to_time(image, geom))
print("channel sum     =", window.sum(axis=0))

# The paper-scale geometry: 8 stations x 8192 samples -> 256 x 256.
big = geometry(8, 8192)
print(f"\npaper scale: {big.s} channels x {big.w} samples -> {big.n} x {big.n} image")

rng = np.random.default_rng(0)
x = rng.normal(size=(8, 8192))
assert np.array_equal(unfold_to_channels(fold(x, big), big), x)
print("round trip at 8 x 8192 is exact.")

# Invalid geometries are rejected with the violated constraint spelled out.
try:
    geometry(8, 1000)
except ValueError as exc:
    print(f"\ngeometry(8, 1000) -> {exc}")
