"""Preprocessing: Butterworth bandpass and cross-station max-abs normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import WindowBatch


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float = 1.0
    high_hz: float = 15.0
    order: int = 4
    zero_phase: bool = True

    def validate_for(self, sample_rate_hz: float) -> None:
        if self.order < 1:
            raise ValueError(f"filter order must be >= 1, got {self.order}")
        if not 0 < self.low_hz < self.high_hz < sample_rate_hz / 2:
            raise ValueError(
                f"band edges must satisfy 0 < {self.low_hz} < {self.high_hz} < "
                f"{sample_rate_hz / 2} (Nyquist)"
            )

    def sos(self, sample_rate_hz: float) -> np.ndarray:
        self.validate_for(sample_rate_hz)
        return signal.butter(
            self.order,
            [self.low_hz, self.high_hz],
            btype="bandpass",
            fs=sample_rate_hz,
            output="sos",
        )


def bandpass(window: WindowBatch, spec: BandpassSpec | None = None) -> WindowBatch:
    """Bandpass every channel independently; all-zero channels stay all-zero.

    Zero-phase mode runs the filter forward and backward (no onset shift);
    single-pass mode reflect-pads the window first to suppress edge transients.
    """
    spec = spec or BandpassSpec()
    sos = spec.sos(window.sample_rate_hz)
    x = window.samples
    if spec.zero_phase:
        pad = min(3 * (2 * sos.shape[0] + 1) * 10, x.shape[1] - 1)
        y = signal.sosfiltfilt(sos, x, axis=1, padtype="odd", padlen=pad)
    else:
        pad = min(3 * (2 * sos.shape[0] + 1) * 10, x.shape[1] - 1)
        padded = np.concatenate(
            [2 * x[:, :1] - x[:, pad:0:-1], x], axis=1
        )
        y = signal.sosfilt(sos, padded, axis=1)[:, pad:]
    # Filtering zeros through reflected zero padding is exactly zero already;
    # re-assert to keep the all-zero-channel contract immune to rounding.
    dead = ~np.any(x, axis=1)
    if dead.any():
        y = y.copy()
        y[dead] = 0.0
    return window.with_samples(y)


def normalize_max_abs(window: WindowBatch) -> WindowBatch:
    """Divide all channels by the single max |amplitude| across stations.

    All-zero windows are returned unchanged; relative amplitudes between
    stations are preserved because the divisor is shared.
    """
    peak = np.abs(window.samples).max()
    if peak == 0.0:
        return window
    return window.with_samples(window.samples / peak)
