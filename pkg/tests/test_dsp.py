import numpy as np
import pytest

from vseg.core import WindowBatch
from vseg.dsp import BandpassSpec, bandpass, normalize_max_abs

FS = 100.0


def butterworth_bandpass_gain(f_hz: float, low: float, high: float, order: int) -> float:
    """Analytic magnitude response of the analog Butterworth bandpass prototype."""
    if f_hz == 0:
        return 0.0
    u = (f_hz**2 - low * high) / (f_hz * (high - low))
    return 1.0 / np.sqrt(1.0 + u ** (2 * order))


def tone(freq: float, s: int = 2, w: int = 4096) -> WindowBatch:
    t = np.arange(w) / FS
    x = np.sin(2 * np.pi * freq * t)
    return WindowBatch(np.tile(x, (s, 1)), sample_rate_hz=FS)


def rms(a: np.ndarray) -> float:
    return float(np.sqrt(np.mean(a**2)))


class TestBandpassSpec:
    def test_defaults(self):
        spec = BandpassSpec()
        assert (spec.low_hz, spec.high_hz, spec.order, spec.zero_phase) == (1.0, 15.0, 4, True)

    @pytest.mark.parametrize("low,high", [(0.0, 15.0), (15.0, 1.0), (1.0, 60.0)])
    def test_invalid_edges_rejected(self, low, high):
        with pytest.raises(ValueError):
            BandpassSpec(low_hz=low, high_hz=high).validate_for(FS)


class TestBandpass:
    def test_all_zero_window_stays_zero(self):
        out = bandpass(WindowBatch(np.zeros((4, 1024))), BandpassSpec())
        np.testing.assert_array_equal(out.samples, np.zeros((4, 1024)))

    def test_zero_channels_stay_zero_others_filtered(self):
        rng = np.random.default_rng(0)
        x = np.zeros((3, 2048))
        x[0] = rng.normal(size=2048)
        x[2] = rng.normal(size=2048)
        out = bandpass(WindowBatch(x), BandpassSpec())
        np.testing.assert_array_equal(out.samples[1], np.zeros(2048))
        assert rms(out.samples[0]) > 0 and rms(out.samples[2]) > 0

    def test_stopband_tone_suppressed(self):
        # oracle: analytic Butterworth gain at 0.1 Hz is far below the 0.05 bound
        gain = butterworth_bandpass_gain(0.1, 1.0, 15.0, 4)
        assert gain < 0.05
        win = tone(0.1)
        out = bandpass(win, BandpassSpec())
        assert rms(out.samples[0]) < 0.05 * rms(win.samples[0])

    def test_passband_tone_preserved_and_zero_lag(self):
        gain = butterworth_bandpass_gain(8.0, 1.0, 15.0, 4)
        assert gain == pytest.approx(1.0, abs=1e-3)
        win = tone(8.0)
        out = bandpass(win, BandpassSpec(zero_phase=True))
        # ignore a settling margin at the edges
        a = win.samples[0][200:-200]
        b = out.samples[0][200:-200]
        assert rms(b) == pytest.approx(rms(a), rel=0.05)
        corr = np.correlate(a, b, mode="full")
        assert np.argmax(corr) == len(a) - 1  # zero lag

    def test_single_pass_mode_runs(self):
        win = tone(8.0)
        out = bandpass(win, BandpassSpec(zero_phase=False))
        assert rms(out.samples[0][500:]) == pytest.approx(rms(win.samples[0][500:]), rel=0.1)

    def test_output_shape_matches_input(self):
        win = WindowBatch(np.random.default_rng(1).normal(size=(5, 777)))
        assert bandpass(win, BandpassSpec()).samples.shape == (5, 777)

    def test_invalid_band_for_rate_raises(self):
        with pytest.raises(ValueError):
            bandpass(WindowBatch(np.zeros((1, 64)), sample_rate_hz=20.0), BandpassSpec())


class TestNormalizeMaxAbs:
    def test_shared_divisor(self):
        x = np.zeros((2, 10))
        x[0, 3] = 2.0
        x[1, 7] = -1.0
        out = normalize_max_abs(WindowBatch(x))
        assert out.samples[0, 3] == 1.0
        assert out.samples[1, 7] == -0.5

    def test_peak_of_four_divides_everything(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, size=(3, 64))
        x[2, 10] = 4.0
        out = normalize_max_abs(WindowBatch(x))
        np.testing.assert_allclose(out.samples, x / 4.0, rtol=1e-15)

    def test_all_zero_passthrough(self):
        out = normalize_max_abs(WindowBatch(np.zeros((2, 8))))
        np.testing.assert_array_equal(out.samples, np.zeros((2, 8)))

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        win = WindowBatch(rng.normal(size=(4, 256)))
        once = normalize_max_abs(win)
        twice = normalize_max_abs(once)
        np.testing.assert_array_equal(once.samples, twice.samples)
        assert np.abs(once.samples).max() == 1.0

    def test_channel_permutation_commutes(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(4, 256))
        perm = rng.permutation(4)
        spec = BandpassSpec()
        direct = normalize_max_abs(bandpass(WindowBatch(x[perm]), spec)).samples
        swapped = normalize_max_abs(bandpass(WindowBatch(x), spec)).samples[perm]
        np.testing.assert_allclose(direct, swapped, rtol=1e-12)
