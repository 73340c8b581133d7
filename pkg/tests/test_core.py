import numpy as np
import pytest

from vseg.core import (
    ClassLabel,
    EVENT_CLASSES,
    EventAnnotation,
    EventDetection,
    WindowBatch,
    label_from_code,
    label_from_name,
)


class TestClassLabel:
    def test_exactly_six_labels_with_bg_last(self):
        assert len(ClassLabel) == 6
        assert ClassLabel.BG == 5
        assert [c.name for c in ClassLabel] == ["VT", "LP", "TR", "AV", "IC", "BG"]

    def test_codes_are_stable(self):
        assert ClassLabel.VT == 0
        assert ClassLabel.LP == 1
        assert ClassLabel.TR == 2
        assert ClassLabel.AV == 3
        assert ClassLabel.IC == 4

    @pytest.mark.parametrize("code", range(6))
    def test_roundtrip(self, code):
        assert int(label_from_code(code)) == code

    @pytest.mark.parametrize("code", [-1, 6, 100])
    def test_out_of_range_code_rejected(self, code):
        with pytest.raises(ValueError):
            label_from_code(code)

    def test_name_lookup(self):
        assert label_from_name("vt") is ClassLabel.VT
        with pytest.raises(ValueError):
            label_from_name("XX")

    def test_event_classes_exclude_bg(self):
        assert ClassLabel.BG not in EVENT_CLASSES
        assert len(EVENT_CLASSES) == 5


class TestWindowBatch:
    def test_basic_construction(self):
        w = WindowBatch(np.zeros((3, 16)), ("A", "B", ""))
        assert w.s == 3 and w.w == 16
        assert w.sample_rate_hz == 100.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            WindowBatch(np.zeros(16))
        with pytest.raises(ValueError):
            WindowBatch(np.zeros((0, 16)))
        with pytest.raises(ValueError):
            WindowBatch(np.zeros((2, 16)), ("only-one",))

    def test_samples_are_immutable(self):
        w = WindowBatch(np.zeros((2, 8)))
        with pytest.raises(ValueError):
            w.samples[0, 0] = 1.0

    def test_with_samples_checks_shape(self):
        w = WindowBatch(np.zeros((2, 8)))
        with pytest.raises(ValueError):
            w.with_samples(np.zeros((2, 9)))


class TestEventAnnotation:
    def test_rejects_bg(self):
        with pytest.raises(ValueError):
            EventAnnotation(0, 10, ClassLabel.BG)

    def test_rejects_empty_span(self):
        with pytest.raises(ValueError):
            EventAnnotation(10, 10, ClassLabel.VT)
        with pytest.raises(ValueError):
            EventAnnotation(-1, 10, ClassLabel.VT)


class TestEventDetection:
    def test_assigned_must_be_argmax(self):
        EventDetection(0, 10, ClassLabel.TR, (0.0, 0.3, 0.7, 0.0, 0.0))
        with pytest.raises(ValueError):
            EventDetection(0, 10, ClassLabel.LP, (0.0, 0.3, 0.7, 0.0, 0.0))

    def test_tie_breaks_to_lowest_code(self):
        det = EventDetection.from_proportions(0, 10, (0.5, 0.5, 0.0, 0.0, 0.0))
        assert det.assigned is ClassLabel.VT
        with pytest.raises(ValueError):
            EventDetection(0, 10, ClassLabel.LP, (0.5, 0.5, 0.0, 0.0, 0.0))

    def test_proportions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            EventDetection(0, 10, ClassLabel.VT, (0.9, 0.0, 0.0, 0.0, 0.0))

    def test_random_proportions_argmax_property(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            raw = rng.random(5)
            props = raw / raw.sum()
            det = EventDetection.from_proportions(0, 5, props)
            assert int(det.assigned) == int(np.argmax(props))
