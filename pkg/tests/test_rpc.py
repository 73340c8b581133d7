import io
import json

import numpy as np
import pytest

from vseg import __version__, fold, geometry, unfold_to_time
from vseg.core import ClassLabel, EventAnnotation, WindowBatch
from vseg.dataset import LabeledWindow, make_target
from vseg.postprocess import PostConfig, TimeMaskSet, run_postprocessing
from vseg.rpc import decode_array, encode_array, handle, serve


class TestArrayCodec:
    def test_bit_exact_roundtrip(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 5, 7))
        back = decode_array(encode_array(a))
        assert back.tobytes() == a.tobytes()
        assert back.shape == a.shape

    def test_special_values(self):
        a = np.array([0.0, -0.0, 1e-300, -1e300, np.pi, 5e-324])
        assert decode_array(encode_array(a)).tobytes() == a.tobytes()


class TestHandlers:
    def test_version(self):
        res = handle({"op": "version"})
        assert res["ok"] and res["result"]["version"] == __version__

    def test_fold_matches_direct_call(self):
        rng = np.random.default_rng(1)
        window = rng.normal(size=(8, 512))
        res = handle({"op": "fold", "s": 8, "w": 512, "window": encode_array(window)})
        assert res["ok"]
        got = decode_array(res["result"]["image"])
        assert got.tobytes() == fold(window, geometry(8, 512)).tobytes()

    def test_unfold_ops(self):
        rng = np.random.default_rng(2)
        g = geometry(4, 64)
        window = rng.normal(size=(4, 64))
        image = fold(window, g)
        res = handle(
            {"op": "unfold_to_channels", "s": 4, "w": 64, "image": encode_array(image)}
        )
        assert decode_array(res["result"]["window"]).tobytes() == window.tobytes()
        res = handle({"op": "unfold_to_time", "s": 4, "w": 64, "image": encode_array(image)})
        got = decode_array(res["result"]["time"])
        assert got.tobytes() == unfold_to_time(image, g).tobytes()

    def test_make_target_matches_direct(self):
        g = geometry(4, 64)
        ann = EventAnnotation(10, 30, ClassLabel.TR)
        direct = make_target(LabeledWindow(WindowBatch(np.zeros((4, 64))), (ann,)), g)
        res = handle(
            {
                "op": "make_target",
                "s": 4,
                "w": 64,
                "annotations": [{"start": 10, "end": 30, "label": "TR"}],
            }
        )
        assert decode_array(res["result"]["masks"]).tobytes() == direct.masks.tobytes()

    def test_run_postprocessing_matches_direct(self):
        rng = np.random.default_rng(3)
        arrays = rng.random((6, 64)) * 5
        res = handle(
            {
                "op": "run_postprocessing",
                "arrays": encode_array(arrays),
                "merge_gap": 0,
                "min_len": 0,
            }
        )
        direct = run_postprocessing(TimeMaskSet(arrays), PostConfig(0, 0))
        got = res["result"]["detections"]
        assert len(got) == len(direct)
        for g_det, d_det in zip(got, direct):
            assert (g_det["start"], g_det["end"]) == (d_det.start_sample, d_det.end_sample)
            assert g_det["class"] == d_det.assigned.name
            assert tuple(g_det["proportions"]) == d_det.class_proportions

    def test_metric_ops(self):
        res = handle(
            {
                "op": "event_iou",
                "detections": [
                    {"start": 150, "end": 250, "proportions": [1, 0, 0, 0, 0]}
                ],
                "truth": {"start": 100, "end": 200, "label": "VT"},
            }
        )
        assert res["result"]["iou"] == pytest.approx(1 / 3)
        res = handle({"op": "mean_iou", "values": [1.0, 0.0]})
        assert res["result"]["mean_iou"] == 0.5
        res = handle(
            {
                "op": "dice_loss",
                "pred": encode_array(np.ones((6, 4, 4))),
                "target": encode_array(np.ones((6, 4, 4))),
            }
        )
        assert res["result"]["loss"] <= 1e-5

    def test_f1_report_op(self):
        windows = [
            {
                "detections": [{"start": 10, "end": 50, "proportions": [1, 0, 0, 0, 0]}],
                "truth": {"start": 10, "end": 50, "label": "VT"},
            },
            {"detections": []},
        ]
        res = handle({"op": "f1_report", "windows": windows})
        assert res["result"]["macro_f1"] == 1.0
        assert res["result"]["n_events"] == 1

    def test_geometry_error_carries_constraint(self):
        res = handle({"op": "geometry", "s": 8, "w": 1000})
        assert not res["ok"]
        assert "perfect square" in res["message"]

    def test_unknown_op(self):
        res = handle({"op": "transmogrify"})
        assert not res["ok"] and "unknown op" in res["message"]


class TestServe:
    def test_line_protocol(self):
        requests = [
            json.dumps({"op": "version"}),
            "",
            json.dumps({"op": "geometry", "s": 2, "w": 8}),
        ]
        out = io.StringIO()
        serve(io.StringIO("\n".join(requests) + "\n"), out)
        lines = [json.loads(l) for l in out.getvalue().splitlines()]
        assert len(lines) == 2
        assert lines[0]["result"]["version"] == __version__
        assert lines[1]["result"]["n"] == 4
