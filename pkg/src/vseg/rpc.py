"""Line-delimited JSON bridge exposing the transform and scoring primitives.

One request per line on stdin, one response per line on stdout. Arrays travel
as base64-encoded little-endian float64 buffers with an explicit shape, so a
round trip through the bridge is bit-exact. This is the surface the
foreign-language bindings package drives.
"""
from __future__ import annotations

import base64
import json

import numpy as np

from . import __version__
from .core import ClassLabel, EventAnnotation, EventDetection, WindowBatch, label_from_name
from .dataset import LabeledWindow, make_target
from .evaluate import event_iou, f1_report, mean_iou
from .fold import fold, geometry, unfold_to_channels, unfold_to_time
from .postprocess import PostConfig, TimeMaskSet, run_postprocessing
from .segmenter.dice import DEFAULT_SMOOTHING, dice_loss


def encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f8").tobytes(order="C")).decode(),
    }


def decode_array(obj: dict) -> np.ndarray:
    data = base64.b64decode(obj["data"])
    return np.frombuffer(data, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def _decode_label(value) -> ClassLabel:
    if isinstance(value, str):
        return label_from_name(value)
    return ClassLabel(int(value))


def _decode_detection(obj: dict) -> EventDetection:
    return EventDetection.from_proportions(
        int(obj["start"]), int(obj["end"]), [float(p) for p in obj["proportions"]]
    )


def _encode_detection(det: EventDetection) -> dict:
    return {
        "start": det.start_sample,
        "end": det.end_sample,
        "class": det.assigned.name,
        "proportions": list(det.class_proportions),
    }


def _op_version(req):
    return {"version": __version__}


def _op_geometry(req):
    g = geometry(int(req["s"]), int(req["w"]))
    return {"s": g.s, "w": g.w, "n": g.n}


def _op_fold(req):
    g = geometry(int(req["s"]), int(req["w"]))
    return {"image": encode_array(fold(decode_array(req["window"]), g))}


def _op_unfold_to_channels(req):
    g = geometry(int(req["s"]), int(req["w"]))
    return {"window": encode_array(unfold_to_channels(decode_array(req["image"]), g))}


def _op_unfold_to_time(req):
    g = geometry(int(req["s"]), int(req["w"]))
    return {"time": encode_array(unfold_to_time(decode_array(req["image"]), g))}


def _op_make_target(req):
    g = geometry(int(req["s"]), int(req["w"]))
    anns = tuple(
        EventAnnotation(int(a["start"]), int(a["end"]), _decode_label(a["label"]))
        for a in req.get("annotations", [])
    )
    lw = LabeledWindow(WindowBatch(np.zeros((g.s, g.w))), anns)
    return {"masks": encode_array(make_target(lw, g).masks)}


def _op_run_postprocessing(req):
    tm = TimeMaskSet(decode_array(req["arrays"]))
    cfg = PostConfig(
        merge_gap=int(req.get("merge_gap", 100)), min_len=int(req.get("min_len", 0))
    )
    return {"detections": [_encode_detection(d) for d in run_postprocessing(tm, cfg)]}


def _op_dice_loss(req):
    smoothing = float(req.get("smoothing", DEFAULT_SMOOTHING))
    return {
        "loss": dice_loss(decode_array(req["pred"]), decode_array(req["target"]), smoothing)
    }


def _op_event_iou(req):
    truth = req["truth"]
    ann = EventAnnotation(int(truth["start"]), int(truth["end"]), _decode_label(truth["label"]))
    dets = [_decode_detection(d) for d in req.get("detections", [])]
    return {"iou": event_iou(dets, ann)}


def _op_mean_iou(req):
    return {"mean_iou": mean_iou([float(v) for v in req["values"]])}


def _op_f1_report(req):
    results = []
    for win in req["windows"]:
        truth = win.get("truth")
        ann = (
            EventAnnotation(int(truth["start"]), int(truth["end"]), _decode_label(truth["label"]))
            if truth
            else None
        )
        results.append(([_decode_detection(d) for d in win.get("detections", [])], ann))
    rep = f1_report(results)
    return {
        "per_class_f1": rep.per_class_f1,
        "macro_f1": rep.macro_f1,
        "mean_iou": rep.mean_iou,
        "n_events": rep.n_events,
        "classes_scored": list(rep.classes_scored),
    }


_OPS = {
    "version": _op_version,
    "geometry": _op_geometry,
    "fold": _op_fold,
    "unfold_to_channels": _op_unfold_to_channels,
    "unfold_to_time": _op_unfold_to_time,
    "make_target": _op_make_target,
    "run_postprocessing": _op_run_postprocessing,
    "dice_loss": _op_dice_loss,
    "event_iou": _op_event_iou,
    "mean_iou": _op_mean_iou,
    "f1_report": _op_f1_report,
}


def handle(request: dict) -> dict:
    op = request.get("op")
    if op not in _OPS:
        return {"ok": False, "error": "ValueError", "message": f"unknown op {op!r}"}
    try:
        return {"ok": True, "result": _OPS[op](request)}
    except Exception as exc:  # noqa: BLE001 - errors cross a process boundary
        return {"ok": False, "error": type(exc).__name__, "message": str(exc)}


def serve(stdin, stdout) -> int:
    """One JSON request per line until EOF."""
    for line in stdin:
        if not line.strip():
            continue
        response = handle(json.loads(line))
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
    return 0
