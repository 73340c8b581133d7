"""Metrics and evaluation protocols: data fitting, noise robustness, flexibility.

Detection quality is the per-event intersection-over-union between the union
of predicted event samples and the true span, averaged over events. Per-class
classification quality is precision/recall/F1 with the macro average taken
over the classes actually present in the corpus.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass

import numpy as np

from .core import (
    ClassLabel,
    EVENT_CLASSES,
    EventAnnotation,
    EventDetection,
    N_CLASSES,
    WindowBatch,
)
from .dataset import LabeledWindow, build_training_pairs
from .dsp import BandpassSpec
from .fold import FoldGeometry
from .pipeline import infer_batch, preprocess_window
from .postprocess import PostConfig
from .segmenter.train import TrainConfig, train
from .segmenter.unet import ToyUNet

SNR_GRID_DB: tuple[int, ...] = tuple(range(-5, 11))
FLEX_FRACTIONS: tuple[float, ...] = (0.0, 0.01, 0.05, 0.10, 0.20)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0


@dataclass(frozen=True)
class EvalReport:
    per_class_f1: dict[str, float]
    macro_f1: float
    mean_iou: float
    confusion: np.ndarray
    n_events: int
    classes_scored: tuple[str, ...]
    axis_name: str | None = None
    axis_value: float | None = None
    epoch_trace: tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        d = {
            "per_class_f1": {k: round(v, 6) for k, v in self.per_class_f1.items()},
            "macro_f1": round(self.macro_f1, 6),
            "mean_iou": round(self.mean_iou, 6),
            "confusion": np.asarray(self.confusion).tolist(),
            "n_events": self.n_events,
            "classes_scored": list(self.classes_scored),
        }
        if self.axis_name is not None:
            d[self.axis_name] = self.axis_value
        if self.epoch_trace:
            d["epoch_trace"] = list(self.epoch_trace)
        return d


def event_iou(detections: list[EventDetection], truth: EventAnnotation) -> float:
    """IoU between the union of predicted event samples and the truth span."""
    if not detections:
        return 0.0
    lo = min(truth.start_sample, min(d.start_sample for d in detections))
    hi = max(truth.end_sample, max(d.end_sample for d in detections))
    pred = np.zeros(hi - lo, dtype=bool)
    for d in detections:
        pred[d.start_sample - lo : d.end_sample - lo] = True
    true = np.zeros(hi - lo, dtype=bool)
    true[truth.start_sample - lo : truth.end_sample - lo] = True
    union = np.count_nonzero(pred | true)
    return float(np.count_nonzero(pred & true) / union) if union else 0.0


def mean_iou(ious) -> float:
    vals = list(ious)
    if not vals:
        raise ValueError("mean IoU over an empty corpus is undefined")
    return float(np.mean(vals))


def classify_window(
    detections: list[EventDetection], truth: EventAnnotation
) -> ClassLabel | None:
    """Predicted label from the detection overlapping the truth span the most;
    None when nothing overlaps (a miss)."""
    best, best_overlap = None, 0
    for d in detections:
        overlap = min(d.end_sample, truth.end_sample) - max(
            d.start_sample, truth.start_sample
        )
        if overlap > best_overlap:
            best, best_overlap = d, overlap
    return best.assigned if best is not None else None


def f1_report(
    window_results: list[tuple[list[EventDetection], EventAnnotation | None]],
    axis_name: str | None = None,
    axis_value: float | None = None,
    epoch_trace: tuple[dict, ...] = (),
) -> EvalReport:
    """Score single-truth windows (truth None means a background-only window).

    The max-overlap detection decides each window's predicted class; a miss is
    a false negative for the true class, and detections in windows they do not
    belong to (misses and background windows) are false positives. Classes
    never appearing as truth get F1 = 0 and are left out of the macro average.
    """
    if not window_results:
        raise ValueError("cannot score an empty result set")
    bg = int(ClassLabel.BG)
    tp = np.zeros(N_CLASSES, dtype=int)
    fp = np.zeros(N_CLASSES, dtype=int)
    fn = np.zeros(N_CLASSES, dtype=int)
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    ious = []
    n_events = 0
    for detections, truth in window_results:
        if truth is None:
            for d in detections:
                fp[int(d.assigned)] += 1
                confusion[bg, int(d.assigned)] += 1
            continue
        n_events += 1
        ious.append(event_iou(detections, truth))
        predicted = classify_window(detections, truth)
        t = int(truth.label)
        if predicted is None:
            fn[t] += 1
            confusion[t, bg] += 1
            for d in detections:
                fp[int(d.assigned)] += 1
                confusion[bg, int(d.assigned)] += 1
        else:
            p = int(predicted)
            confusion[t, p] += 1
            if p == t:
                tp[t] += 1
            else:
                fp[p] += 1
                fn[t] += 1
    per_class: dict[str, float] = {}
    scored: list[str] = []
    for cls in EVENT_CLASSES:
        c = int(cls)
        precision = tp[c] / (tp[c] + fp[c]) if tp[c] + fp[c] else 0.0
        recall = tp[c] / (tp[c] + fn[c]) if tp[c] + fn[c] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls.name] = float(f1)
        if tp[c] + fn[c] > 0:
            scored.append(cls.name)
    macro = float(np.mean([per_class[name] for name in scored])) if scored else 0.0
    return EvalReport(
        per_class_f1=per_class,
        macro_f1=macro,
        mean_iou=mean_iou(ious) if ious else 0.0,
        confusion=confusion,
        n_events=n_events,
        classes_scored=tuple(scored),
        axis_name=axis_name,
        axis_value=axis_value,
        epoch_trace=epoch_trace,
    )


def evaluate_model(
    model: ToyUNet,
    windows: list[LabeledWindow],
    geom: FoldGeometry,
    bandpass_spec: BandpassSpec | None = None,
    post: PostConfig | None = None,
    axis_name: str | None = None,
    axis_value: float | None = None,
) -> EvalReport:
    """Run inference over a labeled corpus and score it."""
    detections = infer_batch([lw.window for lw in windows], model, geom, bandpass_spec, post)
    results = [
        (dets, lw.annotations[0] if lw.annotations else None)
        for dets, lw in zip(detections, windows)
    ]
    return f1_report(results, axis_name=axis_name, axis_value=axis_value)


# -- noise robustness ---------------------------------------------------------------


def add_noise(window: WindowBatch, spec: NoiseSpec) -> WindowBatch:
    """Add white noise per non-zero channel at the requested SNR.

    Noise power is that channel's own mean signal power divided by
    10^(snr_db/10); all-zero channels stay exactly zero.
    """
    x = window.samples
    if not x.any():
        raise ValueError("cannot set an SNR against an all-zero window")
    rng = np.random.default_rng(spec.seed)
    out = x.copy()
    ratio = 10.0 ** (spec.snr_db / 10.0)
    for c in range(x.shape[0]):
        if not x[c].any():
            continue
        power = float((x[c] ** 2).mean())
        out[c] += rng.normal(0.0, np.sqrt(power / ratio), size=x.shape[1])
    return window.with_samples(out)


def noise_sweep(
    model: ToyUNet,
    windows: list[LabeledWindow],
    geom: FoldGeometry,
    bandpass_spec: BandpassSpec | None = None,
    post: PostConfig | None = None,
    seed: int = 0,
) -> list[EvalReport]:
    """One report per SNR level in the fixed -5..10 dB grid, model untouched."""
    reports = []
    for i, snr in enumerate(SNR_GRID_DB):
        noisy = [
            LabeledWindow(
                add_noise(lw.window, NoiseSpec(snr, seed + i * len(windows) + j)),
                lw.annotations,
            )
            for j, lw in enumerate(windows)
        ]
        reports.append(
            evaluate_model(
                model, noisy, geom, bandpass_spec, post,
                axis_name="snr_db", axis_value=float(snr),
            )
        )
    return reports


# -- model flexibility ----------------------------------------------------------------


@dataclass(frozen=True)
class FlexSplit:
    """Deterministic 80/20 split arithmetic with nested fine-tuning subsets.

    All sizes are exact integer arithmetic: the test side takes
    floor(0.8 * (n - 1)) examples; the 10% subset is ceil((n - 2) / 10),
    computed as (n + 7) // 10; the 5% and 1% subsets are its half and tenth
    (floored); the 20% subset is the entire train side.
    """

    n: int
    test_count: int
    train_count: int
    sizes: dict[float, int]

    @classmethod
    def for_corpus(cls, n: int) -> "FlexSplit":
        if n < 10:
            raise ValueError(f"corpus of {n} examples is too small to split")
        test = (8 * (n - 1)) // 10
        train = n - test
        s10 = (n + 7) // 10
        sizes = {0.20: train, 0.10: s10, 0.05: s10 // 2, 0.01: s10 // 10}
        return cls(n=n, test_count=test, train_count=train, sizes=sizes)

    def size_for(self, fraction: float) -> int:
        if fraction == 0.0:
            return 0
        for key, size in self.sizes.items():
            if abs(fraction - key) < 1e-12:
                return size
        return int(fraction * self.n)


def flexibility_protocol(
    model: ToyUNet,
    corpus: list[LabeledWindow],
    geom: FoldGeometry,
    fractions: tuple[float, ...] = FLEX_FRACTIONS,
    finetune_cfg: TrainConfig | None = None,
    bandpass_spec: BandpassSpec | None = None,
    post: PostConfig | None = None,
    seed: int = 0,
    epoch_metrics: bool = False,
) -> list[EvalReport]:
    """Zero-shot plus progressive fine-tuning on an unseen corpus.

    The corpus is shuffled once, split per FlexSplit, and every non-zero
    fraction fine-tunes a fresh copy of the base model on a nested subset of
    the train side, always evaluating on the fixed test side.
    """
    cfg = finetune_cfg or TrainConfig(epochs=10, lr_max=1e-3, lr_min=1e-4, seed=seed)
    split = FlexSplit.for_corpus(len(corpus))
    order = np.random.default_rng(seed).permutation(len(corpus))
    test_side = [corpus[i] for i in order[: split.test_count]]
    train_side = [corpus[i] for i in order[split.test_count :]]
    reports = []
    for fraction in fractions:
        size = split.size_for(fraction)
        if size > split.train_count:
            raise ValueError(
                f"fraction {fraction} needs {size} examples, train side has "
                f"{split.train_count}"
            )
        if fraction == 0.0:
            reports.append(
                evaluate_model(
                    model, test_side, geom, bandpass_spec, post,
                    axis_name="finetune_fraction", axis_value=0.0,
                )
            )
            continue
        tuned = model.copy()
        pairs = build_training_pairs(
            train_side[:size], geom,
            preprocess=lambda w: preprocess_window(w, bandpass_spec),
        )
        trace: list[dict] = []
        hook = None
        if epoch_metrics:
            def hook(epoch: int, m: ToyUNet) -> None:
                rep = evaluate_model(m, test_side, geom, bandpass_spec, post)
                trace.append(
                    {"epoch": epoch, "macro_f1": rep.macro_f1, "mean_iou": rep.mean_iou}
                )
        train(tuned, pairs, cfg, epoch_hook=hook)
        final = evaluate_model(
            tuned, test_side, geom, bandpass_spec, post,
            axis_name="finetune_fraction", axis_value=fraction,
        )
        if trace:
            final = dataclasses.replace(final, epoch_trace=tuple(trace))
        reports.append(final)
    return reports


# -- report serialization ---------------------------------------------------------------


def reports_to_json(reports: list[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


def report_to_csv(report: EvalReport) -> str:
    """Flat per-class CSV for one report."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "f1"])
    for name, f1 in report.per_class_f1.items():
        writer.writerow([name, f"{f1:.6f}"])
    writer.writerow(["macro_f1", f"{report.macro_f1:.6f}"])
    writer.writerow(["mean_iou", f"{report.mean_iou:.6f}"])
    return buf.getvalue()


def sweep_to_csv(reports: list[EvalReport], axis_name: str) -> str:
    """Plot-ready CSV: axis value, macro F1 and mean IoU per row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([axis_name, "macro_f1", "mean_iou"])
    for rep in reports:
        writer.writerow(
            [rep.axis_value, f"{rep.macro_f1:.6f}", f"{rep.mean_iou:.6f}"]
        )
    return buf.getvalue()
