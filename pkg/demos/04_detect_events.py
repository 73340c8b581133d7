"""From raw window to event table: the full recognition chain, step by step.

Requires the weights from demo 03 (or trains a throwaway model if missing).
"""
import os

import numpy as np

from vseg import BandpassSpec, PostConfig, ToyUNet, geometry, synth_corpus
from vseg.dataset import default_profiles
from vseg.fold import fold
from vseg.pipeline import masks_to_time, preprocess_window
from vseg.postprocess import (
    binary_saturation,
    detect_events,
    detections_to_jsonl,
    run_postprocessing,
)

geom = geometry(8, 512)
if not os.path.exists("/tmp/vseg_demo_model.vsgw"):
    raise SystemExit("run demos/03_train_toy_model.py first")
model = ToyUNet.load_weights("/tmp/vseg_demo_model.vsgw", dtype=np.float32)

profiles = default_profiles(geom)
lw = synth_corpus(profiles, 1, geom, seed=123)[1]  # one LP window
truth = lw.annotations[0]
print(f"window {lw.window.window_id}, truth: {truth.label.name} "
      f"[{truth.start_sample}, {truth.end_sample})")

# 1. preprocess: bandpass 1-15 Hz, then normalize by the cross-station peak
pre = preprocess_window(lw.window, BandpassSpec())

# 2. fold to an image and segment into 6 per-class masks
masks = model.segment(fold(pre.samples, geom))
print("mask means:", dict(zip("VT LP TR AV IC BG".split(), masks.masks.mean(axis=(1, 2)).round(3))))

# 3. unfold each mask to a per-class time signal (summed over channels)
tm = masks_to_time(masks.masks, geom)

# 4. saturate -> detect -> classify
binary = binary_saturation(tm)
print("raw spans:", detect_events(binary))
detections = run_postprocessing(tm, PostConfig(merge_gap=100, min_len=10))

print("\nevent table (JSONL):")
print(detections_to_jsonl(detections, lw.window) or "(no detections - train longer in demo 03)")
