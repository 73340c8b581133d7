"""Noise-robustness sweep: score the model while white noise drowns the data.

Each test set adds channel-wise Gaussian noise at a fixed SNR; the grid runs
-5..10 dB in 1 dB steps (16 sets). Uses the demo 03 weights on a small test
corpus, so expect rough numbers; the pattern to look for is classification
(macro F1) degrading faster than detection (mean IoU).
"""
import os

import numpy as np

from vseg import BandpassSpec, PostConfig, ToyUNet, geometry, synth_corpus
from vseg.dataset import default_profiles
from vseg.evaluate import noise_sweep, sweep_to_csv

geom = geometry(8, 512)
if not os.path.exists("/tmp/vseg_demo_model.vsgw"):
    raise SystemExit("run demos/03_train_toy_model.py first")
model = ToyUNet.load_weights("/tmp/vseg_demo_model.vsgw", dtype=np.float32)

profiles = default_profiles(geom)
test_windows = synth_corpus(profiles, 8, geom, seed=99, bg_count=8)

reports = noise_sweep(
    model, test_windows, geom,
    bandpass_spec=BandpassSpec(), post=PostConfig(merge_gap=100, min_len=10), seed=5,
)

print(f"{len(reports)} SNR levels:")
print(f"{'snr_db':>7} {'macro_f1':>9} {'mean_iou':>9}")
for rep in reports:
    print(f"{rep.axis_value:>+7.0f} {rep.macro_f1:>9.3f} {rep.mean_iou:>9.3f}")

with open("/tmp/vseg_demo_sweep.csv", "w") as fh:
    fh.write(sweep_to_csv(reports, "snr_db"))
print("\nplot-ready CSV written to /tmp/vseg_demo_sweep.csv")
