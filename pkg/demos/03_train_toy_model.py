"""Train the built-in segmenter on a small synthetic corpus.

The model is a small encoder-decoder network written in plain numpy with
hand-derived gradients; training uses per-class Dice aggregated over each
batch, Adam, and a cosine-annealed learning rate. This demo keeps everything
tiny so it finishes in about a minute; demos 04-06 reuse the weights.
"""
import numpy as np

from vseg import BandpassSpec, TrainConfig, ToyUNet, ToyUNetSpec, geometry, synth_corpus, train
from vseg.dataset import build_training_pairs, default_profiles
from vseg.pipeline import preprocess_window

geom = geometry(8, 512)
profiles = default_profiles(geom)
bandpass = BandpassSpec()  # 1-15 Hz, order 4, zero phase

windows = synth_corpus(profiles, count_per_class=40, geom=geom, seed=11, bg_count=40)
pairs = build_training_pairs(
    windows, geom, preprocess=lambda w: preprocess_window(w, bandpass)
)
print(f"{len(pairs)} training pairs of {geom.n}x{geom.n} images")

model = ToyUNet(ToyUNetSpec(depth=3, base_channels=8), seed=0, dtype=np.float32)
print(f"model: {model.n_params()} parameters")

config = TrainConfig(
    epochs=6, lr_max=1e-3, lr_min=1e-4, anneal_period_epochs=6, batch_size=16, seed=0
)
model, trace = train(model, pairs, config, log_every=1)

print("\nloss trace:", [round(v, 3) for v in trace])
model.save_weights("/tmp/vseg_demo_model.vsgw")
print("weights saved to /tmp/vseg_demo_model.vsgw")
print("(train longer - 15+ epochs on 200 windows per class - for strong scores;")
print(" see tests/test_acceptance.py for the full scaled experiment)")
