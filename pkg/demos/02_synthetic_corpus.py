"""Generate a synthetic multi-station corpus and look at what's in it.

Each window carries Gaussian background noise plus one band-limited event
shaped by a per-class envelope (impulsive, emergent or sustained) and
attenuated across stations. Annotations mark the envelope's support.
"""
import numpy as np

from vseg import geometry, synth_corpus
from vseg.dataset import default_profiles, write_corpus

geom = geometry(8, 512)  # 5.12 s windows at 100 Hz
profiles = default_profiles(geom)

print("class profiles at this window scale:")
for p in profiles:
    print(
        f"  {p.label.name}: {p.envelope:9s} {p.band_hz[0]:>4.1f}-{p.band_hz[1]:>4.1f} Hz,"
        f" mean duration {p.duration_mean_s:.2f} s, station decay {p.station_decay}"
    )

corpus = synth_corpus(profiles, count_per_class=3, geom=geom, seed=7, bg_count=2)
print(f"\n{len(corpus)} windows (3 per event class + 2 background):")
for lw in corpus[:6]:
    if lw.annotations:
        a = lw.annotations[0]
        span = f"event [{a.start_sample:4d}, {a.end_sample:4d}) = {(a.end_sample-a.start_sample)/100:.2f} s"
    else:
        span = "background only"
    peak = np.abs(lw.window.samples).max()
    print(f"  {lw.window.window_id}: {span}, peak amplitude {peak:.2f}")

# Corpora serialize to VSGD files plus a JSONL manifest.
manifest = write_corpus(corpus, "/tmp/vseg_demo_corpus", volcano="DEMO", split="train")
print(f"\nwrote {len(corpus)} VSGD files, manifest at {manifest}")
print("first manifest line:", manifest.read_text().splitlines()[0])
