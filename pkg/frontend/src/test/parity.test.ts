/**
 * Parity suite: the bindings must agree with the primary implementation
 * bit-for-bit on transforms and post-processing, and to 1e-12 on metrics.
 * Reference values are computed independently here in TypeScript where the
 * arithmetic is exact (integer counting, argmax), and through the primary's
 * own CLI file path for the fold transform.
 */
import assert from "node:assert/strict";
import { spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";

import { Vseg, VsegError, VERSION, encodeArray, decodeArray } from "../index.js";
import { readVsgm, writeVsgd } from "../files.js";

const vseg = new Vseg();

/** Deterministic 32-bit PRNG so both sides see identical inputs. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomArray(rng: () => number, count: number, scale = 1): Float64Array {
  const out = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = (rng() * 2 - 1) * scale;
  }
  return out;
}

function bytesEqual(a: Float64Array, b: Float64Array): boolean {
  return (
    a.length === b.length &&
    Buffer.compare(
      Buffer.from(a.buffer, a.byteOffset, a.byteLength),
      Buffer.from(b.buffer, b.byteOffset, b.byteLength),
    ) === 0
  );
}

test("version matches the primary build", () => {
  assert.equal(vseg.version(), VERSION);
});

test("geometry follows n = sqrt(s*w)", () => {
  assert.deepEqual(vseg.geometry(8, 8192), { s: 8, w: 8192, n: 256 });
  assert.deepEqual(vseg.geometry(8, 2048), { s: 8, w: 2048, n: 128 });
  assert.deepEqual(vseg.geometry(8, 512), { s: 8, w: 512, n: 64 });
});

test("invalid geometry surfaces the primary error message", () => {
  assert.throws(
    () => vseg.geometry(8, 1000),
    (err: unknown) =>
      err instanceof VsegError && /perfect square/.test(err.message),
  );
});

test("fold/unfold round trip is byte-identical on 100 seeded inputs", () => {
  const s = 8;
  const w = 512;
  const rng = mulberry32(1234);
  const windows: Float64Array[] = [];
  const foldRequests = [];
  for (let i = 0; i < 100; i++) {
    const win = randomArray(rng, s * w);
    windows.push(win);
    foldRequests.push({ op: "fold", s, w, window: encodeArray(win, [s, w]) });
  }
  const folded = vseg.callBatch(foldRequests);
  const unfoldRequests = folded.map((res) => ({
    op: "unfold_to_channels",
    s,
    w,
    image: res.image,
  }));
  const unfolded = vseg.callBatch(unfoldRequests);
  for (let i = 0; i < 100; i++) {
    const back = decodeArray(unfolded[i].window).data;
    assert.ok(bytesEqual(back, windows[i]), `round trip mismatch at input ${i}`);
  }
});

test("fold via bindings equals fold via the CLI on the same VSGD file", () => {
  const dir = mkdtempSync(join(tmpdir(), "vseg-parity-"));
  const s = 4;
  const w = 64;
  const rng = mulberry32(77);
  // f32 payload in the file; feed the f64-exact values to the rpc fold
  const f32 = new Float32Array(randomArray(rng, s * w));
  const vsgd = join(dir, "win.vsgd");
  writeVsgd(vsgd, {
    s,
    w,
    sampleRate: 100,
    startEpochS: 0,
    annotations: [],
    samples: f32,
  });
  const vsgm = join(dir, "img.vsgm");
  const proc = spawnSync("python3", ["-m", "vseg", "fold", "--input", vsgd, "--out", vsgm], {
    encoding: "utf8",
  });
  assert.equal(proc.status, 0, proc.stderr);
  const fileImage = readVsgm(vsgm);
  assert.equal(fileImage.classCount, 1);

  const viaRpc = vseg.fold(Float64Array.from(f32), s, w);
  assert.equal(viaRpc.n, fileImage.n);
  const rpcAsF32 = new Float32Array(viaRpc.image);
  assert.equal(
    Buffer.compare(
      Buffer.from(rpcAsF32.buffer, 0, rpcAsF32.byteLength),
      Buffer.from(fileImage.masks.buffer, fileImage.masks.byteOffset, fileImage.masks.byteLength),
    ),
    0,
  );
});

// -- reference post-processing (exact integer/argmax arithmetic) -------------

function referencePostprocess(arrays: Float64Array, w: number) {
  const BG = 5;
  const winners = new Int32Array(w);
  for (let t = 0; t < w; t++) {
    let best = 0;
    let bestVal = arrays[t];
    for (let c = 1; c < 6; c++) {
      const v = arrays[c * w + t];
      if (v > bestVal) {
        best = c;
        bestVal = v;
      }
    }
    winners[t] = best;
  }
  const detections: { start: number; end: number; class: number; proportions: number[] }[] = [];
  let start = -1;
  for (let t = 0; t <= w; t++) {
    const active = t < w && winners[t] !== BG;
    if (active && start < 0) {
      start = t;
    } else if (!active && start >= 0) {
      const counts = [0, 0, 0, 0, 0];
      for (let u = start; u < t; u++) {
        counts[winners[u]] += 1;
      }
      const total = counts.reduce((a, b) => a + b, 0);
      const proportions = counts.map((c) => c / total);
      let cls = 0;
      for (let c = 1; c < 5; c++) {
        if (proportions[c] > proportions[cls]) {
          cls = c;
        }
      }
      detections.push({ start, end: t, class: cls, proportions });
      start = -1;
    }
  }
  return detections;
}

const CLASS_NAMES = ["VT", "LP", "TR", "AV", "IC", "BG"];

test("run_postprocessing parity on 100 random time-mask sets", () => {
  const w = 64;
  const rng = mulberry32(99);
  const inputs: Float64Array[] = [];
  const requests = [];
  for (let i = 0; i < 100; i++) {
    const arrays = new Float64Array(6 * w);
    for (let j = 0; j < arrays.length; j++) {
      arrays[j] = rng() * 8;
    }
    inputs.push(arrays);
    requests.push({
      op: "run_postprocessing",
      arrays: encodeArray(arrays, [6, w]),
      merge_gap: 0,
      min_len: 0,
    });
  }
  const responses = vseg.callBatch(requests);
  for (let i = 0; i < 100; i++) {
    const want = referencePostprocess(inputs[i], w);
    const got = responses[i].detections;
    assert.equal(got.length, want.length, `detection count differs at input ${i}`);
    for (let k = 0; k < want.length; k++) {
      assert.equal(got[k].start, want[k].start);
      assert.equal(got[k].end, want[k].end);
      assert.equal(got[k].class, CLASS_NAMES[want[k].class]);
      for (let c = 0; c < 5; c++) {
        assert.equal(got[k].proportions[c], want[k].proportions[c]);
      }
    }
  }
});

test("make_target builds one-hot folded masks", () => {
  const s = 4;
  const w = 64;
  const { n, masks } = vseg.makeTarget(s, w, [{ start: 10, end: 30, label: "LP" }]);
  assert.equal(n, 16);
  for (let px = 0; px < n * n; px++) {
    let sum = 0;
    for (let c = 0; c < 6; c++) {
      sum += masks[c * n * n + px];
    }
    assert.equal(sum, 1);
  }
  // unfolding the LP mask recovers the annotated span, scaled by channels
  const lp = masks.subarray(1 * n * n, 2 * n * n);
  const time = vseg.unfoldToTime(new Float64Array(lp), s, w);
  for (let t = 0; t < w; t++) {
    assert.equal(time[t], t >= 10 && t < 30 ? s : 0);
  }
});

test("metrics agree with exact references to 1e-12", () => {
  const rng = mulberry32(2024);
  const iouRequests = [];
  const iouWant: number[] = [];
  for (let trial = 0; trial < 100; trial++) {
    const t0 = Math.floor(rng() * 300);
    const t1 = t0 + 1 + Math.floor(rng() * 100);
    const d0 = Math.floor(rng() * 300);
    const d1 = d0 + 1 + Math.floor(rng() * 100);
    const detection = {
      start: d0,
      end: d1,
      class: "VT",
      proportions: [1, 0, 0, 0, 0],
    };
    iouRequests.push({
      op: "event_iou",
      detections: [detection],
      truth: { start: t0, end: t1, label: "VT" },
    });
    const inter = Math.max(0, Math.min(t1, d1) - Math.max(t0, d0));
    const union = t1 - t0 + (d1 - d0) - inter;
    iouWant.push(inter / union);
  }
  const iouGot = vseg.callBatch(iouRequests);
  for (let trial = 0; trial < 100; trial++) {
    assert.ok(Math.abs(iouGot[trial].iou - iouWant[trial]) <= 1e-12, `iou trial ${trial}`);
  }

  const values = Array.from({ length: 100 }, () => rng());
  const mean = values.reduce((a, b) => a + b, 0) / values.length;
  assert.ok(Math.abs(vseg.meanIou(values) - mean) <= 1e-12);

  // dice of identical binary stacks is ~0; of disjoint stacks is ~1
  const a = new Float64Array(6 * 16);
  const b = new Float64Array(6 * 16);
  for (let c = 0; c < 6; c++) {
    for (let i = 0; i < 8; i++) {
      a[c * 16 + i] = 1;
      b[c * 16 + 8 + i] = 1;
    }
  }
  assert.ok(vseg.diceLoss(a, a, [6, 4, 4]) <= 1e-5);
  assert.ok(Math.abs(vseg.diceLoss(a, b, [6, 4, 4]) - 1) <= 1e-5);

  // hand-checked f1: one TP and one FP for VT -> P=0.5, R=1, F1=2/3
  const report = vseg.f1Report([
    { detections: [det(10, 50, "VT")], truth: { start: 10, end: 50, label: "VT" } },
    { detections: [det(10, 50, "VT")] },
  ]);
  assert.ok(Math.abs(report.per_class_f1.VT - 2 / 3) <= 1e-12);
  assert.ok(Math.abs(report.macro_f1 - 2 / 3) <= 1e-12);
  assert.equal(report.n_events, 1);

  function det(start: number, end: number, cls: string) {
    const proportions = [0, 0, 0, 0, 0];
    proportions[CLASS_NAMES.indexOf(cls)] = 1;
    return { start, end, class: cls, proportions };
  }
});

test("array transport is bit-exact including non-finite patterns", () => {
  const values = new Float64Array([0, -0, 1e-300, -1e300, Math.PI, 2 ** -1074]);
  const wire = encodeArray(values, [6]);
  const back = decodeArray(wire).data;
  assert.ok(bytesEqual(values, back));
});
