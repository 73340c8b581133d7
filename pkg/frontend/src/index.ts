/**
 * Node bindings for the vseg toolkit.
 *
 * Rather than reimplementing the transforms, every call is delegated to the
 * `vseg rpc` line-delimited JSON bridge, so folding, unfolding, target-mask
 * construction, post-processing and the metrics are numerically identical to
 * the primary implementation. Arrays travel as base64-encoded little-endian
 * float64 buffers, which makes the transport bit-exact.
 */
import { spawnSync } from "node:child_process";

export const VERSION = "0.1.0";

export interface Geometry {
  s: number;
  w: number;
  n: number;
}

export interface Annotation {
  start: number;
  end: number;
  label: string | number;
}

export interface Detection {
  start: number;
  end: number;
  class: string;
  proportions: number[];
}

export interface F1Report {
  per_class_f1: Record<string, number>;
  macro_f1: number;
  mean_iou: number;
  n_events: number;
  classes_scored: string[];
}

export interface PostprocessOptions {
  mergeGap?: number;
  minLen?: number;
}

interface WireArray {
  shape: number[];
  data: string;
}

/** Error raised by the primary implementation, message preserved verbatim. */
export class VsegError extends Error {
  constructor(
    message: string,
    public readonly pythonType: string,
  ) {
    super(message);
    this.name = "VsegError";
  }
}

export function encodeArray(data: Float64Array, shape: number[]): WireArray {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape [${shape}] does not match ${data.length} values`);
  }
  const buf = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return { shape, data: buf.toString("base64") };
}

export function decodeArray(wire: WireArray): { shape: number[]; data: Float64Array } {
  const buf = Buffer.from(wire.data, "base64");
  const data = new Float64Array(buf.buffer, buf.byteOffset, buf.byteLength / 8);
  return { shape: wire.shape, data: new Float64Array(data) };
}

export interface VsegOptions {
  /** Command used to reach the primary package; defaults to python3 -m vseg. */
  pythonCommand?: string[];
  maxBufferBytes?: number;
}

export class Vseg {
  private readonly command: string[];
  private readonly maxBuffer: number;

  constructor(options: VsegOptions = {}) {
    this.command = options.pythonCommand ?? ["python3", "-m", "vseg"];
    this.maxBuffer = options.maxBufferBytes ?? 256 * 1024 * 1024;
  }

  /** Send a batch of raw rpc requests; one response object per request. */
  callBatch(requests: object[]): any[] {
    const input = requests.map((r) => JSON.stringify(r)).join("\n") + "\n";
    const proc = spawnSync(this.command[0], [...this.command.slice(1), "rpc"], {
      input,
      encoding: "utf8",
      maxBuffer: this.maxBuffer,
    });
    if (proc.error) {
      throw proc.error;
    }
    if (proc.status !== 0) {
      throw new Error(`vseg rpc exited with ${proc.status}: ${proc.stderr}`);
    }
    const lines = proc.stdout.split("\n").filter((l) => l.trim().length > 0);
    if (lines.length !== requests.length) {
      throw new Error(`expected ${requests.length} responses, got ${lines.length}`);
    }
    return lines.map((line) => {
      const res = JSON.parse(line);
      if (!res.ok) {
        throw new VsegError(res.message, res.error);
      }
      return res.result;
    });
  }

  call(op: string, params: object = {}): any {
    return this.callBatch([{ op, ...params }])[0];
  }

  version(): string {
    return this.call("version").version;
  }

  geometry(s: number, w: number): Geometry {
    return this.call("geometry", { s, w });
  }

  /** Fold an s*w row-major window into its n*n image. */
  fold(window: Float64Array, s: number, w: number): { n: number; image: Float64Array } {
    const res = this.call("fold", { s, w, window: encodeArray(window, [s, w]) });
    const { shape, data } = decodeArray(res.image);
    return { n: shape[0], image: data };
  }

  /** Invert the fold: n*n image back to the s*w row-major window. */
  unfoldToChannels(image: Float64Array, s: number, w: number): Float64Array {
    const n = Math.round(Math.sqrt(s * w));
    const res = this.call("unfold_to_channels", {
      s,
      w,
      image: encodeArray(image, [n, n]),
    });
    return decodeArray(res.window).data;
  }

  /** Unfold and sum over channels to the 1*w time signal. */
  unfoldToTime(image: Float64Array, s: number, w: number): Float64Array {
    const n = Math.round(Math.sqrt(s * w));
    const res = this.call("unfold_to_time", { s, w, image: encodeArray(image, [n, n]) });
    return decodeArray(res.time).data;
  }

  /** Build the 6-class folded target mask stack for annotated spans. */
  makeTarget(
    s: number,
    w: number,
    annotations: Annotation[],
  ): { n: number; masks: Float64Array } {
    const res = this.call("make_target", { s, w, annotations });
    const { shape, data } = decodeArray(res.masks);
    return { n: shape[1], masks: data };
  }

  /** Saturate, detect and classify 6*w per-class time arrays. */
  runPostprocessing(
    arrays: Float64Array,
    w: number,
    options: PostprocessOptions = {},
  ): Detection[] {
    const res = this.call("run_postprocessing", {
      arrays: encodeArray(arrays, [6, w]),
      merge_gap: options.mergeGap ?? 100,
      min_len: options.minLen ?? 0,
    });
    return res.detections;
  }

  diceLoss(
    pred: Float64Array,
    target: Float64Array,
    shape: number[],
    smoothing?: number,
  ): number {
    const req: any = {
      pred: encodeArray(pred, shape),
      target: encodeArray(target, shape),
    };
    if (smoothing !== undefined) {
      req.smoothing = smoothing;
    }
    return this.call("dice_loss", req).loss;
  }

  eventIou(detections: Detection[], truth: Annotation): number {
    return this.call("event_iou", { detections, truth }).iou;
  }

  meanIou(values: number[]): number {
    return this.call("mean_iou", { values }).mean_iou;
  }

  f1Report(windows: { detections: Detection[]; truth?: Annotation }[]): F1Report {
    return this.call("f1_report", { windows });
  }
}
