/**
 * Minimal readers/writers for the vseg binary file formats, used to exercise
 * the file-based external interfaces from Node. All values little endian.
 */
import { readFileSync, writeFileSync } from "node:fs";

export interface VsgdWindow {
  s: number;
  w: number;
  sampleRate: number;
  startEpochS: number;
  annotations: { start: number; end: number; classCode: number }[];
  samples: Float32Array; // s*w row-major
}

export function writeVsgd(path: string, win: VsgdWindow): void {
  const header = Buffer.alloc(29);
  header.write("VSGD", 0, "ascii");
  header.writeUInt8(1, 4);
  header.writeUInt16LE(win.s, 5);
  header.writeUInt32LE(win.w, 7);
  header.writeDoubleLE(win.sampleRate, 11);
  header.writeDoubleLE(win.startEpochS, 19);
  header.writeUInt16LE(win.annotations.length, 27);
  const anns = Buffer.alloc(9 * win.annotations.length);
  win.annotations.forEach((a, i) => {
    anns.writeUInt32LE(a.start, i * 9);
    anns.writeUInt32LE(a.end, i * 9 + 4);
    anns.writeUInt8(a.classCode, i * 9 + 8);
  });
  const payload = Buffer.from(win.samples.buffer, win.samples.byteOffset, win.samples.byteLength);
  writeFileSync(path, Buffer.concat([header, anns, payload]));
}

export interface VsgmFile {
  classCount: number;
  n: number;
  masks: Float32Array; // classCount*n*n, class-major row-major
}

export function readVsgm(path: string): VsgmFile {
  const raw = readFileSync(path);
  if (raw.subarray(0, 4).toString("ascii") !== "VSGM") {
    throw new Error("not a VSGM file");
  }
  const version = raw.readUInt8(4);
  if (version !== 1) {
    throw new Error(`unsupported VSGM version ${version}`);
  }
  const classCount = raw.readUInt16LE(5);
  const n = raw.readUInt32LE(7);
  const body = raw.subarray(11);
  if (body.byteLength !== classCount * n * n * 4) {
    throw new Error(`VSGM payload has ${body.byteLength} bytes, expected ${classCount * n * n * 4}`);
  }
  const copy = Buffer.from(body); // alignment-safe view for Float32Array
  return {
    classCount,
    n,
    masks: new Float32Array(copy.buffer, copy.byteOffset, classCount * n * n),
  };
}
