/**
 * Dataset assembly: MNIST from the repo's IDX files, CIFAR-10 from binary
 * batches when available, and a deterministic synthetic set for tests.
 *
 * Inputs are snapped to the deployed integer grid before training:
 * value = round(pixel/255 * scale) / scale, so the trained network sees
 * exactly what the inference engine will compute on.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { readCifarBatch, readIdxImages, readIdxLabels } from "./idx.js";

export interface Split {
  /** snapped to the integer grid, length count*h*w*c */
  images: Float32Array;
  labels: Uint8Array;
  count: number;
  shape: [number, number, number];
}

export function snap(pixel255: number, scale: number): number {
  return Math.round((pixel255 / 255) * scale) / scale;
}

function snapAll(pixels: Uint8Array, scale: number): Float32Array {
  const lut = new Float32Array(256);
  for (let v = 0; v < 256; v++) lut[v] = snap(v, scale);
  const out = new Float32Array(pixels.length);
  for (let i = 0; i < pixels.length; i++) out[i] = lut[pixels[i]];
  return out;
}

export function loadMnistSplit(dataDir: string, split: "train" | "test", scale: number): Split {
  const stem = split === "test" ? "t10k" : "train";
  const find = (name: string) => {
    for (const cand of [name, name + ".gz"]) {
      const p = path.join(dataDir, cand);
      if (fs.existsSync(p)) return p;
    }
    throw new Error(`${name}[.gz] not found under ${dataDir}`);
  };
  const images = readIdxImages(find(`${stem}-images-idx3-ubyte`));
  const labels = readIdxLabels(find(`${stem}-labels-idx1-ubyte`));
  return {
    images: snapAll(images.pixels, scale),
    labels: new Uint8Array(labels),
    count: images.count,
    shape: [images.rows, images.cols, 1],
  };
}

export function loadCifarSplit(dataDir: string, split: "train" | "test", scale: number): Split {
  const files =
    split === "test"
      ? ["test_batch.bin"]
      : [1, 2, 3, 4, 5].map((i) => `data_batch_${i}.bin`);
  const parts = files.map((f) => readCifarBatch(path.join(dataDir, f)));
  const count = parts.reduce((a, p) => a + p.count, 0);
  const pixels = new Uint8Array(count * 3072);
  const labels = new Uint8Array(count);
  let off = 0;
  for (const p of parts) {
    pixels.set(p.pixels, off * 3072);
    labels.set(p.labels, off);
    off += p.count;
  }
  return { images: snapAll(pixels, scale), labels, count, shape: [32, 32, 3] };
}

/**
 * Deterministic 10-class synthetic set: oriented bar patterns plus noise.
 * Only for pipeline smoke tests; not a stand-in for benchmark accuracy.
 */
export function syntheticSplit(
  count: number,
  shape: [number, number, number],
  scale: number,
  seed = 7,
  classes = 10
): Split {
  const [h, w, c] = shape;
  let state = seed >>> 0;
  const rand = () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
  const images = new Float32Array(count * h * w * c);
  const labels = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    const cls = i % classes;
    labels[i] = cls;
    const angleRow = cls % 5;
    const thick = cls < 5 ? 1 : 2;
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        const on =
          Math.abs(((y + angleRow * x) % h) - Math.floor(h / 2)) < thick;
        const noise = rand() * 0.2;
        const value = Math.min(1, (on ? 0.8 : 0.05) + noise);
        for (let ch = 0; ch < c; ch++) {
          images[((i * h + y) * w + x) * c + ch] =
            Math.round(value * scale) / scale;
        }
      }
    }
  }
  return { images, labels, count, shape };
}
