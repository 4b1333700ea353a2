/**
 * Readers for IDX image/label files (plain or gzipped) and the CIFAR-10
 * binary batch format.
 */

import * as fs from "node:fs";
import * as zlib from "node:zlib";

const IMAGE_MAGIC = 0x00000803;
const LABEL_MAGIC = 0x00000801;

function readMaybeGzip(path: string): Buffer {
  const raw = fs.readFileSync(path);
  if (raw.length >= 2 && raw[0] === 0x1f && raw[1] === 0x8b) {
    return zlib.gunzipSync(raw);
  }
  return raw;
}

export interface ImageSet {
  count: number;
  rows: number;
  cols: number;
  /** row-major pixel bytes, count*rows*cols long */
  pixels: Uint8Array;
}

export function readIdxImages(path: string): ImageSet {
  const buf = readMaybeGzip(path);
  if (buf.length < 16 || buf.readUInt32BE(0) !== IMAGE_MAGIC) {
    throw new Error(`${path}: not an IDX image file`);
  }
  const count = buf.readUInt32BE(4);
  const rows = buf.readUInt32BE(8);
  const cols = buf.readUInt32BE(12);
  const need = 16 + count * rows * cols;
  if (buf.length < need) {
    throw new Error(`${path}: truncated at byte ${buf.length} of ${need}`);
  }
  return { count, rows, cols, pixels: new Uint8Array(buf.buffer, buf.byteOffset + 16, count * rows * cols) };
}

export function readIdxLabels(path: string): Uint8Array {
  const buf = readMaybeGzip(path);
  if (buf.length < 8 || buf.readUInt32BE(0) !== LABEL_MAGIC) {
    throw new Error(`${path}: not an IDX label file`);
  }
  const count = buf.readUInt32BE(4);
  if (buf.length < 8 + count) {
    throw new Error(`${path}: truncated`);
  }
  return new Uint8Array(buf.buffer, buf.byteOffset + 8, count);
}

export function writeIdxImages(path: string, images: Uint8Array[], rows: number, cols: number): void {
  const head = Buffer.alloc(16);
  head.writeUInt32BE(IMAGE_MAGIC, 0);
  head.writeUInt32BE(images.length, 4);
  head.writeUInt32BE(rows, 8);
  head.writeUInt32BE(cols, 12);
  fs.writeFileSync(path, Buffer.concat([head, ...images.map((im) => Buffer.from(im))]));
}

/**
 * One CIFAR-10 binary batch: records of [label, 1024 R, 1024 G, 1024 B].
 * Returns HWC-ordered pixels per image.
 */
export function readCifarBatch(path: string): { labels: Uint8Array; pixels: Uint8Array; count: number } {
  const buf = readMaybeGzip(path);
  const record = 3073;
  if (buf.length % record !== 0) {
    throw new Error(`${path}: not a CIFAR-10 binary batch`);
  }
  const count = buf.length / record;
  const labels = new Uint8Array(count);
  const pixels = new Uint8Array(count * 32 * 32 * 3);
  for (let i = 0; i < count; i++) {
    const base = i * record;
    labels[i] = buf[base];
    for (let p = 0; p < 1024; p++) {
      for (let c = 0; c < 3; c++) {
        pixels[i * 3072 + p * 3 + c] = buf[base + 1 + c * 1024 + p];
      }
    }
  }
  return { labels, pixels, count };
}
