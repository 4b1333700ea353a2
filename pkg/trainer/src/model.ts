/**
 * The two published architectures as trainable tfjs graphs with k-bit
 * straight-through weight quantization and square activations.
 *
 * The second MNIST convolution applies fifty single-channel 5x5 filters,
 * ten per input channel: implemented as five sliced convolutions whose
 * outputs concatenate group-major, so exported filter j reads input
 * channel floor(j/10).
 */

import * as tf from "@tensorflow/tfjs";
import { makeSteQuantizer } from "./quantize.js";

export type LayerSpec =
  | {
      kind: "conv";
      name: string;
      filters: number;
      kernel: [number, number];
      stride: [number, number];
      padding: boolean;
      groups: number;
      weightScale: number;
    }
  | { kind: "square"; name: string }
  | { kind: "pool"; name: string; extent: number; stride: number }
  | { kind: "fc"; name: string; outputs: number; weightScale: number };

export interface NetworkSpec {
  name: string;
  inputShape: [number, number, number];
  inputScale: number;
  bits: number;
  layers: LayerSpec[];
}

export function mnistSpec(): NetworkSpec {
  return {
    name: "mnist_hcnn",
    inputShape: [28, 28, 1],
    inputScale: 4,
    bits: 4,
    layers: [
      { kind: "conv", name: "conv1", filters: 5, kernel: [5, 5], stride: [2, 2], padding: false, groups: 1, weightScale: 15 },
      { kind: "square", name: "square1" },
      { kind: "conv", name: "conv2", filters: 50, kernel: [5, 5], stride: [2, 2], padding: false, groups: 5, weightScale: 15 },
      { kind: "square", name: "square2" },
      { kind: "fc", name: "fc", outputs: 10, weightScale: 15 },
    ],
  };
}

export function cifarSpec(): NetworkSpec {
  return {
    name: "cifar10_hcnn",
    inputShape: [32, 32, 3],
    inputScale: 255,
    bits: 8,
    layers: [
      { kind: "conv", name: "conv1", filters: 32, kernel: [3, 3], stride: [1, 1], padding: true, groups: 1, weightScale: 10000 },
      { kind: "square", name: "square1" },
      { kind: "pool", name: "pool1", extent: 2, stride: 2 },
      { kind: "conv", name: "conv2", filters: 64, kernel: [3, 3], stride: [1, 1], padding: true, groups: 1, weightScale: 4095 },
      { kind: "square", name: "square2" },
      { kind: "pool", name: "pool2", extent: 2, stride: 2 },
      { kind: "conv", name: "conv3", filters: 128, kernel: [3, 3], stride: [1, 1], padding: true, groups: 1, weightScale: 10000 },
      { kind: "square", name: "square3" },
      { kind: "pool", name: "pool3", extent: 2, stride: 2 },
      { kind: "fc", name: "fc1", outputs: 256, weightScale: 1023 },
      { kind: "fc", name: "fc2", outputs: 10, weightScale: 63 },
    ],
  };
}

export function toySpec(): NetworkSpec {
  return {
    name: "toy_hcnn",
    inputShape: [8, 8, 1],
    inputScale: 4,
    bits: 4,
    layers: [
      { kind: "conv", name: "conv1", filters: 2, kernel: [3, 3], stride: [2, 2], padding: false, groups: 1, weightScale: 15 },
      { kind: "square", name: "square1" },
      { kind: "fc", name: "fc", outputs: 3, weightScale: 15 },
    ],
  };
}

export const SPECS: Record<string, () => NetworkSpec> = {
  mnist_hcnn: mnistSpec,
  cifar10_hcnn: cifarSpec,
  toy_hcnn: toySpec,
};

function outputShape(
  shape: [number, number, number],
  layer: LayerSpec
): [number, number, number] {
  const [h, w, c] = shape;
  if (layer.kind === "conv") {
    const [kh, kw] = layer.kernel;
    const [sh, sw] = layer.stride;
    const ph = layer.padding ? (kh - 1) / 2 : 0;
    const pw = layer.padding ? (kw - 1) / 2 : 0;
    return [
      Math.floor((h + 2 * ph - kh) / sh) + 1,
      Math.floor((w + 2 * pw - kw) / sw) + 1,
      layer.filters,
    ];
  }
  if (layer.kind === "pool") {
    return [
      Math.floor((h - layer.extent) / layer.stride) + 1,
      Math.floor((w - layer.extent) / layer.stride) + 1,
      c,
    ];
  }
  if (layer.kind === "fc") return [1, 1, layer.outputs];
  return shape;
}

export class QuantizedNet {
  spec: NetworkSpec;
  /** kernels in tfjs layout: conv [kh, kw, cg, filters], fc [in, out] */
  kernels: Map<string, tf.Variable>;
  private quant: (w: tf.Tensor) => tf.Tensor;

  constructor(spec: NetworkSpec, seed = 1) {
    this.spec = spec;
    this.kernels = new Map();
    this.quant = makeSteQuantizer(spec.bits) as (w: tf.Tensor) => tf.Tensor;
    let shape = spec.inputShape;
    let k = 0;
    for (const layer of spec.layers) {
      if (layer.kind === "conv") {
        const cg = shape[2] / layer.groups;
        const fanIn = layer.kernel[0] * layer.kernel[1] * cg;
        const std = Math.sqrt(2 / (fanIn + layer.filters));
        const init = tf.randomNormal(
          [layer.kernel[0], layer.kernel[1], cg, layer.filters],
          0,
          std,
          "float32",
          seed + k
        );
        this.kernels.set(layer.name, tf.variable(init, true));
      } else if (layer.kind === "fc") {
        const fanIn = shape[0] * shape[1] * shape[2];
        const std = Math.sqrt(2 / (fanIn + layer.outputs));
        const init = tf.randomNormal(
          [fanIn, layer.outputs],
          0,
          std,
          "float32",
          seed + k
        );
        this.kernels.set(layer.name, tf.variable(init, true));
      }
      shape = outputShape(shape, layer);
      k += 1;
    }
  }

  trainableWeights(): tf.Variable[] {
    return [...this.kernels.values()];
  }

  /**
   * Forward pass on a [batch, h, w, c] tensor of inputs already snapped to
   * the integerized grid (value = round(pixel * scale) / scale).  Pooling is
   * a window sum, matching the deployed integer semantics up to a common
   * positive per-logit factor.
   */
  forward(x: tf.Tensor4D, quantized = true): tf.Tensor2D {
    return tf.tidy(() => {
      let t: tf.Tensor = x;
      for (const layer of this.spec.layers) {
        if (layer.kind === "conv") {
          const kernel = this.kernels.get(layer.name)!;
          const w = quantized ? this.quant(kernel) : kernel;
          if (layer.groups === 1) {
            t = tf.conv2d(
              t as tf.Tensor4D,
              w as tf.Tensor4D,
              layer.stride,
              layer.padding ? "same" : "valid"
            );
          } else {
            const cg = (t.shape[3] as number) / layer.groups;
            const perGroup = layer.filters / layer.groups;
            const slices: tf.Tensor[] = [];
            for (let g = 0; g < layer.groups; g++) {
              const xin = tf.slice(
                t as tf.Tensor4D,
                [0, 0, 0, g * cg],
                [-1, -1, -1, cg]
              );
              const wg = tf.slice(
                w as tf.Tensor4D,
                [0, 0, 0, g * perGroup],
                [-1, -1, -1, perGroup]
              );
              slices.push(
                tf.conv2d(
                  xin as tf.Tensor4D,
                  wg as tf.Tensor4D,
                  layer.stride,
                  layer.padding ? "same" : "valid"
                )
              );
            }
            t = tf.concat(slices, 3);
          }
        } else if (layer.kind === "square") {
          t = tf.square(t);
        } else if (layer.kind === "pool") {
          t = tf
            .avgPool(
              t as tf.Tensor4D,
              [layer.extent, layer.extent],
              [layer.stride, layer.stride],
              "valid"
            )
            .mul(layer.extent * layer.extent);
        } else {
          const w = this.kernels.get(layer.name)!;
          const wq = quantized ? this.quant(w) : w;
          const flat = tf.reshape(t, [t.shape[0] as number, -1]);
          t = tf.matMul(flat as tf.Tensor2D, wq as tf.Tensor2D);
        }
      }
      return t as tf.Tensor2D;
    });
  }
}

/**
 * Grouped-conv kernels for a spec's conv layer, in export order: an array
 * of [filters][kh][kw][cg] float values with filter index group-major.
 */
export function kernelToExportOrder(
  kernel: tf.Tensor4D
): number[][][][] {
  const [kh, kw, cg, filters] = kernel.shape;
  const data = kernel.arraySync() as number[][][][];
  const out: number[][][][] = [];
  for (let f = 0; f < filters; f++) {
    const filt: number[][][] = [];
    for (let y = 0; y < kh; y++) {
      const row: number[][] = [];
      for (let x = 0; x < kw; x++) {
        const chans: number[] = [];
        for (let c = 0; c < cg; c++) chans.push(data[y][x][c][f]);
        row.push(chans);
      }
      filt.push(row);
    }
    out.push(filt);
  }
  return out;
}
