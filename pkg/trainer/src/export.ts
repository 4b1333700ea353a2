/**
 * Model export: deterministic re-quantization of trained float kernels into
 * the integer model document consumed by the inference engine, plus the
 * capacity projection used for fixture-grade models.
 */

import * as tf from "@tensorflow/tfjs";
import { kernelToExportOrder, NetworkSpec, QuantizedNet } from "./model.js";
import { integerize, quantizeValue } from "./quantize.js";
import { LayerDoc, ModelDoc } from "./oracle.js";

export function exportModel(net: QuantizedNet): ModelDoc {
  const spec = net.spec;
  const layers: LayerDoc[] = [];
  for (const layer of spec.layers) {
    if (layer.kind === "conv") {
      const kernel = net.kernels.get(layer.name)! as unknown as tf.Tensor4D;
      const ordered = kernelToExportOrder(kernel as tf.Tensor4D);
      const flat: number[] = [];
      for (const filt of ordered) {
        for (const row of filt) {
          for (const chans of row) {
            for (const v of chans) {
              flat.push(
                integerize(quantizeValue(v, spec.bits), spec.bits, layer.weightScale)
              );
            }
          }
        }
      }
      layers.push({
        kind: "conv",
        name: layer.name,
        filters: layer.filters,
        kernel: layer.kernel,
        stride: layer.stride,
        padding: layer.padding,
        groups: layer.groups,
        weight_scale: layer.weightScale,
        weights: flat,
      });
    } else if (layer.kind === "fc") {
      const kernel = net.kernels.get(layer.name)!; // [in, out]
      const data = kernel.arraySync() as number[][];
      const inCount = data.length;
      const outputs = data[0].length;
      const flat: number[] = [];
      for (let o = 0; o < outputs; o++) {
        for (let i = 0; i < inCount; i++) {
          flat.push(
            integerize(quantizeValue(data[i][o], spec.bits), spec.bits, layer.weightScale)
          );
        }
      }
      layers.push({
        kind: "fc",
        name: layer.name,
        outputs,
        weight_scale: layer.weightScale,
        weights: flat,
      });
    } else if (layer.kind === "square") {
      layers.push({ kind: "square", name: layer.name });
    } else {
      layers.push({
        kind: "pool",
        name: layer.name,
        extent: layer.extent,
        stride: [layer.stride, layer.stride],
      });
    }
  }
  return {
    format: "hefir-model",
    version: 1,
    architecture: spec.name,
    bit_width: spec.bits,
    input_scale: spec.inputScale,
    layers,
  };
}

/**
 * Certified one-sided weight-sum budgets for fixture-grade models: the
 * exact-interval capacity tracker certifies the pipeline below t/2 at the
 * published 43-bit modulus iff every conv1/conv2/fc row keeps its positive
 * and negative integer sums within these limits.
 */
export const FIXTURE_BUDGETS: Record<string, number> = {
  conv1: 24,
  conv2: 16,
  fc: 100,
};

/**
 * Project every filter of the named layers so its one-sided integerized
 * weight sums respect the budget (downscaling the whole filter preserves
 * its direction).  Call after each optimizer step for fixture training.
 */
export function projectToBudgets(net: QuantizedNet, budgets = FIXTURE_BUDGETS): void {
  const spec = net.spec;
  for (const layer of spec.layers) {
    if (layer.kind !== "conv" && layer.kind !== "fc") continue;
    const budget = budgets[layer.name];
    if (!budget) continue;
    const kernel = net.kernels.get(layer.name)!;
    const scale = layer.weightScale;
    const shape = kernel.shape;
    const flatData = (kernel.flatten().arraySync() as number[]).slice();
    // per output unit: conv kernels are [kh, kw, cg, filters] (unit = last
    // axis); fc kernels are [in, out] (unit = column)
    const unitCount = shape[shape.length - 1];
    const stride = unitCount;
    const unitLen = flatData.length / unitCount;
    const sidedWorst = (u: number) => {
      let pos = 0;
      let neg = 0;
      for (let i = 0; i < unitLen; i++) {
        const v = integerize(
          quantizeValue(flatData[i * stride + u], spec.bits),
          spec.bits,
          scale
        );
        if (v > 0) pos += v;
        else neg -= v;
      }
      return Math.max(pos, neg);
    };
    for (let u = 0; u < unitCount; u++) {
      // re-rounding after a downscale can leave a sum one step over the
      // budget, so tighten until the integerized sums actually fit
      let worst = sidedWorst(u);
      while (worst > budget) {
        const factor = (0.98 * budget) / worst;
        for (let i = 0; i < unitLen; i++) {
          flatData[i * stride + u] *= factor;
        }
        worst = sidedWorst(u);
      }
    }
    const updated = tf.tensor(flatData, shape as number[]);
    kernel.assign(updated as tf.Tensor);
    updated.dispose();
  }
}

export function modelDocToJson(doc: ModelDoc): string {
  return JSON.stringify(doc, null, 1);
}
