import { describe, expect, it } from "vitest";
import * as tf from "@tensorflow/tfjs";
import { syntheticSplit } from "../src/data.js";
import { exportModel, FIXTURE_BUDGETS, projectToBudgets } from "../src/export.js";
import { mnistSpec, QuantizedNet, toySpec } from "../src/model.js";
import { integerize, quantizeValue } from "../src/quantize.js";
import { evaluate, evaluateIntegerDoc, train } from "../src/train.js";

describe("training loop", () => {
  it("reduces the loss and exports a consistent integer model", async () => {
    const { report, doc } = await train({
      dataset: "synthetic",
      dataDir: "",
      epochs: 4,
      batchSize: 64,
      learningRate: 0.002,
      seed: 11,
      fixture: false,
    });
    expect(report.epochLosses.length).toBe(4);
    expect(report.epochLosses[3]).toBeLessThan(report.epochLosses[0]);
    // export drift: integer-oracle accuracy within 0.3% of float-quantized
    expect(
      Math.abs(report.integerOracleAccuracy - report.floatQuantizedAccuracy)
    ).toBeLessThanOrEqual(0.003);
    expect(doc.format).toBe("hefir-model");
    expect(doc.architecture).toBe("toy_hcnn");
  }, 120_000);

  it("every exported weight sits on the k-bit integer grid", async () => {
    const { doc } = await train({
      dataset: "synthetic",
      dataDir: "",
      epochs: 1,
      batchSize: 64,
      learningRate: 0.002,
      seed: 3,
      fixture: false,
    });
    for (const layer of doc.layers) {
      if (!layer.weights) continue;
      const scale = layer.weight_scale!;
      const valid = new Set<number>();
      for (let j = -15; j <= 15; j++) {
        valid.add(integerize(quantizeValue(j / 15, 4), 4, scale));
      }
      for (const w of layer.weights) expect(valid.has(w)).toBe(true);
    }
  }, 60_000);
});

describe("fixture budget projection", () => {
  it("forces one-sided integer sums under the capacity budgets", () => {
    const net = new QuantizedNet(mnistSpec(), 5);
    // inflate the weights far beyond any budget
    for (const v of net.trainableWeights()) {
      v.assign(tf.onesLike(v).mul(0.9));
    }
    projectToBudgets(net);
    const doc = exportModel(net);
    for (const layer of doc.layers) {
      if (!layer.weights) continue;
      const budget = FIXTURE_BUDGETS[layer.name];
      if (!budget) continue;
      const unit =
        layer.kind === "conv"
          ? layer.weights.length / layer.filters!
          : layer.weights.length / layer.outputs!;
      const units = layer.weights.length / unit;
      for (let u = 0; u < units; u++) {
        let pos = 0;
        let neg = 0;
        for (let i = 0; i < unit; i++) {
          const w = layer.weights[u * unit + i];
          if (w > 0) pos += w;
          else neg -= w;
        }
        expect(Math.max(pos, neg)).toBeLessThanOrEqual(budget);
      }
    }
  }, 60_000);
});

describe("evaluation helpers", () => {
  it("float and integer paths agree on an untouched network", () => {
    const spec = toySpec();
    const split = syntheticSplit(60, spec.inputShape, spec.inputScale, 2, 3);
    const net = new QuantizedNet(spec, 7);
    const feval = evaluate(net, split);
    const ieval = evaluateIntegerDoc(exportModel(net), split, spec.inputScale);
    expect(Math.abs(feval - ieval)).toBeLessThanOrEqual(0.003);
  }, 60_000);
});
