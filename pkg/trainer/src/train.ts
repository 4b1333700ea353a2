/**
 * Training CLI: low-precision networks trained with straight-through
 * quantization, exported as integer model documents for the inference
 * engine.
 *
 *   node dist/train.js --dataset mnist --data-dir ../data/mnist \
 *        --epochs 12 --out artifacts/mnist_k4.json
 *
 * --fixture additionally projects conv1/conv2/fc one-sided integer weight
 * sums onto the capacity budgets after every step, producing a model the
 * engine's exact-interval tracker certifies at the 43-bit modulus.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";

import { loadCifarSplit, loadMnistSplit, Split, syntheticSplit } from "./data.js";
import { exportModel, modelDocToJson, projectToBudgets } from "./export.js";
import { cifarSpec, mnistSpec, NetworkSpec, QuantizedNet, toySpec } from "./model.js";
import { classify, forward, ModelDoc, Tensor3 } from "./oracle.js";

export interface TrainConfig {
  dataset: "mnist" | "cifar10" | "synthetic";
  dataDir: string;
  bits?: number;
  epochs: number;
  batchSize: number;
  learningRate: number;
  seed: number;
  fixture: boolean;
  augment?: boolean; // random +-2px shifts on training batches
  limit?: number; // cap on training examples (smoke runs)
  testLimit?: number;
}

export interface TrainReport {
  dataset: string;
  architecture: string;
  bits: number;
  epochs: number;
  seed: number;
  fixture: boolean;
  trainExamples: number;
  floatQuantizedAccuracy: number;
  integerOracleAccuracy: number;
  epochLosses: number[];
}

function specFor(config: TrainConfig): NetworkSpec {
  const spec =
    config.dataset === "cifar10"
      ? cifarSpec()
      : config.dataset === "synthetic"
        ? toySpec()
        : mnistSpec();
  if (config.bits) spec.bits = config.bits;
  return spec;
}

function loadSplits(config: TrainConfig, spec: NetworkSpec): { train: Split; test: Split } {
  if (config.dataset === "mnist") {
    return {
      train: loadMnistSplit(config.dataDir, "train", spec.inputScale),
      test: loadMnistSplit(config.dataDir, "test", spec.inputScale),
    };
  }
  if (config.dataset === "cifar10") {
    return {
      train: loadCifarSplit(config.dataDir, "train", spec.inputScale),
      test: loadCifarSplit(config.dataDir, "test", spec.inputScale),
    };
  }
  const last = spec.layers[spec.layers.length - 1];
  const classes = last.kind === "fc" ? last.outputs : 10;
  return {
    train: syntheticSplit(1000, spec.inputShape, spec.inputScale, config.seed, classes),
    test: syntheticSplit(200, spec.inputShape, spec.inputScale, config.seed + 1, classes),
  };
}

function take(split: Split, limit?: number): Split {
  if (!limit || limit >= split.count) return split;
  const [h, w, c] = split.shape;
  return {
    images: split.images.slice(0, limit * h * w * c),
    labels: split.labels.slice(0, limit),
    count: limit,
    shape: split.shape,
  };
}

function batchTensor(
  split: Split,
  indices: Int32Array,
  from: number,
  to: number,
  classes: number,
  shiftRng?: () => number
) {
  const [h, w, c] = split.shape;
  const size = to - from;
  const xs = new Float32Array(size * h * w * c);
  const ys = new Int32Array(size);
  const imageLen = h * w * c;
  for (let i = 0; i < size; i++) {
    const src = indices[from + i];
    const base = src * imageLen;
    if (shiftRng) {
      const dy = Math.floor(shiftRng() * 5) - 2;
      const dx = Math.floor(shiftRng() * 5) - 2;
      for (let y = 0; y < h; y++) {
        const sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (let x = 0; x < w; x++) {
          const sx = x - dx;
          if (sx < 0 || sx >= w) continue;
          for (let ch = 0; ch < c; ch++) {
            xs[(i * h + y) * w * c + x * c + ch] =
              split.images[base + (sy * w + sx) * c + ch];
          }
        }
      }
    } else {
      xs.set(split.images.subarray(base, base + imageLen), i * imageLen);
    }
    ys[i] = split.labels[src];
  }
  return {
    x: tf.tensor4d(xs, [size, h, w, c]),
    y: tf.oneHot(tf.tensor1d(ys, "int32"), classes),
  };
}

function shuffled(count: number, seed: number): Int32Array {
  const idx = new Int32Array(count);
  for (let i = 0; i < count; i++) idx[i] = i;
  let state = seed >>> 0;
  for (let i = count - 1; i > 0; i--) {
    state = (state * 1664525 + 1013904223) >>> 0;
    const j = state % (i + 1);
    const tmp = idx[i];
    idx[i] = idx[j];
    idx[j] = tmp;
  }
  return idx;
}

/** accuracy of the float-quantized network on a split */
export function evaluate(net: QuantizedNet, split: Split, batchSize = 500): number {
  const [h, w, c] = split.shape;
  const imageLen = h * w * c;
  let correct = 0;
  for (let from = 0; from < split.count; from += batchSize) {
    const to = Math.min(from + batchSize, split.count);
    const xs = tf.tensor4d(
      split.images.subarray(from * imageLen, to * imageLen),
      [to - from, h, w, c]
    );
    const preds = tf.tidy(() => net.forward(xs).argMax(1));
    const values = preds.arraySync() as number[];
    for (let i = 0; i < values.length; i++) {
      if (values[i] === split.labels[from + i]) correct += 1;
    }
    xs.dispose();
    preds.dispose();
  }
  return correct / split.count;
}

/** accuracy of the exported integer document under the exact oracle */
export function evaluateIntegerDoc(doc: ModelDoc, split: Split, scale: number): number {
  const [h, w, c] = split.shape;
  const imageLen = h * w * c;
  let correct = 0;
  for (let i = 0; i < split.count; i++) {
    const image: Tensor3 = { h, w, c, data: new Float64Array(imageLen) };
    for (let j = 0; j < imageLen; j++) {
      // split values are round(p*scale)/scale; recover the integer grid
      image.data[j] = Math.round(split.images[i * imageLen + j] * scale);
    }
    const logits = forward(doc, image);
    if (classify(logits) === split.labels[i]) correct += 1;
  }
  return correct / split.count;
}

export async function train(config: TrainConfig): Promise<{ net: QuantizedNet; report: TrainReport; doc: ModelDoc }> {
  const spec = specFor(config);
  const { train: trainAll, test: testAll } = loadSplits(config, spec);
  const trainSplit = take(trainAll, config.limit);
  const testSplit = testAll;
  // per-epoch progress probes may use a subset; the report always
  // evaluates the full test split
  const probeSplit = take(testAll, config.testLimit);

  const last = spec.layers[spec.layers.length - 1];
  const classes = last.kind === "fc" ? last.outputs : 10;
  const net = new QuantizedNet(spec, config.seed);
  const epochLosses: number[] = [];

  for (let epoch = 0; epoch < config.epochs; epoch++) {
    // step decay keeps late epochs refining the quantized grid choices
    const lr = config.learningRate * Math.pow(0.6, Math.floor(epoch / 3));
    const optimizer = tf.train.adam(lr);
    const order = shuffled(trainSplit.count, config.seed + epoch);
    let shiftState = (config.seed * 2654435761 + epoch) >>> 0;
    const shiftRng = config.augment
      ? () => {
          shiftState = (shiftState * 1664525 + 1013904223) >>> 0;
          return shiftState / 2 ** 32;
        }
      : undefined;
    let lossSum = 0;
    let batches = 0;
    for (let from = 0; from < trainSplit.count; from += config.batchSize) {
      const to = Math.min(from + config.batchSize, trainSplit.count);
      const { x, y } = batchTensor(trainSplit, order, from, to, classes, shiftRng);
      const lossVal = optimizer.minimize(
        () =>
          tf.losses.softmaxCrossEntropy(y, net.forward(x)) as tf.Scalar,
        true,
        net.trainableWeights()
      )!;
      lossSum += lossVal.arraySync() as number;
      batches += 1;
      lossVal.dispose();
      x.dispose();
      y.dispose();
      if (config.fixture) projectToBudgets(net);
    }
    const meanLoss = lossSum / batches;
    epochLosses.push(meanLoss);
    const acc = evaluate(net, probeSplit);
    console.log(
      `epoch ${epoch + 1}/${config.epochs}: loss ${meanLoss.toFixed(4)}, test accuracy ${(acc * 100).toFixed(2)}%`
    );
  }

  const floatAcc = evaluate(net, testSplit);
  const doc = exportModel(net);
  const intAcc = evaluateIntegerDoc(doc, testSplit, spec.inputScale);
  const report: TrainReport = {
    dataset: config.dataset,
    architecture: spec.name,
    bits: spec.bits,
    epochs: config.epochs,
    seed: config.seed,
    fixture: config.fixture,
    trainExamples: trainSplit.count,
    floatQuantizedAccuracy: floatAcc,
    integerOracleAccuracy: intAcc,
    epochLosses,
  };
  return { net, report, doc };
}

function parseArgs(argv: string[]): TrainConfig & { out?: string; reportPath?: string } {
  const get = (name: string, fallback?: string) => {
    const i = argv.indexOf(`--${name}`);
    return i >= 0 ? argv[i + 1] : fallback;
  };
  const has = (name: string) => argv.includes(`--${name}`);
  const dataset = (get("dataset", "mnist") as TrainConfig["dataset"]) ?? "mnist";
  return {
    dataset,
    dataDir: get("data-dir", path.join("..", "data", "mnist"))!,
    bits: get("bits") ? Number(get("bits")) : undefined,
    epochs: Number(get("epochs", "10")),
    batchSize: Number(get("batch-size", "128")),
    learningRate: Number(get("lr", "0.001")),
    seed: Number(get("seed", "1")),
    fixture: has("fixture"),
    augment: has("augment"),
    limit: get("limit") ? Number(get("limit")) : undefined,
    testLimit: get("test-limit") ? Number(get("test-limit")) : undefined,
    out: get("out"),
    reportPath: get("report"),
  };
}

async function selectBackend(name: string | undefined): Promise<void> {
  // the wasm backend lacks conv backprop kernels, so training defaults to
  // the pure-JS backend; --backend wasm suits inference-only workloads
  if (name !== "wasm") return;
  await import("@tensorflow/tfjs-backend-wasm");
  await tf.setBackend("wasm");
  await tf.ready();
}

async function main() {
  const config = parseArgs(process.argv.slice(2));
  const backendArg = process.argv.includes("--backend")
    ? process.argv[process.argv.indexOf("--backend") + 1]
    : undefined;
  await selectBackend(backendArg);
  await tf.ready();
  console.log(
    `training ${config.dataset} (${config.epochs} epochs, seed ${config.seed}, backend ${tf.getBackend()})`
  );
  const t0 = Date.now();
  const { report, doc } = await train(config);
  console.log(
    `done in ${((Date.now() - t0) / 1000).toFixed(0)}s: ` +
      `float-quantized ${(report.floatQuantizedAccuracy * 100).toFixed(2)}%, ` +
      `integer oracle ${(report.integerOracleAccuracy * 100).toFixed(2)}%`
  );
  const drift = Math.abs(report.floatQuantizedAccuracy - report.integerOracleAccuracy);
  if (drift > 0.003) {
    console.error(`export drift ${(drift * 100).toFixed(2)}% exceeds 0.3%`);
    process.exitCode = 1;
    return;
  }
  if (config.out) {
    fs.mkdirSync(path.dirname(config.out), { recursive: true });
    fs.writeFileSync(config.out, modelDocToJson(doc));
    console.log(`wrote ${config.out}`);
  }
  if (config.reportPath) {
    fs.writeFileSync(config.reportPath, JSON.stringify(report, null, 1));
    console.log(`wrote ${config.reportPath}`);
  }
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("train.js") || entry.endsWith("train.ts")) {
  main().catch((err) => {
    console.error(err);
    process.exitCode = 1;
  });
}
