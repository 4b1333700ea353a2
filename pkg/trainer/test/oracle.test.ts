import * as fs from "node:fs";
import * as path from "node:path";
import { describe, expect, it } from "vitest";
import { readIdxImages } from "../src/idx.js";
import { classify, forward, integerizeImage, ModelDoc, Tensor3 } from "../src/oracle.js";

const REPO = path.join(__dirname, "..", "..");

function doc(layers: any[]): ModelDoc {
  return {
    format: "hefir-model",
    version: 1,
    architecture: "toy_hcnn",
    bit_width: 4,
    input_scale: 4,
    layers,
  };
}

describe("integer oracle", () => {
  it("identity 1x1 conv scales by the weight", () => {
    const m = doc([
      {
        kind: "conv", name: "c", filters: 1, kernel: [1, 1], stride: [1, 1],
        padding: false, groups: 1, weight_scale: 15, weights: [15],
      },
    ]);
    const image: Tensor3 = { h: 2, w: 2, c: 1, data: new Float64Array([1, 2, 3, 4]) };
    expect([...forward(m, image)]).toEqual([15, 30, 45, 60]);
  });

  it("square and window-sum pool", () => {
    const m = doc([
      { kind: "square", name: "s" },
      { kind: "pool", name: "p", extent: 2, stride: [2, 2] },
    ]);
    const image: Tensor3 = { h: 2, w: 2, c: 1, data: new Float64Array([1, 2, 3, -4]) };
    expect([...forward(m, image)]).toEqual([1 + 4 + 9 + 16]);
  });

  it("grouped conv reads one channel per filter group", () => {
    const m = doc([
      {
        kind: "conv", name: "g", filters: 2, kernel: [1, 1], stride: [1, 1],
        padding: false, groups: 2, weight_scale: 15, weights: [1, 1],
      },
    ]);
    // 1x1x2 input: filter 0 reads channel 0, filter 1 reads channel 1
    const image: Tensor3 = { h: 1, w: 1, c: 2, data: new Float64Array([5, 9]) };
    expect([...forward(m, image)]).toEqual([5, 9]);
  });

  it("zero padding contributes nothing", () => {
    const m = doc([
      {
        kind: "conv", name: "c", filters: 1, kernel: [3, 3], stride: [1, 1],
        padding: true, groups: 1, weight_scale: 15,
        weights: [1, 1, 1, 1, 1, 1, 1, 1, 1],
      },
    ]);
    const image: Tensor3 = { h: 2, w: 2, c: 1, data: new Float64Array([1, 1, 1, 1]) };
    // every output sums only the in-bounds 2x2 window
    expect([...forward(m, image)]).toEqual([4, 4, 4, 4]);
  });

  it("classify breaks ties toward the lowest index", () => {
    expect(classify([3, 7, 7, 1])).toBe(1);
    expect(classify([-5, -5])).toBe(0);
  });

  it("matches the engine's committed golden logits on MNIST image 0", () => {
    const modelText = fs.readFileSync(
      path.join(REPO, "data", "models", "mnist_fixture_4bit.json"), "utf-8"
    );
    const model = JSON.parse(modelText) as ModelDoc;
    const golden = JSON.parse(
      fs.readFileSync(
        path.join(REPO, "tests", "golden", "mnist_fixture_logits.json"), "utf-8"
      )
    );
    const images = readIdxImages(
      path.join(REPO, "data", "mnist", "t10k-images-idx3-ubyte.gz")
    );
    const image = integerizeImage(
      images.pixels.subarray(0, 784), 28, 28, 1, model.input_scale
    );
    const logits = forward(model, image);
    expect([...logits]).toEqual(golden.logits);
    expect(classify(logits)).toBe(golden.predicted);
  });
});
