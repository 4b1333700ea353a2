#!/usr/bin/env python3
"""Regenerate the committed 4-bit MNIST fixture model and its golden logits.

The fixture's weights are deterministic and deliberately sparse: per-filter
one-sided weight sums stay inside budgets that make the exact-interval
capacity tracker certify the whole pipeline below t/2 for the 43-bit
plaintext modulus.  A densely-weighted trained model cannot carry such a
certificate at that modulus; this fixture exists so the homomorphic
pipeline, the tracker, and the audit can all be exercised end to end with
exact expectations.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hefir import datasets, nn_oracle, serial
from hefir.presets import MNIST_T

HERE = os.path.dirname(os.path.abspath(__file__))
MODEL_PATH = os.path.join(HERE, "..", "data", "models", "mnist_fixture_4bit.json")
GOLDEN_PATH = os.path.join(HERE, "..", "tests", "golden", "mnist_fixture_logits.json")

# one-sided per-filter integer weight budgets (at weight scale 15):
# certified bound = fc_budget * (conv2_budget * (4 * conv1_budget)^2)^2 < t/2
CONV1_BUDGET = 24
CONV2_BUDGET = 16
FC_BUDGET = 100


def one_sided_sums(weights):
    pos = sum(int(w) for w in weights.reshape(-1) if w > 0)
    neg = -sum(int(w) for w in weights.reshape(-1) if w < 0)
    return pos, neg


def build_conv1():
    """Five 5x5 stroke detectors with one-sided sums <= CONV1_BUDGET."""
    f = np.zeros((5, 5, 5, 1), dtype=np.int64)
    # horizontal edge
    f[0, 1, :, 0] = 4
    f[0, 3, :, 0] = -4
    # vertical edge
    f[1, :, 1, 0] = 4
    f[1, :, 3, 0] = -4
    # center blob vs ring
    f[2, 2, 2, 0] = 12
    f[2, 1, 2, 0] = f[2, 3, 2, 0] = f[2, 2, 1, 0] = f[2, 2, 3, 0] = 3
    f[2, 0, 0, 0] = f[2, 0, 4, 0] = f[2, 4, 0, 0] = f[2, 4, 4, 0] = -5
    # main diagonal vs anti-diagonal
    for i in range(5):
        f[3, i, i, 0] = 4
        f[3, i, 4 - i, 0] = -4
    f[3, 2, 2, 0] = 4  # center counted once, keep sums inside budget
    # ink mass
    f[4, 1:4, 1:4, 0] = 2
    f[4, 0, 2, 0] = f[4, 4, 2, 0] = 3
    return f


def build_conv2(rng):
    """Fifty single-channel 5x5 filters, ten per input channel (groups=5).

    Each filter is one or two strong taps; one-sided sums <= CONV2_BUDGET.
    """
    f = np.zeros((50, 5, 5, 1), dtype=np.int64)
    for fi in range(50):
        y, x = rng.integers(0, 5, 2)
        f[fi, y, x, 0] = 15 if fi % 2 == 0 else -15
        if fi % 3 == 0:
            y2, x2 = rng.integers(0, 5, 2)
            if (y2, x2) != (y, x):
                f[fi, y2, x2, 0] = 1 if fi % 2 == 0 else -1
    return f


def build_fc(rng):
    """Ten rows over 800 inputs, about six taps each, sums <= FC_BUDGET."""
    f = np.zeros((10, 800), dtype=np.int64)
    for row in range(10):
        taps = rng.choice(800, size=12, replace=False)
        pos_budget = FC_BUDGET
        neg_budget = FC_BUDGET
        for i, tap in enumerate(taps):
            mag = int(rng.integers(8, 16))
            if i % 2 == 0 and pos_budget >= mag:
                f[row, tap] = mag
                pos_budget -= mag
            elif neg_budget >= mag:
                f[row, tap] = -mag
                neg_budget -= mag
    return f


def build_toy_model():
    """Small committed model for CLI drives and demos (8x8 input)."""
    rng = np.random.default_rng(0x70E)
    spec = nn_oracle.toy_hcnn()
    conv = rng.integers(-4, 5, (2, 3, 3, 1))
    fc = rng.integers(-4, 5, (3, 18))
    return nn_oracle.QuantizedModel(spec=spec, bit_width=4, weights=[conv, None, fc])


def build_procedural_model():
    rng = np.random.default_rng(0xF1D0)
    conv1 = build_conv1()
    conv2 = build_conv2(rng)
    fc = build_fc(rng)
    for name, w, budget in (
        ("conv1", conv1.reshape(5, -1), CONV1_BUDGET),
        ("conv2", conv2.reshape(50, -1), CONV2_BUDGET),
        ("fc", fc, FC_BUDGET),
    ):
        for row in w:
            pos, neg = one_sided_sums(row)
            assert pos <= budget and neg <= budget, (name, pos, neg, budget)
    return nn_oracle.QuantizedModel(
        spec=nn_oracle.mnist_hcnn(),
        bit_width=4,
        weights=[conv1, None, conv2, None, fc],
    )


def certify(model):
    tracker = nn_oracle.capacity_certificate(model, MNIST_T)
    final = tracker.records[-1]
    print(f"certified bound: 2^{final.bound.bit_length() - 1} "
          f"(t/2 = 2^{(MNIST_T // 2).bit_length() - 1})")
    assert 2 * final.bound < MNIST_T


def regenerate_goldens(model):
    """Golden logits for MNIST test image 0 under the committed fixture."""
    images, labels = datasets.load_mnist(split="test")
    img0 = datasets.integerize_image(images[0], model.spec.input_scale)
    logits = nn_oracle.forward(model, img0).reshape(-1)
    golden = {
        "image_index": 0,
        "true_label": int(labels[0]),
        "logits": [int(v) for v in logits],
        "predicted": nn_oracle.classify(logits),
    }
    os.makedirs(os.path.dirname(GOLDEN_PATH), exist_ok=True)
    with open(GOLDEN_PATH, "w") as fh:
        json.dump(golden, fh, indent=1)
    print(f"wrote {GOLDEN_PATH}: {golden}")


def main():
    # --procedural rebuilds the hand-constructed weights; the default
    # validates whatever fixture is committed (e.g. a trained one from the
    # trainer's --fixture mode) and refreshes its goldens
    if "--procedural" in sys.argv or not os.path.exists(MODEL_PATH):
        model = build_procedural_model()
        os.makedirs(os.path.dirname(MODEL_PATH), exist_ok=True)
        with open(MODEL_PATH, "w") as fh:
            fh.write(serial.dump_model(model))
        print(f"wrote {MODEL_PATH} (procedural weights)")
    else:
        with open(MODEL_PATH) as fh:
            model = serial.load_model(fh.read())
        print(f"validating committed {MODEL_PATH}")
    certify(model)

    toy_path = os.path.join(os.path.dirname(MODEL_PATH), "toy_fixture_4bit.json")
    if not os.path.exists(toy_path):
        with open(toy_path, "w") as fh:
            fh.write(serial.dump_model(build_toy_model()))
        print(f"wrote {toy_path}")

    regenerate_goldens(model)


if __name__ == "__main__":
    main()
