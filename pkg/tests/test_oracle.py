import json
import os
from fractions import Fraction

import numpy as np
import pytest

from hefir import datasets, nn_oracle as o
from hefir.presets import MNIST_T

from conftest import GOLDEN_DIR, MNIST_DIR
from oracles import naive_conv2d


class TestQuantizer:
    def test_endpoints(self):
        q = o.quantize_weight(1.0, 4)
        assert q == Fraction(15, 15) == 1
        assert o.integerize(q, 15) == 15
        assert o.integerize(o.quantize_weight(-1.0, 4), 15) == -15

    def test_zero(self):
        for k in (1, 2, 4, 8):
            assert o.quantize_weight(0.0, k) == 0

    def test_half_tie(self):
        # 0.5 * 15 = 7.5 rounds away from zero to 8
        q = o.quantize_weight(0.5, 4)
        assert q == Fraction(8, 15)
        assert o.integerize(q, 15) == 8
        assert o.integerize(o.quantize_weight(-0.5, 4), 15) == -8

    def test_out_of_range_clamps(self):
        assert o.quantize_weight(1.7, 4) == 1
        assert o.quantize_weight(-3.0, 4) == -1

    def test_grid_values(self):
        for j in range(-15, 16):
            q = o.quantize_weight(j / 15, 4)
            assert q == Fraction(j, 15)
            assert o.integerize(q, 15) == j


class TestNetworkSpecs:
    def test_mnist_shapes_match_table(self):
        spec = o.mnist_hcnn()
        assert spec.input_shape == (28, 28, 1)
        assert spec.input_scale == 4
        assert spec.layer_shapes() == [
            (12, 12, 5), (12, 12, 5), (4, 4, 50), (4, 4, 50), (1, 1, 10),
        ]
        scales = [l.weight_scale for l in spec.layers if l.kind in (o.LayerKind.CONV, o.LayerKind.FC)]
        assert scales == [15, 15, 15]
        assert spec.layers[2].groups == 5

    def test_cifar_shapes_match_table(self):
        spec = o.cifar10_hcnn()
        assert spec.input_shape == (32, 32, 3)
        assert spec.input_scale == 255
        shapes = spec.layer_shapes()
        assert shapes[0] == (32, 32, 32)
        assert shapes[2] == (16, 16, 32)
        assert shapes[3] == (16, 16, 64)
        assert shapes[5] == (8, 8, 64)
        assert shapes[6] == (8, 8, 128)
        assert shapes[8] == (4, 4, 128)
        assert shapes[9] == (1, 1, 256)
        assert shapes[10] == (1, 1, 10)
        scales = [l.weight_scale for l in spec.layers if l.weight_scale != 1]
        assert scales == [10000, 4095, 10000, 1023, 63]
        pools = [l for l in spec.layers if l.kind is o.LayerKind.POOL]
        assert all(l.extent == 2 and l.stride == (2, 2) for l in pools)


class TestLayers:
    def test_identity_1x1_conv(self, rng):
        layer = o.conv_layer("id", 1, (1, 1), (1, 1), padded=False, weight_scale=15)
        x = rng.integers(-9, 10, (4, 4, 1))
        w = np.full((1, 1, 1, 1), 15, dtype=np.int64)
        out = o.conv2d(x, layer, w)
        assert np.array_equal(out, x * 15)

    def test_conv_matches_naive_oracle(self, rng):
        for _ in range(60):
            h = int(rng.integers(4, 9))
            wdt = int(rng.integers(4, 9))
            c = int(rng.integers(1, 4))
            kh = int(rng.integers(1, min(4, h) + 1))
            kw = int(rng.integers(1, min(4, wdt) + 1))
            f = int(rng.integers(1, 5))
            stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
            padded = bool(rng.integers(0, 2)) and kh % 2 == 1 and kw % 2 == 1
            layer = o.conv_layer("c", f, (kh, kw), stride, padded, 15)
            x = rng.integers(-20, 21, (h, wdt, c))
            w = rng.integers(-15, 16, (f, kh, kw, c))
            got = o.conv2d(x, layer, w)
            want = naive_conv2d(x, w, stride, padded)
            assert np.array_equal(got.astype(object), want)

    def test_grouped_conv_matches_naive_oracle(self, rng):
        # the mnist conv2 pattern: 50 single-channel filters over 5 channels
        layer = o.conv_layer("g", 10, (3, 3), (2, 2), False, 15, groups=5)
        x = rng.integers(-9, 10, (8, 8, 5))
        w = rng.integers(-15, 16, (10, 3, 3, 1))
        got = o.conv2d(x, layer, w)
        want = naive_conv2d(x, w, (2, 2), False, groups=5)
        assert np.array_equal(got.astype(object), want)

    def test_square(self):
        x = np.array([2, -3], dtype=np.int64)
        assert np.array_equal(o.square_layer(x), np.array([4, 9]))

    def test_avg_pool_is_window_sum(self):
        layer = o.pool_layer("p", 2, 2)
        x = np.array([[1, 2], [3, 4]], dtype=np.int64).reshape(2, 2, 1)
        out = o.avg_pool(x, layer)
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 10

    def test_fc_matches_matmul(self, rng):
        layer = o.fc_layer("fc", 3, 15)
        x = rng.integers(-50, 51, (2, 2, 2))
        w = rng.integers(-15, 16, (3, 8))
        out = o.fully_connected(x, layer, w)
        assert np.array_equal(out.reshape(-1), w @ x.reshape(-1))


class TestForward:
    def test_zero_image_gives_zero_logits_class0(self, fixture_model):
        logits = o.forward(fixture_model, np.zeros((28, 28, 1), dtype=np.int64))
        assert not logits.reshape(-1).any()
        assert o.classify(logits) == 0

    def test_classify_tiebreak_lowest_index(self):
        assert o.classify(np.array([3, 7, 7, 1])) == 1
        assert o.classify(np.array([-5, -5])) == 0

    def test_forward_is_deterministic(self, fixture_model, rng):
        image = rng.integers(0, 5, (28, 28, 1))
        a = o.forward(fixture_model, image)
        b = o.forward(fixture_model, image)
        assert np.array_equal(a, b)

    def test_golden_logits_mnist_image0(self, fixture_model):
        with open(os.path.join(GOLDEN_DIR, "mnist_fixture_logits.json")) as fh:
            golden = json.load(fh)
        images, labels = datasets.load_mnist(MNIST_DIR, "test")
        assert int(labels[0]) == golden["true_label"]
        img = datasets.integerize_image(images[0], fixture_model.spec.input_scale)
        logits = o.forward(fixture_model, img).reshape(-1)
        assert [int(v) for v in logits] == golden["logits"]
        assert o.classify(logits) == golden["predicted"]

    def test_observed_max_stays_under_2pow43(self, fixture_model):
        images, _ = datasets.load_mnist(MNIST_DIR, "test")
        peak = 0
        for image in images[:50]:
            img = datasets.integerize_image(image, 4)
            seen = []
            o.forward(
                fixture_model,
                img,
                observe=lambda _, x: seen.append(int(np.abs(x).max())),
            )
            peak = max(peak, max(seen))
        assert peak < 1 << 43
        assert 2 * peak < MNIST_T


class TestCountOps:
    def test_mnist_audit_table(self):
        audit = o.count_ops(o.mnist_hcnn())
        assert audit.per_layer == [
            ("conv1", 18_000, 0),
            ("square1", 0, 720),
            ("conv2", 20_000, 0),
            ("square2", 0, 800),
            ("fc", 8_000, 0),
        ]
        assert audit.total_mult_plain == 46_000
        assert audit.total_square == 1_520

    def test_cifar_audit_table(self):
        audit = o.count_ops(o.cifar10_hcnn())
        assert audit.total_mult_plain == 6_952_332
        assert audit.total_square == 57_344
        by_name = {name: (m, s) for name, m, s in audit.per_layer}
        assert by_name["conv1"] == (589_824, 0)
        assert by_name["square1"] == (0, 32_768)
        assert by_name["pool1"] == (0, 0)
        assert by_name["fc1"] == (457_398, 0)
        assert by_name["fc2"] == (2_518, 0)

    def test_single_fc_800_to_10(self):
        spec = o.NetworkSpec(
            name="toy_hcnn",
            input_shape=(4, 4, 50),
            input_scale=1,
            layers=(o.fc_layer("fc", 10, 15),),
        )
        audit = o.count_ops(spec)
        assert audit.per_layer == [("fc", 8_000, 0)]


class TestIdxReader:
    def test_mnist_test_set_shape(self):
        images, labels = datasets.load_mnist(MNIST_DIR, "test")
        assert images.shape == (10_000, 28, 28)
        assert labels.shape == (10_000,)
        assert set(np.unique(labels)) <= set(range(10))

    def test_integerization_range(self):
        images, _ = datasets.load_mnist(MNIST_DIR, "test")
        img = datasets.integerize_image(images[0], 4)
        assert img.min() >= 0 and img.max() <= 4
        assert img.shape == (28, 28, 1)

    def test_bad_magic_reports_offset(self, tmp_path):
        from hefir.errors import FormatError

        path = tmp_path / "bad"
        path.write_bytes(b"\x00" * 20)
        with pytest.raises(FormatError):
            datasets.read_idx_images(str(path))
