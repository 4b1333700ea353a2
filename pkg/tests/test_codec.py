import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hefir import codec, nn_oracle
from hefir.errors import CapacityError, CodecOverflowError, HefirError
from hefir.presets import CIFAR_T, MNIST_T


class TestScalar:
    def test_half_tie_rounds_away(self):
        assert codec.encode_scalar(0.5, 4) == 2
        assert codec.encode_scalar(-0.5, 4) == -2
        assert codec.encode_scalar(0.375, 4) == 2  # 1.5 -> 2
        assert codec.encode_scalar(-0.375, 4) == -2

    def test_zero(self):
        for delta in (1, 4, 1000):
            assert codec.encode_scalar(0.0, delta) == 0

    def test_full_brightness_pixel(self):
        # pixel 255/255 = 1.0 at the published input scale
        assert codec.encode_scalar(255 / 255, 4) == 4

    def test_roundtrip_error_bound(self, rng):
        for _ in range(10_000):
            x = float(rng.uniform(-1, 1))
            delta = int(rng.integers(1, 10_000))
            v = codec.encode_scalar(x, delta)
            assert abs(codec.decode_scalar(v, delta) - x) <= 1 / (2 * delta) + 1e-12


class TestModularLift:
    def test_examples(self):
        assert codec.to_modular(-1, 15) == 14
        assert codec.from_modular(14, 15) == -1
        assert codec.to_modular(7, 15) == 7
        assert codec.from_modular(7, 15) == 7
        assert codec.to_modular(-7, 15) == 8
        assert codec.from_modular(8, 15) == -7

    def test_overflow_rejected(self):
        with pytest.raises(CodecOverflowError):
            codec.to_modular(8, 15)
        with pytest.raises(CodecOverflowError):
            codec.to_modular(-8, 15)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(3, 10**8))
    def test_roundtrip_on_centered_range(self, t):
        for v in (-(t - 1) // 2, -1, 0, 1, t // 2 - (1 - t % 2)):
            if 2 * abs(v) < t:
                assert codec.from_modular(codec.to_modular(v, t), t) == v


class TestCrtSystem:
    def test_example_decomposition(self):
        sys15 = codec.CrtSystem([3, 5])
        assert sys15.icrt(4) == (1, 4)
        assert sys15.reconstruct((0, 4)) == 9
        assert sys15.icrt(0) == (0, 0)

    def test_exhaustive_bijection_t15(self):
        sys15 = codec.CrtSystem([3, 5])
        for m in range(15):
            assert sys15.reconstruct(sys15.icrt(m)) == m

    def test_random_bijection_cifar_system(self, rng):
        system = codec.CrtSystem(list(CIFAR_T))
        assert system.total.bit_length() == 219
        for _ in range(200):
            m = int(rng.integers(0, 2**62)) * int(rng.integers(0, 2**62))
            m %= system.total
            assert system.reconstruct(system.icrt(m)) == m

    def test_rejects_non_coprime(self):
        with pytest.raises(HefirError):
            codec.CrtSystem([6, 9])

    def test_rejects_out_of_range_residue(self):
        with pytest.raises(HefirError):
            codec.CrtSystem([3, 5]).reconstruct((3, 0))


class TestScaleTracker:
    def test_square_rule(self):
        tr = codec.ScaleTracker(t_total=MNIST_T, delta=60, lo=-50, hi=50)
        rec = tr.track_square("sq")
        assert rec.delta == 3600
        assert (rec.lo, rec.hi) == (0, 2500)

    def test_pool_rule(self):
        tr = codec.ScaleTracker(t_total=MNIST_T, delta=3, lo=-2, hi=5)
        rec = tr.track_pool("pool", extent=2)
        assert rec.delta == 12
        assert (rec.lo, rec.hi) == (-8, 20)

    def test_weighted_one_sided_sums(self):
        tr = codec.ScaleTracker(t_total=MNIST_T, delta=4, lo=0, hi=4)
        rec = tr.track_weighted("conv", [[3, -2], [1, 1]], 15, padded=False)
        # filter (3,-2): hi = 12, lo = -8; filter (1,1): hi = 8, lo = 0
        assert (rec.lo, rec.hi) == (-8, 12)
        assert rec.delta == 60

    def test_padded_taps_hull_zero(self):
        # with strictly positive inputs a padded conv can still see zeros
        tr = codec.ScaleTracker(t_total=MNIST_T, delta=1, lo=2, hi=4)
        rec = tr.track_weighted("conv", [[1, 1]], 1, padded=True)
        assert (rec.lo, rec.hi) == (0, 8)
        tr2 = codec.ScaleTracker(t_total=MNIST_T, delta=1, lo=2, hi=4)
        rec2 = tr2.track_weighted("conv", [[1, 1]], 1, padded=False)
        assert (rec2.lo, rec2.hi) == (4, 8)

    def test_capacity_error_names_layer(self):
        tr = codec.ScaleTracker(t_total=101, delta=1, lo=0, hi=10)
        with pytest.raises(CapacityError, match="blowup"):
            tr.track_weighted("blowup", [[9]], 1, padded=False)

    def test_mnist_fixture_certificate(self, fixture_model):
        tracker = nn_oracle.capacity_certificate(fixture_model, MNIST_T)
        final = tracker.records[-1]
        assert final.bound < 1 << 43
        assert 2 * final.bound < MNIST_T
        # published per-layer scale growth: 4 -> 60 -> 3600 -> 54000 -> ...
        assert [r.delta for r in tracker.records] == [
            60, 3600, 54_000, 2_916_000_000, 43_740_000_000,
        ]

    def test_cifar_architecture_certificate_with_sparse_model(self, rng):
        # a sparse CIFAR-architecture model certifies below 2^218
        spec = nn_oracle.cifar10_hcnn()
        weights = []
        shapes = [spec.input_shape] + spec.layer_shapes()
        for i, layer in enumerate(spec.layers):
            if layer.kind is nn_oracle.LayerKind.CONV:
                cg = shapes[i][2] // layer.groups
                kh, kw = layer.kernel
                arr = np.zeros((layer.filters, kh, kw, cg), dtype=np.int64)
                for fi in range(layer.filters):
                    arr[fi, kh // 2, kw // 2, int(rng.integers(0, cg))] = 157
                weights.append(arr)
            elif layer.kind is nn_oracle.LayerKind.FC:
                h, w, c = shapes[i]
                arr = np.zeros((layer.filters, h * w * c), dtype=np.int64)
                for fi in range(layer.filters):
                    arr[fi, int(rng.integers(0, h * w * c))] = 128
                weights.append(arr)
            else:
                weights.append(None)
        model = nn_oracle.QuantizedModel(spec=spec, bit_width=8, weights=weights)
        system = codec.CrtSystem(list(CIFAR_T))
        tracker = nn_oracle.capacity_certificate(model, system.total)
        assert tracker.records[-1].bound < 1 << 218

    def test_tracker_bound_dominates_observed_max(self, fixture_model, rng):
        tracker = nn_oracle.capacity_certificate(fixture_model, MNIST_T)
        bounds = {r.name: r.bound for r in tracker.records}
        for _ in range(20):
            image = rng.integers(0, 5, (28, 28, 1))
            seen = {}
            nn_oracle.forward(
                fixture_model,
                image,
                observe=lambda name, x: seen.__setitem__(
                    name, int(np.abs(np.asarray(x, dtype=np.int64)).max())
                ),
            )
            for name, observed in seen.items():
                assert observed <= bounds[name]
