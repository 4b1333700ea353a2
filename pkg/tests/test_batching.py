import numpy as np
import pytest

from hefir import ring
from hefir.batching import SlotEncoder, SlotVector
from hefir.errors import EncodingError, UnsupportedParametersError
from hefir.presets import MNIST_T

from oracles import eval_poly_at, schoolbook_negacyclic


@pytest.fixture(scope="module")
def enc8():
    return SlotEncoder(17, 8)  # 17 = 1 mod 16


class TestConstruction:
    def test_rejects_bad_congruence(self):
        with pytest.raises(UnsupportedParametersError):
            SlotEncoder(13, 8)  # 13 != 1 mod 16

    def test_rejects_composite(self):
        with pytest.raises(UnsupportedParametersError):
            SlotEncoder(33, 8)

    def test_root_is_primitive(self, enc8):
        assert pow(enc8.zeta, 16, 17) == 1
        assert pow(enc8.zeta, 8, 17) == 16  # = -1


class TestEncodeDecode:
    def test_constant_vector_encodes_to_constant_poly(self, enc8):
        pt = enc8.encode(SlotVector([5] * 8, 17))
        assert pt.poly[0] == 5 and not pt.poly[1:].any()

    def test_zero_vector(self, enc8):
        pt = enc8.encode(SlotVector([0] * 8, 17))
        assert not pt.poly.any()

    def test_roundtrip_identity_and_order(self, enc8, rng):
        for _ in range(50):
            v = rng.integers(0, 17, 8)
            got = enc8.decode(enc8.encode(SlotVector(v, 17)))
            assert np.array_equal(got.values, v)

    def test_slots_are_evaluations_at_odd_root_powers(self, enc8, rng):
        # slot i of decode(p) must equal p(zeta^(2i+1)), ascending i
        v = rng.integers(0, 17, 8)
        pt = enc8.encode(SlotVector(v, 17))
        for i, alpha in enumerate(enc8.evaluation_points()):
            assert eval_poly_at(pt.poly, alpha, 17) == v[i]

    def test_length_validation(self, enc8):
        with pytest.raises(EncodingError):
            enc8.encode(SlotVector([1] * 4, 17))

    def test_value_validation(self):
        with pytest.raises(EncodingError):
            SlotVector([17], 17)


class TestHomomorphism:
    def test_products_match_root_evaluation_oracle(self, enc8, rng):
        for _ in range(50):
            v = rng.integers(0, 17, 8)
            u = rng.integers(0, 17, 8)
            pv = enc8.encode(SlotVector(v, 17))
            pu = enc8.encode(SlotVector(u, 17))
            prod = schoolbook_negacyclic(pv.poly, pu.poly, 17)
            got = enc8.decode(
                type(pv)(np.array(prod, dtype=np.int64), 17)
            ).values
            assert np.array_equal(got, (v * u) % 17)

    def test_sums_are_slotwise(self, enc8, rng):
        v = rng.integers(0, 17, 8)
        u = rng.integers(0, 17, 8)
        pv = enc8.encode(SlotVector(v, 17))
        pu = enc8.encode(SlotVector(u, 17))
        s = type(pv)((pv.poly + pu.poly) % 17, 17)
        assert np.array_equal(enc8.decode(s).values, (v + u) % 17)

    def test_large_ring_wordsized_t(self, rng):
        # int64 transform path at N=2^10, t=12289 (1 mod 2^12)
        enc = SlotEncoder(12289, 1024)
        v = rng.integers(0, 12289, 1024)
        u = rng.integers(0, 12289, 1024)
        pv = enc.encode(SlotVector(v, 12289))
        pu = enc.encode(SlotVector(u, 12289))
        prod = ring.kronecker_negacyclic(
            ring.BigPoly.from_ints(pv.poly), ring.BigPoly.from_ints(pu.poly), 64
        )
        reduced = np.array([int(c) % 12289 for c in prod.coeffs], dtype=np.int64)
        got = enc.decode(type(pv)(reduced, 12289)).values
        assert np.array_equal(got, (v * u) % 12289)

    def test_large_ring_big_t(self, rng):
        # object-dtype transform path: the 43-bit published modulus at N=2^12
        n, t = 4096, MNIST_T
        enc = SlotEncoder(t, n)
        v = rng.integers(0, t, n)
        u = rng.integers(0, t, n)
        pv = enc.encode(SlotVector(v, t))
        pu = enc.encode(SlotVector(u, t))
        assert np.array_equal(enc.decode(pv).values, v)
        prod = ring.kronecker_negacyclic(
            ring.BigPoly.from_ints(pv.poly), ring.BigPoly.from_ints(pu.poly), 100
        )
        reduced = np.empty(n, dtype=np.int64)
        for i, c in enumerate(prod.coeffs):
            reduced[i] = int(c) % t
        got = enc.decode(type(pv)(reduced, t)).values
        want = (v.astype(object) * u.astype(object)) % t
        assert np.array_equal(got.astype(object), want)
