import json
import math

import numpy as np
import pytest

from hefir import bfv, presets
from hefir.errors import UnsupportedParametersError
from hefir.ntt import is_probable_prime


class TestTable:
    def test_set1_row(self):
        p = presets.load_preset("1")
        assert p.ring_degree == 8192
        assert p.plaintext_moduli == (5522259017729,)
        assert p.log_q == 330
        assert p.depth == 4
        assert p.security_bits == 82

    def test_set3_row(self):
        p = presets.load_preset("3")
        assert p.ring_degree == 16384
        assert p.plaintext_moduli == (5522259017729,)
        assert p.depth == 4
        assert p.security_bits == 175

    def test_set5_row(self):
        p = presets.load_preset("5")
        assert p.ring_degree == 8192
        assert p.log_q == 300
        assert p.depth == 7
        assert p.security_bits == 91
        assert p.plaintext_moduli[0] == 2424833
        assert len(p.plaintext_moduli) == 10

    def test_toy_row(self):
        p = presets.load_preset("toy")
        assert p.ring_degree == 4096
        assert p.log_q == 180
        assert p.plaintext_moduli == (5522259017729,)
        assert p.security_class == "toy-insecure"
        assert p.security_bits == 0

    def test_unknown_preset(self):
        with pytest.raises(UnsupportedParametersError):
            presets.load_preset("nope")


class TestInvariants:
    def test_cifar_moduli_prime_and_batching_friendly(self):
        p = presets.load_preset("5")
        for t in p.plaintext_moduli:
            assert is_probable_prime(t)
            assert (t - 1) % (1 << 14) == 0  # 2N for N = 2^13

    def test_rns_product_hits_logq_within_two_bits(self):
        for pid in presets.available_presets():
            p = presets.load_preset(pid)
            bits = sum(math.log2(v) for v in p.rns_primes)
            assert abs(bits - p.log_q) <= 2

    def test_all_moduli_batching_congruent(self):
        for pid in presets.available_presets():
            p = presets.load_preset(pid)
            for t in p.plaintext_moduli:
                assert (t - 1) % (2 * p.ring_degree) == 0

    def test_loader_rejects_bad_congruence(self, tmp_path, monkeypatch):
        bad = {
            "weird": {
                "ring_degree": 8192,
                "log_q": 330,
                "plaintext_moduli": [13],  # 13 != 1 mod 2N
                "depth": 4,
            }
        }
        path = tmp_path / "presets.json"
        path.write_text(json.dumps(bad))
        monkeypatch.setenv("HEFIR_PRESET_PATH", str(path))
        with pytest.raises(UnsupportedParametersError):
            presets.load_preset("weird")

    def test_export_import_roundtrip(self, tmp_path, monkeypatch):
        path = tmp_path / "table.json"
        presets.export_presets(str(path))
        monkeypatch.setenv("HEFIR_PRESET_PATH", str(path))
        p = presets.load_preset("5")
        assert p.plaintext_moduli == presets.CIFAR_T


class TestContexts:
    @pytest.mark.parametrize("pid", ["toy", "1", "2", "3", "4", "5"])
    def test_roundtrip_smoke(self, pid, rng):
        p = presets.load_preset(pid)
        params = presets.build_context(p, 0)
        sk, pk, _ = bfv.keygen(params, rng)
        for _ in range(3):
            pt = bfv.Plaintext(
                rng.integers(0, params.t, params.ring_degree), params.t
            )
            c = bfv.encrypt(pk, pt, params, rng)
            assert np.array_equal(bfv.decrypt(sk, c, params).poly, pt.poly)

    def test_channel_index_validation(self):
        p = presets.load_preset("1")
        with pytest.raises(UnsupportedParametersError):
            presets.build_context(p, 1)

    def test_toy_supported_squaring_depth(self, toy_params, toy_keys, rng):
        # the toy set sustains one chained squaring comfortably (the second
        # is marginal, the third exhausts the budget); its declared depth
        # mirrors the published table's workload label, and the
        # network-profile validation below is what that label buys here
        sk, pk, rlk = toy_keys
        trace = bfv.squaring_probe(toy_params, sk, pk, rlk, 3, rng)
        assert trace[1] > 30
        assert trace[2] <= 2
        assert trace[3] == 0

    @pytest.mark.parametrize(
        "pid,profile",
        [
            ("toy", [("plain", 135), ("sq",), ("plain", 270)]),
            ("1", [("plain", 375), ("sq",), ("plain", 375), ("sq",), ("plain", 12000)]),
        ],
    )
    def test_workload_probe_leaves_positive_budget(self, pid, profile, rng):
        p = presets.load_preset(pid)
        params = presets.build_context(p, 0)
        sk, pk, rlk = bfv.keygen(params, rng)
        c = bfv.encrypt(pk, bfv.Plaintext.constant(1, params), params, rng)
        for step in profile:
            if step[0] == "sq":
                c = bfv.hsquare(c, rlk, params)
            else:
                c = bfv.hmult_plain(
                    c, bfv.Plaintext.constant(step[1], params), params
                )
        assert bfv.noise_budget(sk, c, params) > 0
