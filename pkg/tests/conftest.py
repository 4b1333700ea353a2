import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hefir import bfv, presets, ring

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURE_MODEL = os.path.join(REPO, "data", "models", "mnist_fixture_4bit.json")
GOLDEN_DIR = os.path.join(REPO, "tests", "golden")
MNIST_DIR = os.path.join(REPO, "data", "mnist")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture(scope="session")
def tiny_ctx():
    # N=8, two NTT-friendly primes (both 1 mod 16)
    return ring.RnsContext(8, [17, 97])


@pytest.fixture(scope="session")
def small_params():
    # N=64, t=257 (257 = 1 mod 128): fast and batching-capable
    ctx = ring.RnsContext(64, list(presets.RNS_PRIME_POOL[:4]))
    return bfv.BfvParams(ctx, 257)


@pytest.fixture(scope="session")
def small_keys(small_params):
    return bfv.keygen(small_params, np.random.default_rng(101))


@pytest.fixture(scope="session")
def fixture_model():
    from hefir import serial

    with open(FIXTURE_MODEL) as fh:
        return serial.load_model(fh.read())


@pytest.fixture(scope="session")
def toy_params():
    return presets.build_context(presets.load_preset("toy"))


@pytest.fixture(scope="session")
def toy_keys(toy_params):
    return bfv.keygen(toy_params, np.random.default_rng(77))
