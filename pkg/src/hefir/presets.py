"""The published parameter sets as loadable presets, plus an insecure toy set.

log q targets are met with a ladder of ~30-bit primes, all 1 mod 2^15 so a
single prime pool serves every ring degree up to 2^14.  The security figure
is carried from the published table as metadata; it is not re-derived here.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .bfv import BfvParams
from .errors import UnsupportedParametersError
from .ntt import is_probable_prime
from .ring import RnsContext

# 30-bit primes, 1 mod 2^15, descending from 2^30
RNS_PRIME_POOL = (
    1073643521, 1073479681, 1073184769, 1073053697, 1072857089, 1072496641,
    1071513601, 1071415297, 1071087617, 1070727169, 1070432257, 1069219841,
)

MNIST_T = 5522259017729
CIFAR_T = (
    2424833, 2654209, 2752513, 3604481, 3735553,
    4423681, 4620289, 4816897, 4882433, 5308417,
)


@dataclass(frozen=True)
class Preset:
    id: str
    ring_degree: int
    log_q: int
    plaintext_moduli: tuple
    depth: int
    security_bits: int  # published estimate; 0 marks the insecure toy set
    security_class: str  # "paper" or "toy-insecure"
    rns_primes: tuple

    @property
    def channels(self) -> int:
        return len(self.plaintext_moduli)


def _preset(pid, n, log_q, moduli, depth, lam, sec_class="paper"):
    count = round(log_q / 30)
    return Preset(
        id=pid,
        ring_degree=n,
        log_q=log_q,
        plaintext_moduli=tuple(moduli),
        depth=depth,
        security_bits=lam,
        security_class=sec_class,
        rns_primes=RNS_PRIME_POOL[:count],
    )


_BUILTIN = {
    "toy": _preset("toy", 1 << 12, 180, [MNIST_T], 4, 0, "toy-insecure"),
    "1": _preset("1", 1 << 13, 330, [MNIST_T], 4, 82),
    "2": _preset("2", 1 << 13, 360, [MNIST_T], 5, 76),
    "3": _preset("3", 1 << 14, 330, [MNIST_T], 4, 175),
    "4": _preset("4", 1 << 14, 360, [MNIST_T], 5, 159),
    "5": _preset("5", 1 << 13, 300, CIFAR_T, 7, 91),
}


def _validate(preset: Preset) -> Preset:
    two_n = 2 * preset.ring_degree
    for t in preset.plaintext_moduli:
        if not is_probable_prime(t):
            raise UnsupportedParametersError(f"preset {preset.id}: t={t} not prime")
        if (t - 1) % two_n != 0:
            raise UnsupportedParametersError(
                f"preset {preset.id}: 2N={two_n} does not divide t-1 (t={t})"
            )
    import math

    bits = sum(math.log2(p) for p in preset.rns_primes)
    if abs(bits - preset.log_q) > 2:
        raise UnsupportedParametersError(
            f"preset {preset.id}: RNS product {bits:.1f} bits misses log q={preset.log_q}"
        )
    return preset


def available_presets() -> list:
    return sorted(_load_table().keys())


def _load_table() -> dict:
    path = os.environ.get("HEFIR_PRESET_PATH")
    if not path:
        return _BUILTIN
    with open(path) as fh:
        raw = json.load(fh)
    table = {}
    for pid, entry in raw.items():
        table[pid] = Preset(
            id=pid,
            ring_degree=entry["ring_degree"],
            log_q=entry["log_q"],
            plaintext_moduli=tuple(entry["plaintext_moduli"]),
            depth=entry["depth"],
            security_bits=entry.get("security_bits", 0),
            security_class=entry.get("security_class", "paper"),
            rns_primes=tuple(entry.get("rns_primes") or RNS_PRIME_POOL[: round(entry["log_q"] / 30)]),
        )
    return table


def load_preset(preset_id: str) -> Preset:
    table = _load_table()
    if str(preset_id) not in table:
        raise UnsupportedParametersError(
            f"unknown preset '{preset_id}' (have: {', '.join(sorted(table))})"
        )
    return _validate(table[str(preset_id)])


def export_presets(path: str):
    """Write the active preset table as a structured text file."""
    table = {}
    for pid, p in _load_table().items():
        table[pid] = {
            "ring_degree": p.ring_degree,
            "log_q": p.log_q,
            "plaintext_moduli": list(p.plaintext_moduli),
            "depth": p.depth,
            "security_bits": p.security_bits,
            "security_class": p.security_class,
            "rns_primes": list(p.rns_primes),
        }
    with open(path, "w") as fh:
        json.dump(table, fh, indent=2)


_CONTEXT_CACHE: dict = {}


def build_context(preset: Preset, t_index: int = 0, relin_base: int = 1 << 16) -> BfvParams:
    """BfvParams for one plaintext channel of the preset."""
    if not 0 <= t_index < preset.channels:
        raise UnsupportedParametersError(
            f"channel {t_index} out of range for preset {preset.id}"
        )
    key = (preset.ring_degree, preset.rns_primes)
    ctx = _CONTEXT_CACHE.get(key)
    if ctx is None:
        ctx = RnsContext(preset.ring_degree, list(preset.rns_primes))
        _CONTEXT_CACHE[key] = ctx
    return BfvParams(
        ctx,
        preset.plaintext_moduli[t_index],
        relin_base=relin_base,
        depth=preset.depth,
        security_bits=preset.security_bits,
    )
