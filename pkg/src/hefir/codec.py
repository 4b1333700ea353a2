"""Scalar fixed-point encoding, centered modular lifts, plaintext-CRT.

Also hosts the scale tracker: exact interval arithmetic through a network
description, producing a certified magnitude bound per layer.  The tracker
is the overflow gate: it refuses configurations whose certified bound could
reach t/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

from .errors import CapacityError, CodecOverflowError, HefirError
from .ring import crt_combine


def round_half_away(numerator: int, denominator: int) -> int:
    """round(numerator / denominator) with ties away from zero; exact."""
    if denominator <= 0:
        raise ValueError("denominator must be positive")
    if numerator >= 0:
        return (2 * numerator + denominator) // (2 * denominator)
    return -((-2 * numerator + denominator) // (2 * denominator))


def encode_scalar(x: float, delta: int) -> int:
    """round(x * delta), half away from zero."""
    if delta < 1:
        raise ValueError("scale must be >= 1")
    scaled = x * delta
    if scaled >= 0:
        return int(scaled + 0.5)
    return -int(-scaled + 0.5)


def decode_scalar(v: int, delta: int) -> float:
    return v / delta


def to_modular(v: int, t: int) -> int:
    """Centered representative convention: negative v maps to t - |v|."""
    if 2 * abs(v) >= t:
        raise CodecOverflowError(f"|{v}| >= {t}/2 does not fit Z_{t}")
    return v % t


def from_modular(u: int, t: int) -> int:
    u = u % t
    return u if u <= t // 2 else u - t


class CrtSystem:
    """Pairwise-coprime plaintext moduli with reconstruction constants."""

    def __init__(self, moduli):
        moduli = [int(m) for m in moduli]
        if len(moduli) < 1:
            raise HefirError("need at least one modulus")
        for i in range(len(moduli)):
            for j in range(i + 1, len(moduli)):
                if gcd(moduli[i], moduli[j]) != 1:
                    raise HefirError(
                        f"moduli {moduli[i]} and {moduli[j]} are not coprime"
                    )
        self.moduli = tuple(moduli)
        self.total = 1
        for m in moduli:
            self.total *= m
        # reconstruction: sum r_i * M_i * inv(M_i mod t_i) mod T
        self.cofactors = [self.total // m for m in moduli]
        self.inverses = [pow(c % m, -1, m) for c, m in zip(self.cofactors, moduli)]

    def icrt(self, value: int) -> tuple:
        if not 0 <= value < self.total:
            raise HefirError(f"value {value} outside [0, {self.total})")
        return tuple(value % m for m in self.moduli)

    def reconstruct(self, residues) -> int:
        residues = list(residues)
        if len(residues) != len(self.moduli):
            raise HefirError("residue count != modulus count")
        for r, m in zip(residues, self.moduli):
            if not 0 <= r < m:
                raise HefirError(f"residue {r} outside [0, {m})")
        return crt_combine(residues, self.moduli)

    def reconstruct_centered(self, residues) -> int:
        return from_modular(self.reconstruct(residues), self.total)


# ---------------------------------------------------------------------------
# scale tracking


@dataclass
class LayerRecord:
    name: str
    delta: int
    lo: int  # certified value range, inclusive
    hi: int

    @property
    def bound(self) -> int:
        return max(abs(self.lo), abs(self.hi))


@dataclass
class ScaleTracker:
    """Tracks the scale factor and a certified value interval layer by layer.

    Weighted layers fold actual weight magnitudes (exact interval arithmetic,
    one-sided sums); padded convolutions hull each tap's contribution with
    zero, since border placements drop taps.  Rejects any layer whose bound
    could reach t_total/2.
    """

    t_total: int
    delta: int
    lo: int
    hi: int
    records: list = field(default_factory=list)

    @staticmethod
    def for_input(t_total: int, input_scale: int, max_value: float = 1.0):
        hi = encode_scalar(max_value, input_scale)
        return ScaleTracker(t_total=t_total, delta=input_scale, lo=0, hi=hi)

    def _push(self, name: str):
        rec = LayerRecord(name, self.delta, self.lo, self.hi)
        self.records.append(rec)
        if 2 * rec.bound >= self.t_total:
            raise CapacityError(
                f"layer '{name}': certified bound {rec.bound} reaches "
                f"t/2 = {self.t_total // 2}"
            )
        return rec

    def track_weighted(self, name: str, filter_weights, weight_scale: int, padded: bool):
        """filter_weights: iterable of per-output-unit integer weight lists."""
        worst_hi = None
        worst_lo = None
        for weights in filter_weights:
            hi = 0
            lo = 0
            for w in weights:
                w = int(w)
                terms = (w * self.lo, w * self.hi)
                t_hi = max(terms)
                t_lo = min(terms)
                if padded:
                    t_hi = max(t_hi, 0)
                    t_lo = min(t_lo, 0)
                hi += t_hi
                lo += t_lo
            worst_hi = hi if worst_hi is None else max(worst_hi, hi)
            worst_lo = lo if worst_lo is None else min(worst_lo, lo)
        self.lo, self.hi = worst_lo, worst_hi
        self.delta *= weight_scale
        return self._push(name)

    def track_square(self, name: str):
        straddles_zero = self.lo <= 0 <= self.hi
        cands = (self.lo * self.lo, self.hi * self.hi)
        self.hi = max(cands)
        self.lo = 0 if straddles_zero else min(cands)
        self.delta *= self.delta
        return self._push(name)

    def track_pool(self, name: str, extent: int):
        window = extent * extent
        self.lo *= window
        self.hi *= window
        self.delta *= window
        return self._push(name)

    def bound_bits(self) -> int:
        return max(abs(self.lo), abs(self.hi)).bit_length()
