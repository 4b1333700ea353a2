"""SIMD slot encoding: length-N vectors over Z_t <-> plaintext polynomials.

For prime t = 1 (mod 2N), X^N+1 splits into N linear factors mod t and a
plaintext polynomial is determined by its values at the N odd powers of a
primitive 2N-th root zeta.  Slot i holds the evaluation at zeta^(2i+1), in
ascending i, so HAdd and HMult act slot-wise.
"""

from __future__ import annotations

import numpy as np

from . import ntt as _ntt
from .bfv import Plaintext
from .errors import EncodingError, UnsupportedParametersError

# largest t whose products stay inside int64 during the transform
_I64_LIMIT = 3_000_000_000


class SlotVector:
    """Length-N vector over Z_t."""

    __slots__ = ("values", "t")

    def __init__(self, values, t: int):
        values = np.asarray(values, dtype=np.int64)
        if (values < 0).any() or (values >= t).any():
            raise EncodingError("slot value outside [0, t)")
        self.values = values
        self.t = t

    def __eq__(self, other):
        return (
            isinstance(other, SlotVector)
            and self.t == other.t
            and np.array_equal(self.values, other.values)
        )


class SlotEncoder:
    """Forward/inverse evaluation transform over Z_t for a fixed ring degree."""

    def __init__(self, t: int, ring_degree: int):
        if not _ntt.is_probable_prime(t):
            raise UnsupportedParametersError(f"t={t} is not prime")
        if (t - 1) % (2 * ring_degree) != 0:
            raise UnsupportedParametersError(
                f"2N={2 * ring_degree} does not divide t-1={t - 1}"
            )
        self.t = t
        self.n = ring_degree
        plan = _ntt.NttPlan(t, ring_degree)
        self.zeta = plan.psi
        self.slot_points = None  # filled lazily; N values zeta^(2i+1)
        self._rev = _ntt.bit_reverse_indices(ring_degree)
        if t <= _I64_LIMIT:
            self._dtype = np.int64
            conv = lambda xs: np.array(xs, dtype=np.int64)
            self._mods = np.array([t], dtype=np.int64)
        else:
            self._dtype = object
            conv = lambda xs: np.array([int(x) for x in xs], dtype=object)
            self._mods = np.array([t], dtype=object)
        self._tw = conv(plan.tw).reshape(1, ring_degree)
        self._itw = conv(plan.itw).reshape(1, ring_degree)
        self._psi = conv(plan.psi_pows).reshape(1, ring_degree)
        self._ipsi = conv(plan.ipsi_pows).reshape(1, ring_degree)

    def evaluation_points(self) -> list:
        """The alpha_i in slot order: odd powers of zeta, ascending."""
        if self.slot_points is None:
            self.slot_points = [
                pow(self.zeta, 2 * i + 1, self.t) for i in range(self.n)
            ]
        return self.slot_points

    def encode(self, v: SlotVector | np.ndarray) -> Plaintext:
        values = v.values if isinstance(v, SlotVector) else np.asarray(v)
        if values.shape != (self.n,):
            raise EncodingError("slot vector length != N")
        a = values.astype(self._dtype).reshape(1, self.n).copy()
        if self._dtype == object:
            a %= self.t
        _ntt.transform_rows(a, self._mods, self._itw, self._rev)
        a = (a * self._ipsi) % self.t
        return Plaintext(a.reshape(self.n).astype(np.int64), self.t)

    def decode(self, pt: Plaintext) -> SlotVector:
        if pt.t != self.t or pt.poly.shape != (self.n,):
            raise EncodingError("plaintext does not match encoder parameters")
        a = pt.poly.astype(self._dtype).reshape(1, self.n).copy()
        a = (a * self._psi) % self.t
        _ntt.transform_rows(a, self._mods, self._tw, self._rev)
        return SlotVector(a.reshape(self.n).astype(np.int64), self.t)


def encode_slots(encoder: SlotEncoder, v) -> Plaintext:
    return encoder.encode(v)


def decode_slots(encoder: SlotEncoder, pt: Plaintext) -> SlotVector:
    return encoder.decode(pt)
