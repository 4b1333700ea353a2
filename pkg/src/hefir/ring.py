"""Exact negacyclic polynomial arithmetic over a product of word-sized primes.

Elements of Z_q[X]/(X^N+1) are held in residue form: one int64 coefficient
row per prime factor of q.  Every prime is NTT-friendly (p = 1 mod 2N) and
below 2^30, so products of residues stay inside int64.  Multiprecision work
(CRT lifting, exact scale-and-round) goes through BigPoly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from math import prod

import gmpy2
import numpy as np

from . import ntt as _ntt
from .errors import DomainError, ParameterMismatchError

NOISE_SIGMA = 3.2
NOISE_BOUND = 19  # +-6 sigma, values outside are resampled


class Domain(Enum):
    COEFF = "coefficient"
    NTT = "ntt"


@dataclass(frozen=True)
class PrimeModulus:
    """One RNS channel: an odd prime with its transform tables."""

    value: int
    n_root: int  # primitive 2N-th root of unity
    plan: _ntt.NttPlan

    @staticmethod
    def create(value: int, ring_degree: int) -> "PrimeModulus":
        if not _ntt.is_probable_prime(value):
            raise ValueError(f"{value} is not prime")
        if value % (2 * ring_degree) != 1:
            raise ValueError(f"{value} is not 1 mod 2N")
        if value.bit_length() > 62:
            raise ValueError("prime too large for residue arithmetic")
        plan = _ntt.NttPlan(value, ring_degree)
        return PrimeModulus(value=value, n_root=plan.psi, plan=plan)


class RnsContext:
    """Immutable bundle of ring degree, primes, and packed transform tables."""

    def __init__(self, ring_degree: int, primes: list[int]):
        if ring_degree < 4 or ring_degree & (ring_degree - 1):
            raise ValueError("ring degree must be a power of two >= 4")
        if len(set(primes)) != len(primes):
            raise ValueError("primes must be pairwise distinct")
        self.ring_degree = ring_degree
        self.primes = tuple(PrimeModulus.create(p, ring_degree) for p in primes)
        self.prime_values = np.array(primes, dtype=np.int64)
        self.q_big = prod(primes)

        n = ring_degree
        r = len(primes)
        self.rev = _ntt.bit_reverse_indices(n)
        self.tw = np.array([pm.plan.tw for pm in self.primes], dtype=np.int64)
        self.itw = np.array([pm.plan.itw for pm in self.primes], dtype=np.int64)
        self.psi_pows = np.array([pm.plan.psi_pows for pm in self.primes], dtype=np.int64)
        self.ipsi_pows = np.array([pm.plan.ipsi_pows for pm in self.primes], dtype=np.int64)
        self._modcol = self.prime_values.reshape(r, 1)

        # CRT reconstruction weights: lift(res) = sum res_i * C_i mod q
        self.crt_weights = []
        for p in primes:
            big = self.q_big // p
            self.crt_weights.append(big * pow(big % p, p - 2, p) % self.q_big)

        h = hashlib.sha256()
        h.update(ring_degree.to_bytes(8, "little"))
        for p in primes:
            h.update(p.to_bytes(8, "little"))
        self.fingerprint = h.hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, RnsContext) and self.fingerprint == other.fingerprint

    def __hash__(self):
        return hash(self.fingerprint)

    def reduce_scalar(self, value: int) -> np.ndarray:
        """Column vector of value mod p_i, for broadcasting into residue rows."""
        return np.array(
            [value % pm.value for pm in self.primes], dtype=np.int64
        ).reshape(len(self.primes), 1)


class RingElem:
    """Residue-form element of Z_q[X]/(X^N+1)."""

    __slots__ = ("ctx", "residues", "domain")

    def __init__(self, ctx: RnsContext, residues: np.ndarray, domain: Domain):
        self.ctx = ctx
        self.residues = residues
        self.domain = domain

    def copy(self) -> "RingElem":
        return RingElem(self.ctx, self.residues.copy(), self.domain)

    def __repr__(self):
        return f"RingElem(N={self.ctx.ring_degree}, primes={len(self.ctx.primes)}, {self.domain.value})"


def _check_pair(a: RingElem, b: RingElem, same_domain=True):
    if a.ctx != b.ctx:
        raise ParameterMismatchError("ring elements from different contexts")
    if same_domain and a.domain != b.domain:
        raise DomainError(f"domain mismatch: {a.domain.value} vs {b.domain.value}")


def zero_elem(ctx: RnsContext, domain: Domain = Domain.COEFF) -> RingElem:
    shape = (len(ctx.primes), ctx.ring_degree)
    return RingElem(ctx, np.zeros(shape, dtype=np.int64), domain)


def from_int_coeffs(ctx: RnsContext, coeffs) -> RingElem:
    """Embed integer coefficients (any sign, any size) into all residue rows."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (ctx.ring_degree,):
        raise ValueError("coefficient array must have length N")
    rows = []
    if coeffs.dtype == object:
        for pm in ctx.primes:
            rows.append((coeffs % pm.value).astype(np.int64))
    else:
        c = coeffs.astype(np.int64)
        for pm in ctx.primes:
            rows.append(c % pm.value)
    return RingElem(ctx, np.stack(rows), Domain.COEFF)


# ---------------------------------------------------------------------------
# transforms


def ntt_forward(e: RingElem) -> RingElem:
    if e.domain is not Domain.COEFF:
        raise DomainError("ntt_forward expects a coefficient-domain element")
    ctx = e.ctx
    a = (e.residues * ctx.psi_pows) % ctx._modcol
    _ntt.transform_rows(a, ctx.prime_values, ctx.tw, ctx.rev)
    return RingElem(ctx, a, Domain.NTT)


def ntt_inverse(e: RingElem) -> RingElem:
    if e.domain is not Domain.NTT:
        raise DomainError("ntt_inverse expects an NTT-domain element")
    ctx = e.ctx
    a = e.residues.copy()
    _ntt.transform_rows(a, ctx.prime_values, ctx.itw, ctx.rev)
    a = (a * ctx.ipsi_pows) % ctx._modcol
    return RingElem(ctx, a, Domain.COEFF)


# ---------------------------------------------------------------------------
# arithmetic


def poly_add(a: RingElem, b: RingElem) -> RingElem:
    _check_pair(a, b)
    return RingElem(a.ctx, (a.residues + b.residues) % a.ctx._modcol, a.domain)


def poly_sub(a: RingElem, b: RingElem) -> RingElem:
    _check_pair(a, b)
    return RingElem(a.ctx, (a.residues - b.residues) % a.ctx._modcol, a.domain)


def poly_neg(a: RingElem) -> RingElem:
    return RingElem(a.ctx, (-a.residues) % a.ctx._modcol, a.domain)


def poly_mul(a: RingElem, b: RingElem) -> RingElem:
    """Negacyclic product; transforms through the NTT domain as needed."""
    _check_pair(a, b)
    if a.domain is Domain.NTT:
        return RingElem(a.ctx, (a.residues * b.residues) % a.ctx._modcol, Domain.NTT)
    fa, fb = ntt_forward(a), ntt_forward(b)
    return ntt_inverse(poly_mul(fa, fb))


def poly_mul_scalar(a: RingElem, scalar: int) -> RingElem:
    """Multiply by an integer scalar (reduced per prime); domain preserved."""
    col = a.ctx.reduce_scalar(scalar)
    return RingElem(a.ctx, (a.residues * col) % a.ctx._modcol, a.domain)


def accumulate_scaled(acc: RingElem | None, elem: RingElem, scalar: int) -> RingElem:
    """acc += scalar * elem, allocating only when acc is None."""
    if acc is None:
        return poly_mul_scalar(elem, scalar)
    _check_pair(acc, elem)
    col = elem.ctx.reduce_scalar(scalar)
    acc.residues += (elem.residues * col) % elem.ctx._modcol
    acc.residues %= elem.ctx._modcol
    return acc


# ---------------------------------------------------------------------------
# sampling


def _embed_small(ctx: RnsContext, values: np.ndarray, domain=Domain.COEFF) -> RingElem:
    rows = values[None, :] % ctx._modcol
    return RingElem(ctx, rows, domain)


def sample_uniform(ctx: RnsContext, rng: np.random.Generator) -> RingElem:
    """Uniform element of R_q: independent uniform residues are exactly
    uniform mod q by the CRT bijection."""
    rows = [
        rng.integers(0, pm.value, ctx.ring_degree, dtype=np.int64) for pm in ctx.primes
    ]
    return RingElem(ctx, np.stack(rows), Domain.COEFF)


def sample_binary(ctx: RnsContext, rng: np.random.Generator) -> RingElem:
    bits = rng.integers(0, 2, ctx.ring_degree, dtype=np.int64)
    return _embed_small(ctx, bits)


def small_gaussian(rng: np.random.Generator, n: int) -> np.ndarray:
    """Rounded centered Gaussian, sigma 3.2, resampled outside +-6 sigma."""
    out = np.rint(rng.normal(0.0, NOISE_SIGMA, n)).astype(np.int64)
    bad = np.abs(out) > NOISE_BOUND
    while bad.any():
        out[bad] = np.rint(rng.normal(0.0, NOISE_SIGMA, int(bad.sum()))).astype(np.int64)
        bad = np.abs(out) > NOISE_BOUND
    return out


def sample_noise(ctx: RnsContext, rng: np.random.Generator) -> RingElem:
    return _embed_small(ctx, small_gaussian(rng, ctx.ring_degree))


# ---------------------------------------------------------------------------
# CRT lifting and multiprecision polynomials


class BigPoly:
    """Length-N array of Python integers; the exact-arithmetic carrier."""

    __slots__ = ("n", "coeffs")

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = coeffs  # dtype=object
        self.n = len(coeffs)

    @staticmethod
    def from_ints(values) -> "BigPoly":
        arr = np.empty(len(values), dtype=object)
        arr[:] = [int(v) for v in values]
        return BigPoly(arr)

    def centered(self, modulus: int) -> "BigPoly":
        half = modulus // 2
        arr = self.coeffs % modulus
        arr = np.where(arr > half, arr - modulus, arr)
        return BigPoly(arr)

    def max_abs(self) -> int:
        return max((abs(int(c)) for c in self.coeffs), default=0)


def crt_combine(residues, moduli) -> int:
    """Unique integer in [0, prod moduli) with the given residues."""
    total = prod(int(m) for m in moduli)
    acc = 0
    for r, m in zip(residues, moduli):
        big = total // m
        acc += int(r) * big * pow(big % m, -1, m)
    return acc % total


def crt_lift(e: RingElem) -> BigPoly:
    """Reconstruct each coefficient in [0, q) from its residues."""
    if e.domain is not Domain.COEFF:
        raise DomainError("crt_lift expects a coefficient-domain element")
    ctx = e.ctx
    acc = np.zeros(ctx.ring_degree, dtype=object)
    for row, weight in zip(e.residues, ctx.crt_weights):
        acc += row.astype(object) * weight
    acc %= ctx.q_big
    return BigPoly(acc)


def crt_reduce(p: BigPoly, ctx: RnsContext) -> RingElem:
    if p.n != ctx.ring_degree:
        raise ParameterMismatchError("BigPoly length != ring degree")
    rows = [(p.coeffs % pm.value).astype(np.int64) for pm in ctx.primes]
    return RingElem(ctx, np.stack(rows), Domain.COEFF)


def kronecker_negacyclic(a: BigPoly, b: BigPoly, slot_bits: int) -> BigPoly:
    """Exact product in Z[X]/(X^N+1) by packing into single big integers.

    Inputs must be nonnegative and slot_bits must exceed the bit length of
    any coefficient of the full 2N-term product, so slots never carry.
    """
    n = a.n
    slot_bytes = (slot_bits + 7) // 8
    buf_a = bytearray(n * slot_bytes)
    buf_b = bytearray(n * slot_bytes)
    for i in range(n):
        ca = int(a.coeffs[i])
        cb = int(b.coeffs[i])
        buf_a[i * slot_bytes : i * slot_bytes + (ca.bit_length() + 7) // 8] = ca.to_bytes(
            (ca.bit_length() + 7) // 8, "little"
        )
        buf_b[i * slot_bytes : i * slot_bytes + (cb.bit_length() + 7) // 8] = cb.to_bytes(
            (cb.bit_length() + 7) // 8, "little"
        )
    za = gmpy2.mpz(int.from_bytes(bytes(buf_a), "little"))
    zb = gmpy2.mpz(int.from_bytes(bytes(buf_b), "little"))
    prod_bytes = int(za * zb).to_bytes(2 * n * slot_bytes, "little")
    out = np.empty(n, dtype=object)
    for i in range(n):
        lo = int.from_bytes(prod_bytes[i * slot_bytes : (i + 1) * slot_bytes], "little")
        hi_index = i + n
        hi = int.from_bytes(
            prod_bytes[hi_index * slot_bytes : (hi_index + 1) * slot_bytes], "little"
        )
        out[i] = lo - hi
    return BigPoly(out)
