"""Levelled BFV: key generation, encryption, homomorphic ops, noise budget.

Scale-and-round steps (decryption and the multiplication tensor) are exact:
ciphertext parts are CRT-lifted to multiprecision integers, the tensor is a
true integer negacyclic product (Kronecker packing), and t/q rounding is
half-away-from-zero on exact rationals.  No RNS approximation is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ntt as _ntt
from . import ring
from .errors import (
    EncodingError,
    MissingKeyError,
    ParameterMismatchError,
)
from .ring import (
    BigPoly,
    Domain,
    RingElem,
    RnsContext,
    crt_lift,
    crt_reduce,
    kronecker_negacyclic,
    ntt_forward,
    ntt_inverse,
    poly_add,
    poly_mul,
    poly_mul_scalar,
    poly_sub,
    sample_binary,
    sample_noise,
    sample_uniform,
    zero_elem,
)

_SUPPORTED_RELIN_BASES = {1 << 8, 1 << 16, 1 << 32}


class BfvParams:
    """Ring context plus plaintext modulus, relinearization base, metadata."""

    def __init__(
        self,
        ctx: RnsContext,
        plaintext_modulus: int,
        relin_base: int = 1 << 16,
        depth: int = 0,
        security_bits: int = 0,
    ):
        if plaintext_modulus < 2:
            raise ParameterMismatchError("plaintext modulus must be >= 2")
        if plaintext_modulus >= ctx.q_big:
            raise ParameterMismatchError("plaintext modulus must be below q")
        if relin_base not in _SUPPORTED_RELIN_BASES:
            raise ParameterMismatchError("relin base must be 2^8, 2^16 or 2^32")
        self.ctx = ctx
        self.t = plaintext_modulus
        self.w = relin_base
        self.depth = depth
        self.security_bits = security_bits

        q = ctx.q_big
        self.q_bits = q.bit_length()
        # l = floor(log_w q)
        l = 0
        acc = relin_base
        while acc <= q:
            acc *= relin_base
            l += 1
        self.l = l
        self.delta = q // plaintext_modulus
        self.delta_col = ctx.reduce_scalar(self.delta)
        # slot width for the exact integer tensor: fits N * (q-1)^2
        self.tensor_slot_bits = 2 * self.q_bits + ctx.ring_degree.bit_length() + 1
        self.fingerprint = f"{ctx.fingerprint}:t{plaintext_modulus}:w{relin_base}"

    @property
    def ring_degree(self) -> int:
        return self.ctx.ring_degree

    def __eq__(self, other):
        return isinstance(other, BfvParams) and self.fingerprint == other.fingerprint

    def __hash__(self):
        return hash(self.fingerprint)


@dataclass
class Plaintext:
    """Polynomial with coefficients in [0, t)."""

    poly: np.ndarray  # int64, shape (N,)
    t: int

    def __post_init__(self):
        self.poly = np.asarray(self.poly, dtype=np.int64)

    @staticmethod
    def constant(value: int, params: BfvParams) -> "Plaintext":
        poly = np.zeros(params.ring_degree, dtype=np.int64)
        poly[0] = value % params.t
        return Plaintext(poly, params.t)

    def centered(self) -> np.ndarray:
        half = self.t // 2
        return np.where(self.poly > half, self.poly - self.t, self.poly)


@dataclass
class SecretKey:
    s_bits: np.ndarray  # binary coefficients, shape (N,)
    s_ntt: RingElem
    s2_ntt: RingElem


@dataclass
class PublicKey:
    b_ntt: RingElem
    a_ntt: RingElem
    fingerprint: str


@dataclass
class RelinKey:
    components: list  # (k0_ntt, k1_ntt) pairs, length l+1
    base: int
    fingerprint: str


@dataclass
class Ciphertext:
    parts: tuple  # 2 or 3 coefficient-domain RingElems
    fingerprint: str
    is_fresh: bool = False

    def __len__(self):
        return len(self.parts)


def _check_params(params: BfvParams, obj_fingerprint: str):
    if params.fingerprint != obj_fingerprint:
        raise ParameterMismatchError("object does not match parameter set")


def validate_plaintext(params: BfvParams, pt: Plaintext):
    if pt.t != params.t:
        raise ParameterMismatchError("plaintext modulus mismatch")
    if pt.poly.shape != (params.ring_degree,):
        raise EncodingError("plaintext length != ring degree")
    if (pt.poly < 0).any() or (pt.poly >= params.t).any():
        raise EncodingError("plaintext coefficient outside [0, t)")


# ---------------------------------------------------------------------------
# key generation


def keygen(params: BfvParams, rng: np.random.Generator):
    ctx = params.ctx
    s_coeff = sample_binary(ctx, rng)
    s_bits = s_coeff.residues[0].copy()
    s_ntt = ntt_forward(s_coeff)
    s2_ntt = poly_mul(s_ntt, s_ntt)
    sk = SecretKey(s_bits=s_bits, s_ntt=s_ntt, s2_ntt=s2_ntt)

    a = _uniform_ntt(ctx, rng)
    e = ntt_forward(sample_noise(ctx, rng))
    b = poly_sub(e, poly_mul(a, s_ntt))
    pk = PublicKey(b_ntt=b, a_ntt=a, fingerprint=params.fingerprint)

    components = []
    w_pow = 1
    for _ in range(params.l + 1):
        a_i = _uniform_ntt(ctx, rng)
        e_i = ntt_forward(sample_noise(ctx, rng))
        k0 = poly_sub(
            poly_mul_scalar(s2_ntt, w_pow), poly_add(poly_mul(a_i, s_ntt), e_i)
        )
        components.append((k0, a_i))
        w_pow *= params.w
    rlk = RelinKey(components=components, base=params.w, fingerprint=params.fingerprint)
    return sk, pk, rlk


def _uniform_ntt(ctx: RnsContext, rng: np.random.Generator) -> RingElem:
    # a uniform element is uniform in either domain; sample directly in NTT
    elem = sample_uniform(ctx, rng)
    return RingElem(ctx, elem.residues, Domain.NTT)


# ---------------------------------------------------------------------------
# encrypt / decrypt


def encrypt(pk: PublicKey, pt: Plaintext, params: BfvParams, rng: np.random.Generator) -> Ciphertext:
    _check_params(params, pk.fingerprint)
    validate_plaintext(params, pt)
    ctx = params.ctx
    u = ntt_forward(sample_binary(ctx, rng))
    c0 = ntt_inverse(poly_mul(pk.b_ntt, u))
    c1 = ntt_inverse(poly_mul(pk.a_ntt, u))
    e1 = sample_noise(ctx, rng)
    e2 = sample_noise(ctx, rng)
    c0 = poly_add(c0, e1)
    c1 = poly_add(c1, e2)
    # c0 += floor(q/t) * m, reduced into each residue row
    scaled = (params.delta_col * (pt.poly[None, :] % ctx._modcol)) % ctx._modcol
    c0.residues += scaled
    c0.residues %= ctx._modcol
    return Ciphertext(parts=(c0, c1), fingerprint=params.fingerprint, is_fresh=True)


def _phase(sk: SecretKey, c: Ciphertext) -> RingElem:
    """c0 + c1*s (+ c2*s^2), coefficient domain."""
    acc = poly_add(c.parts[0], ntt_inverse(poly_mul(ntt_forward(c.parts[1]), sk.s_ntt)))
    if len(c.parts) == 3:
        acc = poly_add(
            acc, ntt_inverse(poly_mul(ntt_forward(c.parts[2]), sk.s2_ntt))
        )
    return acc


def _round_scale(numerators: np.ndarray, divisor: int) -> np.ndarray:
    """round(x / divisor) half away from zero, exact on Python ints."""
    twice = numerators * 2
    return np.where(
        numerators >= 0,
        (twice + divisor) // (2 * divisor),
        -((-twice + divisor) // (2 * divisor)),
    )


def decrypt(sk: SecretKey, c: Ciphertext, params: BfvParams) -> Plaintext:
    """Exact rounding decryption; handles 2- and 3-part ciphertexts.

    Correctness requires a positive noise budget, which only the key holder
    can check (noise_budget); an exhausted ciphertext decrypts silently to
    corrupted values.
    """
    _check_params(params, c.fingerprint)
    v = crt_lift(_phase(sk, c)).coeffs  # in [0, q)
    q = params.ctx.q_big
    m = _round_scale(v * params.t, q) % params.t
    return Plaintext(m.astype(np.int64), params.t)


# ---------------------------------------------------------------------------
# homomorphic operations


def _pad_parts(c: Ciphertext, count: int, ctx: RnsContext) -> tuple:
    parts = list(c.parts)
    while len(parts) < count:
        parts.append(zero_elem(ctx))
    return tuple(parts)


def hadd(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    if c1.fingerprint != c2.fingerprint:
        raise ParameterMismatchError("ciphertexts from different parameter sets")
    count = max(len(c1), len(c2))
    ctx = c1.parts[0].ctx
    a = _pad_parts(c1, count, ctx)
    b = _pad_parts(c2, count, ctx)
    return Ciphertext(
        parts=tuple(poly_add(x, y) for x, y in zip(a, b)),
        fingerprint=c1.fingerprint,
    )


def hsub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    if c1.fingerprint != c2.fingerprint:
        raise ParameterMismatchError("ciphertexts from different parameter sets")
    count = max(len(c1), len(c2))
    ctx = c1.parts[0].ctx
    a = _pad_parts(c1, count, ctx)
    b = _pad_parts(c2, count, ctx)
    return Ciphertext(
        parts=tuple(poly_sub(x, y) for x, y in zip(a, b)),
        fingerprint=c1.fingerprint,
    )


def hadd_plain(c: Ciphertext, pt: Plaintext, params: BfvParams) -> Ciphertext:
    _check_params(params, c.fingerprint)
    validate_plaintext(params, pt)
    ctx = params.ctx
    c0 = c.parts[0].copy()
    scaled = (params.delta_col * (pt.poly[None, :] % ctx._modcol)) % ctx._modcol
    c0.residues += scaled
    c0.residues %= ctx._modcol
    return Ciphertext(parts=(c0,) + c.parts[1:], fingerprint=c.fingerprint)


def hmult_plain(c: Ciphertext, pt: Plaintext, params: BfvParams) -> Ciphertext:
    """Multiply by a plaintext lifted at its centered representative.

    Constant polynomials (the batched-weight case) take a scalar fast path.
    """
    _check_params(params, c.fingerprint)
    validate_plaintext(params, pt)
    centered = pt.centered()
    if not centered[1:].any():
        scalar = int(centered[0])
        parts = tuple(poly_mul_scalar(p, scalar) for p in c.parts)
        return Ciphertext(parts=parts, fingerprint=c.fingerprint)
    lifted = ring.from_int_coeffs(params.ctx, centered)
    lifted_ntt = ntt_forward(lifted)
    parts = tuple(
        ntt_inverse(poly_mul(ntt_forward(p), lifted_ntt)) for p in c.parts
    )
    return Ciphertext(parts=parts, fingerprint=c.fingerprint)


def _lift_nonneg(elem: RingElem) -> BigPoly:
    return crt_lift(elem)


def _scale_reduce(part: BigPoly, params: BfvParams) -> RingElem:
    q = params.ctx.q_big
    scaled = _round_scale(part.coeffs * params.t, q) % q
    return crt_reduce(BigPoly(scaled), params.ctx)


def _tensor(c1_parts, c2_parts, params: BfvParams, square: bool):
    bits = params.tensor_slot_bits
    a0, a1 = (_lift_nonneg(p) for p in c1_parts)
    if square:
        d0 = kronecker_negacyclic(a0, a0, bits)
        cross = kronecker_negacyclic(a0, a1, bits)
        d1 = BigPoly(cross.coeffs * 2)
        d2 = kronecker_negacyclic(a1, a1, bits)
    else:
        b0, b1 = (_lift_nonneg(p) for p in c2_parts)
        d0 = kronecker_negacyclic(a0, b0, bits)
        d1 = BigPoly(
            kronecker_negacyclic(a0, b1, bits).coeffs
            + kronecker_negacyclic(a1, b0, bits).coeffs
        )
        d2 = kronecker_negacyclic(a1, b1, bits)
    return d0, d1, d2


def _digit_decompose(elem: RingElem, params: BfvParams) -> np.ndarray:
    """Base-w digits of the lifted coefficients, shape (l+1, N) int64."""
    coeffs = crt_lift(elem).coeffs
    n = params.ring_degree
    count = params.l + 1
    digit_bytes = params.w.bit_length() // 8  # w is 2^8/2^16/2^32
    width = count * digit_bytes
    buf = bytearray(n * width)
    for i, c in enumerate(coeffs):
        v = int(c)
        buf[i * width : i * width + (v.bit_length() + 7) // 8] = v.to_bytes(
            (v.bit_length() + 7) // 8, "little"
        )
    dtype = {1: np.uint8, 2: np.uint16, 4: np.uint32}[digit_bytes]
    mat = np.frombuffer(bytes(buf), dtype=dtype).reshape(n, count)
    return np.ascontiguousarray(mat.T).astype(np.int64)


def relinearize(parts3: tuple, rlk: RelinKey, params: BfvParams) -> Ciphertext:
    """Shrink a 3-part ciphertext to 2 parts via base-w key switching."""
    if rlk is None:
        raise MissingKeyError("relinearization key required")
    _check_params(params, rlk.fingerprint)
    c0, c1, c2 = parts3
    ctx = params.ctx
    digits = _digit_decompose(c2, params)  # (l+1, N)
    count = digits.shape[0]
    n_primes = len(ctx.primes)

    # transform all digit polynomials across all primes in one batch
    rows = (digits[:, None, :] % ctx.prime_values[None, :, None]).reshape(
        count * n_primes, ctx.ring_degree
    )
    rows = (rows * np.tile(ctx.psi_pows, (count, 1))) % np.tile(
        ctx._modcol, (count, 1)
    )
    _ntt.transform_rows(
        rows, np.tile(ctx.prime_values, count), np.tile(ctx.tw, (count, 1)), ctx.rev
    )
    digit_ntt = rows.reshape(count, n_primes, ctx.ring_degree)

    acc0 = np.zeros((n_primes, ctx.ring_degree), dtype=np.int64)
    acc1 = np.zeros_like(acc0)
    for i in range(count):
        k0, k1 = rlk.components[i]
        acc0 += (digit_ntt[i] * k0.residues) % ctx._modcol
        acc0 %= ctx._modcol
        acc1 += (digit_ntt[i] * k1.residues) % ctx._modcol
        acc1 %= ctx._modcol
    fix0 = ntt_inverse(RingElem(ctx, acc0, Domain.NTT))
    fix1 = ntt_inverse(RingElem(ctx, acc1, Domain.NTT))
    return Ciphertext(
        parts=(poly_add(c0, fix0), poly_add(c1, fix1)),
        fingerprint=params.fingerprint,
    )


def hmult_raw(c1: Ciphertext, c2: Ciphertext, params: BfvParams) -> Ciphertext:
    """Tensor and scale only: returns the 3-part product ciphertext."""
    _check_params(params, c1.fingerprint)
    if c1.fingerprint != c2.fingerprint:
        raise ParameterMismatchError("ciphertexts from different parameter sets")
    if len(c1) != 2 or len(c2) != 2:
        raise ParameterMismatchError("hmult_raw expects 2-part inputs")
    d0, d1, d2 = _tensor(c1.parts, c2.parts, params, square=False)
    parts3 = tuple(_scale_reduce(d, params) for d in (d0, d1, d2))
    return Ciphertext(parts=parts3, fingerprint=params.fingerprint)


def hmult(c1: Ciphertext, c2: Ciphertext, rlk: RelinKey, params: BfvParams) -> Ciphertext:
    _check_params(params, c1.fingerprint)
    if c1.fingerprint != c2.fingerprint:
        raise ParameterMismatchError("ciphertexts from different parameter sets")
    if rlk is None:
        raise MissingKeyError("relinearization key required for hmult")
    if len(c1) == 3:
        c1 = relinearize(c1.parts, rlk, params)
    if len(c2) == 3:
        c2 = relinearize(c2.parts, rlk, params)
    square = c1 is c2 or (c1.parts is c2.parts)
    d0, d1, d2 = _tensor(c1.parts, c2.parts, params, square=square)
    parts3 = tuple(_scale_reduce(d, params) for d in (d0, d1, d2))
    return relinearize(parts3, rlk, params)


def hsquare(c: Ciphertext, rlk: RelinKey, params: BfvParams) -> Ciphertext:
    _check_params(params, c.fingerprint)
    if rlk is None:
        raise MissingKeyError("relinearization key required for hsquare")
    if len(c) == 3:
        c = relinearize(c.parts, rlk, params)
    d0, d1, d2 = _tensor(c.parts, None, params, square=True)
    parts3 = tuple(_scale_reduce(d, params) for d in (d0, d1, d2))
    return relinearize(parts3, rlk, params)


# ---------------------------------------------------------------------------
# noise instrumentation


def noise_budget(sk: SecretKey, c: Ciphertext, params: BfvParams) -> int:
    """Bits of headroom before decryption fails; 0 means exhausted.

    budget = floor(log2 q - log2 t - log2 max(1, |v|_inf)) - 1 computed with
    exact integer arithmetic, where v is the phase minus the decoded signal.
    """
    _check_params(params, c.fingerprint)
    q = params.ctx.q_big
    phase = crt_lift(_phase(sk, c)).coeffs
    m = _round_scale(phase * params.t, q) % params.t
    v = (phase - m * params.delta) % q
    half = q // 2
    v = np.where(v > half, v - q, v)
    vmax = max(1, max(abs(int(x)) for x in v))
    quotient = q // (params.t * vmax)
    if quotient <= 0:
        return 0
    return max(0, quotient.bit_length() - 2)


def squaring_probe(
    params: BfvParams,
    sk: SecretKey,
    pk: PublicKey,
    rlk: RelinKey,
    depth: int,
    rng: np.random.Generator,
    message: int = 2,
) -> list:
    """Budget trace of a repeated-squaring chain; index 0 is the fresh budget."""
    c = encrypt(pk, Plaintext.constant(message, params), params, rng)
    trace = [noise_budget(sk, c, params)]
    for _ in range(depth):
        c = hsquare(c, rlk, params)
        trace.append(noise_budget(sk, c, params))
    return trace
