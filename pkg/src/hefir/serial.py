"""Bit-exact byte formats for keys, ciphertexts and cipher tensors, plus the
structured-text model file.

Binary layout: magic "HFIR", format version u16, object kind u8, N u32,
prime count u16, the primes as u64 little-endian, then t as u64, then the
kind-specific payload.  Ring elements are stored as coefficient-domain
residues, u64 little-endian, position-major then prime-major.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from . import bfv, ring
from .engine import CipherTensor
from .errors import FormatError, ParameterMismatchError
from fractions import Fraction

from .nn_oracle import (
    LayerKind,
    NETWORKS,
    QuantizedModel,
    integerize,
)

MAGIC = b"HFIR"
VERSION = 1

KIND_SECRET_KEY = 1
KIND_PUBLIC_KEY = 2
KIND_RELIN_KEY = 3
KIND_CIPHERTEXT = 4
KIND_CIPHER_TENSOR = 5


# ---------------------------------------------------------------------------
# low-level helpers


def _write_header(out: io.BytesIO, kind: int, params: bfv.BfvParams):
    out.write(MAGIC)
    out.write(struct.pack("<HB", VERSION, kind))
    out.write(struct.pack("<IH", params.ring_degree, len(params.ctx.primes)))
    for pm in params.ctx.primes:
        out.write(struct.pack("<Q", pm.value))
    out.write(struct.pack("<Q", params.t))


def _read_exact(buf: io.BytesIO, count: int) -> bytes:
    data = buf.read(count)
    if len(data) != count:
        raise FormatError("truncated file", offset=buf.tell())
    return data


def read_header(buf: io.BytesIO):
    magic = _read_exact(buf, 4)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    version, kind = struct.unpack("<HB", _read_exact(buf, 3))
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    n, prime_count = struct.unpack("<IH", _read_exact(buf, 6))
    primes = [
        struct.unpack("<Q", _read_exact(buf, 8))[0] for _ in range(prime_count)
    ]
    t = struct.unpack("<Q", _read_exact(buf, 8))[0]
    return kind, n, primes, t


def _check_header_params(params: bfv.BfvParams, n, primes, t):
    if (
        n != params.ring_degree
        or list(primes) != [pm.value for pm in params.ctx.primes]
        or t != params.t
    ):
        raise ParameterMismatchError(
            f"file parameters (N={n}, t={t}) do not match the active set "
            f"(N={params.ring_degree}, t={params.t})"
        )


def _write_elem(out: io.BytesIO, elem: ring.RingElem):
    if elem.domain is not ring.Domain.COEFF:
        elem = ring.ntt_inverse(elem)
    out.write(elem.residues.T.astype("<u8").tobytes())


def _read_elem(buf: io.BytesIO, ctx: ring.RnsContext) -> ring.RingElem:
    n, r = ctx.ring_degree, len(ctx.primes)
    data = _read_exact(buf, n * r * 8)
    arr = np.frombuffer(data, dtype="<u8").reshape(n, r).T.astype(np.int64)
    return ring.RingElem(ctx, np.ascontiguousarray(arr), ring.Domain.COEFF)


def _write_ciphertext_body(out: io.BytesIO, c: bfv.Ciphertext):
    out.write(struct.pack("<BB", len(c.parts), 1 if c.is_fresh else 0))
    for part in c.parts:
        _write_elem(out, part)


def _read_ciphertext_body(buf: io.BytesIO, params: bfv.BfvParams) -> bfv.Ciphertext:
    parts_count, fresh = struct.unpack("<BB", _read_exact(buf, 2))
    if parts_count not in (2, 3):
        raise FormatError(f"ciphertext with {parts_count} parts", offset=buf.tell())
    parts = tuple(_read_elem(buf, params.ctx) for _ in range(parts_count))
    return bfv.Ciphertext(
        parts=parts, fingerprint=params.fingerprint, is_fresh=bool(fresh)
    )


# ---------------------------------------------------------------------------
# public serializers


def dump_secret_key(sk: bfv.SecretKey, params: bfv.BfvParams) -> bytes:
    out = io.BytesIO()
    _write_header(out, KIND_SECRET_KEY, params)
    _write_elem(out, ring.ntt_inverse(sk.s_ntt))
    return out.getvalue()


def load_secret_key(data: bytes, params: bfv.BfvParams) -> bfv.SecretKey:
    buf = io.BytesIO(data)
    kind, n, primes, t = read_header(buf)
    if kind != KIND_SECRET_KEY:
        raise FormatError(f"expected secret key, got kind {kind}", offset=6)
    _check_header_params(params, n, primes, t)
    s = _read_elem(buf, params.ctx)
    s_ntt = ring.ntt_forward(s)
    return bfv.SecretKey(
        s_bits=s.residues[0].copy(),
        s_ntt=s_ntt,
        s2_ntt=ring.poly_mul(s_ntt, s_ntt),
    )


def dump_public_key(pk: bfv.PublicKey, params: bfv.BfvParams) -> bytes:
    out = io.BytesIO()
    _write_header(out, KIND_PUBLIC_KEY, params)
    _write_elem(out, pk.b_ntt)
    _write_elem(out, pk.a_ntt)
    return out.getvalue()


def load_public_key(data: bytes, params: bfv.BfvParams) -> bfv.PublicKey:
    buf = io.BytesIO(data)
    kind, n, primes, t = read_header(buf)
    if kind != KIND_PUBLIC_KEY:
        raise FormatError(f"expected public key, got kind {kind}", offset=6)
    _check_header_params(params, n, primes, t)
    b = ring.ntt_forward(_read_elem(buf, params.ctx))
    a = ring.ntt_forward(_read_elem(buf, params.ctx))
    return bfv.PublicKey(b_ntt=b, a_ntt=a, fingerprint=params.fingerprint)


def dump_relin_key(rlk: bfv.RelinKey, params: bfv.BfvParams) -> bytes:
    out = io.BytesIO()
    _write_header(out, KIND_RELIN_KEY, params)
    out.write(struct.pack("<QH", rlk.base, len(rlk.components)))
    for k0, k1 in rlk.components:
        _write_elem(out, k0)
        _write_elem(out, k1)
    return out.getvalue()


def load_relin_key(data: bytes, params: bfv.BfvParams) -> bfv.RelinKey:
    buf = io.BytesIO(data)
    kind, n, primes, t = read_header(buf)
    if kind != KIND_RELIN_KEY:
        raise FormatError(f"expected relin key, got kind {kind}", offset=6)
    _check_header_params(params, n, primes, t)
    base, count = struct.unpack("<QH", _read_exact(buf, 10))
    if base != params.w:
        raise ParameterMismatchError(
            f"relin base {base} does not match parameter set base {params.w}"
        )
    components = []
    for _ in range(count):
        k0 = ring.ntt_forward(_read_elem(buf, params.ctx))
        k1 = ring.ntt_forward(_read_elem(buf, params.ctx))
        components.append((k0, k1))
    return bfv.RelinKey(components=components, base=base, fingerprint=params.fingerprint)


def dump_ciphertext(c: bfv.Ciphertext, params: bfv.BfvParams) -> bytes:
    out = io.BytesIO()
    _write_header(out, KIND_CIPHERTEXT, params)
    _write_ciphertext_body(out, c)
    return out.getvalue()


def load_ciphertext(data: bytes, params: bfv.BfvParams) -> bfv.Ciphertext:
    buf = io.BytesIO(data)
    kind, n, primes, t = read_header(buf)
    if kind != KIND_CIPHERTEXT:
        raise FormatError(f"expected ciphertext, got kind {kind}", offset=6)
    _check_header_params(params, n, primes, t)
    return _read_ciphertext_body(buf, params)


def dump_cipher_tensor(tensor: CipherTensor, params: bfv.BfvParams) -> bytes:
    out = io.BytesIO()
    _write_header(out, KIND_CIPHER_TENSOR, params)
    h, w, c = tensor.shape
    delta_bytes = tensor.delta.to_bytes((tensor.delta.bit_length() + 7) // 8 or 1, "big")
    out.write(struct.pack("<IIIH", h, w, c, len(delta_bytes)))
    out.write(delta_bytes)
    out.write(struct.pack("<I", len(tensor.cts)))
    for ct in tensor.cts:
        _write_ciphertext_body(out, ct)
    return out.getvalue()


def load_cipher_tensor(data: bytes, params: bfv.BfvParams) -> CipherTensor:
    buf = io.BytesIO(data)
    kind, n, primes, t = read_header(buf)
    if kind != KIND_CIPHER_TENSOR:
        raise FormatError(f"expected cipher tensor, got kind {kind}", offset=6)
    _check_header_params(params, n, primes, t)
    h, w, c, delta_len = struct.unpack("<IIIH", _read_exact(buf, 14))
    delta = int.from_bytes(_read_exact(buf, delta_len), "big")
    (count,) = struct.unpack("<I", _read_exact(buf, 4))
    cts = [_read_ciphertext_body(buf, params) for _ in range(count)]
    return CipherTensor(shape=(h, w, c), cts=cts, delta=delta, channel_modulus=t)


# ---------------------------------------------------------------------------
# model file (structured text)


def dump_model(model: QuantizedModel) -> str:
    layers = []
    for layer, weights in zip(model.spec.layers, model.weights):
        entry = {"kind": layer.kind.value, "name": layer.name}
        if layer.kind is LayerKind.CONV:
            entry.update(
                filters=layer.filters,
                kernel=list(layer.kernel),
                stride=list(layer.stride),
                padding=layer.padded,
                groups=layer.groups,
                weight_scale=layer.weight_scale,
                weights=np.asarray(weights).reshape(-1).tolist(),
            )
        elif layer.kind is LayerKind.FC:
            entry.update(
                outputs=layer.filters,
                weight_scale=layer.weight_scale,
                weights=np.asarray(weights).reshape(-1).tolist(),
            )
        elif layer.kind is LayerKind.POOL:
            entry.update(extent=layer.extent, stride=list(layer.stride))
        layers.append(entry)
    doc = {
        "format": "hefir-model",
        "version": 1,
        "architecture": model.spec.name,
        "bit_width": model.bit_width,
        "input_scale": model.spec.input_scale,
        "layers": layers,
    }
    return json.dumps(doc, indent=1)


def _validate_quantized(weights: np.ndarray, bit_width: int, weight_scale: int, name: str):
    """Every weight must be the integerization of some k-bit quantized value."""
    levels = (1 << bit_width) - 1
    valid = {integerize(Fraction(j, levels), weight_scale) for j in range(-levels, levels + 1)}
    flat = np.asarray(weights).reshape(-1)
    for w in flat:
        if int(w) not in valid:
            raise FormatError(
                f"layer '{name}': weight {int(w)} is not a {bit_width}-bit "
                f"quantized value at scale {weight_scale}"
            )


def load_model(text: str, validate_bits: bool = True) -> QuantizedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"model file is not valid JSON: {exc}") from exc
    if doc.get("format") != "hefir-model":
        raise FormatError("missing hefir-model format marker")
    arch = doc.get("architecture")
    if arch not in NETWORKS:
        raise FormatError(f"unknown architecture '{arch}'")
    spec = NETWORKS[arch]()
    entries = doc.get("layers", [])
    if len(entries) != len(spec.layers):
        raise FormatError(
            f"architecture '{arch}' needs {len(spec.layers)} layers, file has {len(entries)}"
        )
    bit_width = int(doc["bit_width"])
    weights = []
    shapes = [spec.input_shape] + spec.layer_shapes()
    for i, (layer, entry) in enumerate(zip(spec.layers, entries)):
        if entry.get("kind") != layer.kind.value:
            raise FormatError(
                f"layer {i}: expected {layer.kind.value}, file has {entry.get('kind')}"
            )
        if layer.kind is LayerKind.CONV:
            cg = shapes[i][2] // layer.groups
            kh, kw = layer.kernel
            arr = np.array(entry["weights"], dtype=np.int64).reshape(
                layer.filters, kh, kw, cg
            )
            if entry.get("weight_scale") != layer.weight_scale:
                raise FormatError(f"layer {i}: scale mismatch with architecture table")
            if validate_bits:
                _validate_quantized(arr, bit_width, layer.weight_scale, layer.name)
            weights.append(arr)
        elif layer.kind is LayerKind.FC:
            h, w, c = shapes[i]
            arr = np.array(entry["weights"], dtype=np.int64).reshape(
                layer.filters, h * w * c
            )
            if entry.get("weight_scale") != layer.weight_scale:
                raise FormatError(f"layer {i}: scale mismatch with architecture table")
            if validate_bits:
                _validate_quantized(arr, bit_width, layer.weight_scale, layer.name)
            weights.append(arr)
        else:
            weights.append(None)
    return QuantizedModel(spec=spec, bit_width=bit_width, weights=weights)


# ---------------------------------------------------------------------------
# CRT bundle manifest


def dump_manifest(moduli, files) -> str:
    return json.dumps(
        {
            "format": "hefir-crt-manifest",
            "moduli": [int(t) for t in moduli],
            "files": list(files),
        },
        indent=1,
    )


def load_manifest(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if doc.get("format") != "hefir-crt-manifest":
        raise FormatError("missing hefir-crt-manifest format marker")
    moduli = [int(t) for t in doc["moduli"]]
    files = list(doc["files"])
    if len(moduli) != len(files):
        raise FormatError("manifest moduli and files disagree in length")
    return moduli, files
