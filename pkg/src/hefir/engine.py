"""Homomorphic network evaluation over packed image batches.

One ciphertext per feature-map position; slot j of every ciphertext belongs
to image j, so a whole batch rides through the network at once and weights
enter as constant plaintexts.  Plaintext-CRT channels are independent
evaluations under different t_i, recombined after decryption.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from . import bfv, ring
from .batching import SlotEncoder, SlotVector
from .codec import CrtSystem, from_modular
from .errors import (
    CapacityError,
    HefirError,
    IncompleteResultError,
    ParameterMismatchError,
)
from .nn_oracle import LayerKind, LayerSpec, NetworkSpec, QuantizedModel


@dataclass(frozen=True)
class PackingLayout:
    """Slot j of every position ciphertext carries image j."""

    batch_size: int
    slot_count: int

    def __post_init__(self):
        if self.batch_size > self.slot_count:
            raise CapacityError(
                f"batch {self.batch_size} exceeds slot capacity {self.slot_count}"
            )


@dataclass
class CipherTensor:
    """Feature map: one ciphertext per (y, x, channel), row-major flat order."""

    shape: tuple  # (h, w, c)
    cts: list
    delta: int
    channel_modulus: int

    def __post_init__(self):
        h, w, c = self.shape
        if len(self.cts) != h * w * c:
            raise HefirError("ciphertext count != h*w*c")

    def at(self, y: int, x: int, ch: int):
        h, w, c = self.shape
        return self.cts[(y * w + x) * c + ch]


@dataclass
class OpCounter:
    """Scheduled multiply-accumulate work, matching the static audit.

    A scheduled plaintext multiply whose weight is zero is skipped (no
    arithmetic) but still counted as scheduled.  Worker threads accumulate
    into local counters and merge, so totals stay exact under concurrency.
    """

    mult_plain_scheduled: int = 0
    mult_plain_executed: int = 0
    mult_plain_skipped: int = 0
    hsquare: int = 0
    hadd: int = 0

    def merge(self, other: "OpCounter"):
        with _COUNTER_LOCK:
            self.mult_plain_scheduled += other.mult_plain_scheduled
            self.mult_plain_executed += other.mult_plain_executed
            self.mult_plain_skipped += other.mult_plain_skipped
            self.hsquare += other.hsquare
            self.hadd += other.hadd


_COUNTER_LOCK = __import__("threading").Lock()


@dataclass(frozen=True)
class Block:
    row: int
    start_index: int  # b_j = j * s_h * i_w
    placements: tuple  # (j, k, f_jk) triples
    resident: int  # ciphertexts the block keeps loaded


@dataclass
class BlockPlan:
    capacity: int
    blocks: list


def plan_blocks(i_w, i_h, f_w, f_h, s_w, s_h, capacity) -> BlockPlan:
    """Row-band partition of a feature map into worker-sized blocks.

    Placement (j, k) starts at f_jk = j*s_h*i_w + k*s_w; block j starts at
    b_j = j*s_h*i_w.  A row band resident set is f_h rows; bands that exceed
    the capacity are split along k until they fit.
    """
    if capacity < f_w * f_h:
        raise CapacityError(
            f"capacity {capacity} below filter size {f_w * f_h}"
        )
    out_rows = (i_h - f_h) // s_h + 1
    out_cols = (i_w - f_w) // s_w + 1
    # widest placement run whose resident band fits the capacity
    max_run = (capacity // f_h - f_w) // s_w + 1
    max_run = max(1, min(max_run, out_cols))
    blocks = []
    for j in range(out_rows):
        b_j = j * s_h * i_w
        for k0 in range(0, out_cols, max_run):
            ks = range(k0, min(k0 + max_run, out_cols))
            placements = tuple((j, k, b_j + k * s_w) for k in ks)
            span = (len(ks) - 1) * s_w + f_w
            blocks.append(
                Block(row=j, start_index=b_j, placements=placements, resident=f_h * span)
            )
    return BlockPlan(capacity=capacity, blocks=blocks)


def default_capacity(params: bfv.BfvParams, mem_budget_mb: int) -> int:
    """Ciphertexts per worker from a memory budget.

    A ciphertext is about 2*N*log2(q) bits and working copies may expand it
    3x during multiplication.
    """
    ct_bits = 2 * params.ring_degree * params.q_bits
    per_ct = 3 * ct_bits // 8
    return max(1, (mem_budget_mb * 1024 * 1024) // per_ct)


# ---------------------------------------------------------------------------
# packing


def pack_images(
    images,
    layout: PackingLayout,
    encoder: SlotEncoder,
    pk: bfv.PublicKey,
    params: bfv.BfvParams,
    rng: np.random.Generator,
    delta: int,
) -> CipherTensor:
    """Encrypt position i of every image into slot-aligned ciphertext i."""
    if len(images) != layout.batch_size:
        raise CapacityError("image count != layout batch size")
    if layout.slot_count != params.ring_degree:
        raise ParameterMismatchError("layout slots != ring degree")
    shape = tuple(images[0].shape)
    stack = np.stack([np.asarray(im, dtype=np.int64) for im in images])
    if stack.shape[1:] != shape:
        raise HefirError("images disagree on shape")
    t = params.t
    flat = stack.reshape(layout.batch_size, -1) % t  # centered lift of pixels
    cts = []
    slots = np.zeros(layout.slot_count, dtype=np.int64)
    for pos in range(flat.shape[1]):
        slots[: layout.batch_size] = flat[:, pos]
        slots[layout.batch_size :] = 0
        pt = encoder.encode(SlotVector(slots, t))
        cts.append(bfv.encrypt(pk, pt, params, rng))
    h, w = shape[0], shape[1]
    c = shape[2] if len(shape) == 3 else 1
    return CipherTensor(shape=(h, w, c), cts=cts, delta=delta, channel_modulus=t)


def unpack_tensor(
    tensor: CipherTensor,
    sk: bfv.SecretKey,
    encoder: SlotEncoder,
    params: bfv.BfvParams,
    batch_size: int,
) -> np.ndarray:
    """Decrypt and decode to per-image values, shape (batch, h*w*c), in [0, t)."""
    if tensor.channel_modulus != params.t:
        raise ParameterMismatchError("tensor channel does not match params")
    out = np.zeros((batch_size, len(tensor.cts)), dtype=np.int64)
    for pos, ct in enumerate(tensor.cts):
        values = encoder.decode(bfv.decrypt(sk, ct, params)).values
        out[:, pos] = values[:batch_size]
    return out


# ---------------------------------------------------------------------------
# layer evaluation


def _zero_ciphertext(params: bfv.BfvParams) -> bfv.Ciphertext:
    return bfv.Ciphertext(
        parts=(ring.zero_elem(params.ctx), ring.zero_elem(params.ctx)),
        fingerprint=params.fingerprint,
    )


def _weighted_sum(taps, params: bfv.BfvParams, counter: OpCounter) -> bfv.Ciphertext:
    """sum(w * ct) over (ct, w) pairs; zero weights skip the arithmetic."""
    acc0 = acc1 = None
    used = 0
    for ct, w in taps:
        counter.mult_plain_scheduled += 1
        w = int(w)
        if w == 0:
            counter.mult_plain_skipped += 1
            continue
        counter.mult_plain_executed += 1
        used += 1
        acc0 = ring.accumulate_scaled(acc0, ct.parts[0], w)
        acc1 = ring.accumulate_scaled(acc1, ct.parts[1], w)
    if used == 0:
        return _zero_ciphertext(params)
    counter.hadd += used - 1
    return bfv.Ciphertext(parts=(acc0, acc1), fingerprint=params.fingerprint)


def _run_blocks(jobs, workers: int):
    if workers <= 1:
        for job in jobs:
            job()
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        for f in futures:
            f.result()


def eval_conv(
    tensor: CipherTensor,
    layer: LayerSpec,
    weights: np.ndarray,
    params: bfv.BfvParams,
    counter: OpCounter,
    workers: int = 1,
    capacity: int | None = None,
) -> CipherTensor:
    h, w, c = tensor.shape
    f, kh, kw, cg = weights.shape
    if c != cg * layer.groups:
        raise ParameterMismatchError(f"{layer.name}: channel mismatch")
    if tensor.channel_modulus != params.t:
        raise ParameterMismatchError(f"{layer.name}: tensor channel != params")
    sh, sw = layer.stride
    ph = (kh - 1) // 2 if layer.padded else 0
    pw = (kw - 1) // 2 if layer.padded else 0
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    per_group = f // layer.groups
    out = [None] * (oh * ow * f)

    plan = plan_blocks(
        w + 2 * pw,
        h + 2 * ph,
        kw,
        kh,
        sw,
        sh,
        capacity if capacity is not None else (w + 2 * pw) * (h + 2 * ph),
    )

    def make_job(block):
        def job():
            local = OpCounter()
            for oy, ox, _ in block.placements:
                for fi in range(f):
                    g = fi // per_group
                    taps = []
                    for ky in range(kh):
                        iy = oy * sh + ky - ph
                        if not 0 <= iy < h:
                            continue
                        for kx in range(kw):
                            ix = ox * sw + kx - pw
                            if not 0 <= ix < w:
                                continue
                            for ci in range(cg):
                                taps.append(
                                    (
                                        tensor.at(iy, ix, g * cg + ci),
                                        weights[fi, ky, kx, ci],
                                    )
                                )
                    out[(oy * ow + ox) * f + fi] = _weighted_sum(taps, params, local)
            counter.merge(local)

        return job

    _run_blocks([make_job(b) for b in plan.blocks], workers)
    return CipherTensor(
        shape=(oh, ow, f),
        cts=out,
        delta=tensor.delta * layer.weight_scale,
        channel_modulus=params.t,
    )


def eval_fc(
    tensor: CipherTensor,
    layer: LayerSpec,
    weights: np.ndarray,
    params: bfv.BfvParams,
    counter: OpCounter,
    workers: int = 1,
) -> CipherTensor:
    flat = tensor.cts
    outputs, in_count = weights.shape
    if in_count != len(flat):
        raise ParameterMismatchError(f"{layer.name}: weight width != tensor size")
    out = [None] * outputs

    def make_job(o):
        def job():
            local = OpCounter()
            out[o] = _weighted_sum(zip(flat, weights[o]), params, local)
            counter.merge(local)

        return job

    _run_blocks([make_job(o) for o in range(outputs)], workers)
    return CipherTensor(
        shape=(1, 1, outputs),
        cts=out,
        delta=tensor.delta * layer.weight_scale,
        channel_modulus=params.t,
    )


def eval_square(
    tensor: CipherTensor,
    rlk: bfv.RelinKey,
    params: bfv.BfvParams,
    counter: OpCounter,
    workers: int = 1,
) -> CipherTensor:
    out = [None] * len(tensor.cts)

    def make_job(lo, hi):
        def job():
            for i in range(lo, hi):
                out[i] = bfv.hsquare(tensor.cts[i], rlk, params)

        return job

    chunk = max(1, len(out) // max(1, workers * 4))
    jobs = [
        make_job(lo, min(lo + chunk, len(out))) for lo in range(0, len(out), chunk)
    ]
    _run_blocks(jobs, workers)
    counter.hsquare += len(out)
    return CipherTensor(
        shape=tensor.shape,
        cts=out,
        delta=tensor.delta * tensor.delta,
        channel_modulus=tensor.channel_modulus,
    )


def eval_pool(
    tensor: CipherTensor,
    layer: LayerSpec,
    params: bfv.BfvParams,
    counter: OpCounter,
) -> CipherTensor:
    h, w, c = tensor.shape
    e = layer.extent
    sh, sw = layer.stride
    oh = (h - e) // sh + 1
    ow = (w - e) // sw + 1
    out = []
    for oy in range(oh):
        for ox in range(ow):
            for ch in range(c):
                acc = None
                for dy in range(e):
                    for dx in range(e):
                        ct = tensor.at(oy * sh + dy, ox * sw + dx, ch)
                        if acc is None:
                            acc = ct
                        else:
                            acc = bfv.hadd(acc, ct)
                            counter.hadd += 1
                out.append(acc)
    return CipherTensor(
        shape=(oh, ow, c),
        cts=out,
        delta=tensor.delta * e * e,
        channel_modulus=tensor.channel_modulus,
    )


def eval_network(
    tensor: CipherTensor,
    model: QuantizedModel,
    rlk: bfv.RelinKey,
    params: bfv.BfvParams,
    counter: OpCounter | None = None,
    workers: int = 1,
    capacity: int | None = None,
    layer_hook=None,
) -> CipherTensor:
    """Evaluate every layer; returns the logits tensor (1, 1, outputs)."""
    counter = counter if counter is not None else OpCounter()
    for layer, weights in zip(model.spec.layers, model.weights):
        if layer.kind is LayerKind.CONV:
            tensor = eval_conv(tensor, layer, weights, params, counter, workers, capacity)
        elif layer.kind is LayerKind.SQUARE:
            tensor = eval_square(tensor, rlk, params, counter, workers)
        elif layer.kind is LayerKind.POOL:
            tensor = eval_pool(tensor, layer, params, counter)
        elif layer.kind is LayerKind.FC:
            tensor = eval_fc(tensor, layer, weights, params, counter, workers)
        if layer_hook is not None:
            layer_hook(layer.name, tensor)
    return tensor


# ---------------------------------------------------------------------------
# CRT channel orchestration


@dataclass
class ChannelResult:
    """Per-channel decrypted logit slots: t_i -> (outputs, batch) residues."""

    moduli: tuple
    batch_size: int
    residues: dict = field(default_factory=dict)

    def add(self, t: int, logits: np.ndarray):
        self.residues[t] = logits


def reduce_model(model: QuantizedModel, t: int) -> QuantizedModel:
    """Model weights reduced into a channel's signed centered range.

    Published-network weights are small relative to every t_i, so this is
    usually the identity; the mod-t congruence holds either way.
    """
    half = t // 2
    reduced = []
    for w in model.weights:
        if w is None:
            reduced.append(None)
            continue
        r = np.asarray(w, dtype=np.int64) % t
        reduced.append(np.where(r > half, r - t, r))
    return QuantizedModel(spec=model.spec, bit_width=model.bit_width, weights=reduced)


def run_channels(
    images,
    model: QuantizedModel,
    crt_system: CrtSystem,
    params_for_channel,
    keys_for_channel,
    rng: np.random.Generator,
    workers: int = 1,
    counter: OpCounter | None = None,
) -> ChannelResult:
    """Evaluate the network once per plaintext channel.

    `params_for_channel(i)` and `keys_for_channel(i)` supply the BFV context
    and (sk, pk, rlk) for channel i; channels are independent evaluations.
    """
    batch = len(images)
    result = ChannelResult(moduli=crt_system.moduli, batch_size=batch)
    for i, t in enumerate(crt_system.moduli):
        params = params_for_channel(i)
        if params.t != t:
            raise ParameterMismatchError(f"channel {i}: params t != system t")
        sk, pk, rlk = keys_for_channel(i)
        encoder = SlotEncoder(t, params.ring_degree)
        layout = PackingLayout(batch_size=batch, slot_count=params.ring_degree)
        tensor = pack_images(
            images, layout, encoder, pk, params, rng, delta=model.spec.input_scale
        )
        logits_ct = eval_network(
            tensor, reduce_model(model, t), rlk, params, counter, workers
        )
        mat = unpack_tensor(logits_ct, sk, encoder, params, batch)  # (batch, outputs)
        result.add(t, mat.T.copy())
    return result


def reconstruct_logits(result: ChannelResult, crt_system: CrtSystem) -> np.ndarray:
    """Signed per-image logits from per-channel residues, shape (batch, outputs)."""
    for t in crt_system.moduli:
        if t not in result.residues:
            raise IncompleteResultError(f"missing CRT channel t={t}")
    any_mat = next(iter(result.residues.values()))
    outputs, batch = any_mat.shape
    logit = np.zeros((batch, outputs), dtype=object)
    for o in range(outputs):
        for b in range(batch):
            residues = [int(result.residues[t][o, b]) for t in crt_system.moduli]
            logit[b, o] = crt_system.reconstruct_centered(residues)
    return logit


def classify_logits(logits: np.ndarray) -> list:
    """Per-image argmax with lowest-index tie break."""
    labels = []
    for row in logits:
        vals = list(row)
        labels.append(vals.index(max(vals)))
    return labels
