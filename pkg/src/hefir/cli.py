"""Command-line surface: the operational entry point for the pipeline.

keygen -> encrypt -> infer -> decrypt mirrors the client/cloud split: only
encrypt and decrypt touch the secret key side, infer runs on public
material.  CRT presets produce one artifact per plaintext channel plus a
manifest naming the reconstruction order.
"""

from __future__ import annotations

import json
import os
import statistics
import sys
import time

import click
import numpy as np

from . import bfv, engine, nn_oracle, presets, serial
from .batching import SlotEncoder
from .codec import CrtSystem
from .datasets import integerize_image, read_idx_images
from .errors import (
    CapacityError,
    FormatError,
    HefirError,
    IncompleteResultError,
    ParameterMismatchError,
    UnsupportedParametersError,
    VerificationError,
)

EXIT_FORMAT = 2
EXIT_PARAMS = 3
EXIT_CAPACITY = 4


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, FormatError):
        return EXIT_FORMAT
    if isinstance(exc, (ParameterMismatchError, UnsupportedParametersError)):
        return EXIT_PARAMS
    if isinstance(exc, (CapacityError, VerificationError, IncompleteResultError)):
        return EXIT_CAPACITY
    return 1


def _guard(fn):
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HefirError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
        except FileNotFoundError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FORMAT)

    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


def _rng(seed):
    return np.random.default_rng(seed)


def _key_paths(key_dir, channel):
    return (
        os.path.join(key_dir, f"sk_c{channel}.hfir"),
        os.path.join(key_dir, f"pk_c{channel}.hfir"),
        os.path.join(key_dir, f"rlk_c{channel}.hfir"),
    )


def _load_model_file(path):
    with open(path) as fh:
        return serial.load_model(fh.read())


@click.group()
def main():
    """Homomorphic CNN inference over BFV-encrypted image batches."""


@main.command("keygen")
@click.option("--preset", required=True, help="parameter set id (toy, 1-5)")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="deterministic key generation")
@_guard
def cmd_keygen(preset, out_dir, seed):
    """Generate per-channel secret/public/relinearization keys."""
    p = presets.load_preset(preset)
    os.makedirs(out_dir, exist_ok=True)
    rng = _rng(seed)
    for i in range(p.channels):
        params = presets.build_context(p, i)
        sk, pk, rlk = bfv.keygen(params, rng)
        sk_path, pk_path, rlk_path = _key_paths(out_dir, i)
        with open(sk_path, "wb") as fh:
            fh.write(serial.dump_secret_key(sk, params))
        with open(pk_path, "wb") as fh:
            fh.write(serial.dump_public_key(pk, params))
        with open(rlk_path, "wb") as fh:
            fh.write(serial.dump_relin_key(rlk, params))
    with open(os.path.join(out_dir, "keys.json"), "w") as fh:
        json.dump({"preset": p.id, "channels": p.channels}, fh)
    click.echo(f"wrote keys for {p.channels} channel(s) under {out_dir}")


def _load_images(images_path, count, scale):
    raw = read_idx_images(images_path)
    if count:
        raw = raw[:count]
    return [integerize_image(im, scale) for im in raw]


@main.command("encrypt")
@click.option("--images", "images_path", required=True, type=click.Path(exists=True))
@click.option("--preset", required=True)
@click.option("--keys", "key_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--batch", type=int, default=None, help="images to pack (default: all)")
@click.option("--scale", type=int, default=4, help="input scale factor")
@click.option("--seed", type=int, default=None)
@_guard
def cmd_encrypt(images_path, preset, key_dir, out_path, batch, scale, seed):
    """Pack and encrypt an IDX image file, one tensor file per channel."""
    p = presets.load_preset(preset)
    rng = _rng(seed)
    images = _load_images(images_path, batch, scale)
    files = []
    for i in range(p.channels):
        params = presets.build_context(p, i)
        _, pk_path, _ = _key_paths(key_dir, i)
        with open(pk_path, "rb") as fh:
            pk = serial.load_public_key(fh.read(), params)
        encoder = SlotEncoder(params.t, params.ring_degree)
        layout = engine.PackingLayout(len(images), params.ring_degree)
        tensor = engine.pack_images(images, layout, encoder, pk, params, rng, delta=scale)
        path = f"{out_path}.c{i}.hfir"
        with open(path, "wb") as fh:
            fh.write(serial.dump_cipher_tensor(tensor, params))
        files.append(os.path.basename(path))
    with open(out_path, "w") as fh:
        fh.write(serial.dump_manifest(p.plaintext_moduli, files))
    click.echo(
        f"encrypted {len(images)} image(s) into {len(files)} channel file(s); "
        f"manifest {out_path}"
    )


@main.command("infer")
@click.option("--in", "in_manifest", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--preset", required=True)
@click.option("--keys", "key_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--channel", type=int, default=None,
              help="evaluate one CRT channel only (channels are independent)")
@click.option("--workers", type=int, default=None, help="worker threads per layer")
@click.option("--mem-budget-mb", type=int, default=None, help="per-worker block budget")
@_guard
def cmd_infer(in_manifest, model_path, preset, key_dir, out_path, channel, workers, mem_budget_mb):
    """Evaluate the network homomorphically; writes logit tensors per channel.

    With --channel only that channel is computed; the manifest is written
    once every channel's output file exists, so independent per-channel
    runs (one process or machine each) assemble the same bundle.
    """
    p = presets.load_preset(preset)
    model = _load_model_file(model_path)
    with open(in_manifest) as fh:
        moduli, files = serial.load_manifest(fh.read())
    if list(moduli) != list(p.plaintext_moduli):
        raise ParameterMismatchError("input manifest moduli do not match preset")
    if channel is not None and not 0 <= channel < len(moduli):
        raise ParameterMismatchError(f"channel {channel} out of range")
    workers = workers or os.cpu_count() or 1
    in_dir = os.path.dirname(os.path.abspath(in_manifest))
    out_files = [f"{os.path.basename(out_path)}.c{i}.hfir" for i in range(len(moduli))]
    out_dir = os.path.dirname(os.path.abspath(out_path))
    counter = engine.OpCounter()
    todo = range(len(moduli)) if channel is None else [channel]
    for i in todo:
        t = moduli[i]
        params = presets.build_context(p, i)
        capacity = (
            engine.default_capacity(params, mem_budget_mb) if mem_budget_mb else None
        )
        _, _, rlk_path = _key_paths(key_dir, i)
        with open(rlk_path, "rb") as fh:
            rlk = serial.load_relin_key(fh.read(), params)
        with open(os.path.join(in_dir, files[i]), "rb") as fh:
            tensor = serial.load_cipher_tensor(fh.read(), params)
        logits = engine.eval_network(
            tensor,
            engine.reduce_model(model, t),
            rlk,
            params,
            counter,
            workers=workers,
            capacity=capacity,
        )
        with open(os.path.join(out_dir, out_files[i]), "wb") as fh:
            fh.write(serial.dump_cipher_tensor(logits, params))
    if all(os.path.exists(os.path.join(out_dir, f)) for f in out_files):
        with open(out_path, "w") as fh:
            fh.write(serial.dump_manifest(moduli, out_files))
        wrote = f"manifest {out_path}"
    else:
        done = sum(os.path.exists(os.path.join(out_dir, f)) for f in out_files)
        wrote = f"{done}/{len(out_files)} channel files present; manifest deferred"
    click.echo(
        f"evaluated {model.spec.name}: {counter.mult_plain_scheduled} HMultPlain "
        f"({counter.mult_plain_skipped} zero-skipped), {counter.hsquare} HSquare, "
        f"{counter.hadd} HAdd; {wrote}"
    )


@main.command("decrypt")
@click.option("--in", "in_manifest", required=True, type=click.Path(exists=True))
@click.option("--preset", required=True)
@click.option("--keys", "key_dir", required=True, type=click.Path(exists=True))
@click.option("--batch", type=int, required=True, help="number of packed images")
@click.option("--out", "out_path", default=None, type=click.Path())
@_guard
def cmd_decrypt(in_manifest, preset, key_dir, batch, out_path):
    """Decrypt logit tensors, reconstruct across channels, classify."""
    p = presets.load_preset(preset)
    with open(in_manifest) as fh:
        moduli, files = serial.load_manifest(fh.read())
    crt = CrtSystem(moduli)
    in_dir = os.path.dirname(os.path.abspath(in_manifest))
    result = engine.ChannelResult(moduli=tuple(moduli), batch_size=batch)
    for i, t in enumerate(moduli):
        params = presets.build_context(p, i)
        sk_path, _, _ = _key_paths(key_dir, i)
        with open(sk_path, "rb") as fh:
            sk = serial.load_secret_key(fh.read(), params)
        with open(os.path.join(in_dir, files[i]), "rb") as fh:
            tensor = serial.load_cipher_tensor(fh.read(), params)
        encoder = SlotEncoder(params.t, params.ring_degree)
        mat = engine.unpack_tensor(tensor, sk, encoder, params, batch)
        result.add(t, mat.T.copy())
    logits = engine.reconstruct_logits(result, crt)
    labels = engine.classify_logits(logits)
    payload = {
        "labels": labels,
        "logits": [[int(v) for v in row] for row in logits],
    }
    text = json.dumps(payload, indent=1)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    click.echo(text)


@main.command("oracle")
@click.option("--images", "images_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--batch", type=int, default=None)
@click.option("--out", "out_path", default=None, type=click.Path())
@_guard
def cmd_oracle(images_path, model_path, batch, out_path):
    """Plaintext integer reference run: labels and exact logits."""
    model = _load_model_file(model_path)
    images = _load_images(images_path, batch, model.spec.input_scale)
    labels = []
    logits = []
    for im in images:
        out = nn_oracle.forward(model, im).reshape(-1)
        labels.append(nn_oracle.classify(out))
        logits.append([int(v) for v in out])
    payload = {"labels": labels, "logits": logits}
    text = json.dumps(payload, indent=1)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    click.echo(text)


@main.command("audit")
@click.option("--model", "model_name", required=True,
              help="architecture id (mnist_hcnn, cifar10_hcnn, toy_hcnn) or model file")
@_guard
def cmd_audit(model_name):
    """Per-layer and total HMultPlain / HSquare counts."""
    if os.path.exists(model_name):
        spec = _load_model_file(model_name).spec
    elif model_name in nn_oracle.NETWORKS:
        spec = nn_oracle.NETWORKS[model_name]()
    else:
        raise FormatError(f"unknown model '{model_name}'")
    audit = nn_oracle.count_ops(spec)
    width = max(len(name) for name, _, _ in audit.per_layer)
    click.echo(f"{'layer'.ljust(width)}  HMultPlain  HSquare")
    for name, mult, sq in audit.per_layer:
        click.echo(f"{name.ljust(width)}  {mult:>10,}  {sq:>7,}")
    click.echo(
        f"{'total'.ljust(width)}  {audit.total_mult_plain:>10,}  {audit.total_square:>7,}"
    )


@main.command("presets")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="write the active preset table as JSON")
@_guard
def cmd_presets(out_path):
    """Show the active parameter sets (HEFIR_PRESET_PATH overrides)."""
    for pid in presets.available_presets():
        p = presets.load_preset(pid)
        moduli = (
            str(p.plaintext_moduli[0])
            if p.channels == 1
            else f"{p.channels} primes ({p.plaintext_moduli[0]}, ...)"
        )
        click.echo(
            f"{pid:>4}: N=2^{p.ring_degree.bit_length() - 1}, log q={p.log_q}, "
            f"t={moduli}, depth={p.depth}, lambda={p.security_bits} "
            f"[{p.security_class}]"
        )
    if out_path:
        presets.export_presets(out_path)
        click.echo(f"wrote {out_path}")


@main.command("bench")
@click.option("--preset", required=True)
@click.option("--iterations", type=int, default=30, help="timed iterations (>=30 spec'd)")
@click.option("--seed", type=int, default=None)
@_guard
def cmd_bench(preset, iterations, seed):
    """Mean/median latency of each FHE primitive at the given preset."""
    p = presets.load_preset(preset)
    params = presets.build_context(p, 0)
    rng = _rng(seed)
    results = run_benchmarks(params, iterations, rng)
    click.echo(f"preset {p.id}: N={p.ring_degree}, log q={p.log_q}, t={params.t}")
    click.echo(f"{'primitive':<12} {'mean ms':>10} {'median ms':>10}")
    for name in ("KeyGen", "Enc", "Dec", "HAdd", "HMultPlain", "HSquare", "HMult"):
        mean, median = results[name]
        click.echo(f"{name:<12} {mean:>10.3f} {median:>10.3f}")
    if not (
        results["HMultPlain"][0] < results["HSquare"][0] <= results["HMult"][0]
    ):
        raise VerificationError(
            "benchmark ordering HMultPlain < HSquare <= HMult violated"
        )
    click.echo("ordering ok: HMultPlain < HSquare <= HMult")


def run_benchmarks(params: bfv.BfvParams, iterations: int, rng, warmup: int = 3):
    """Per-primitive latencies in milliseconds: {name: (mean, median)}.

    HMultPlain is timed on a full random plaintext polynomial (the general
    transform path); the engine's constant-weight fast path is cheaper
    still, so the published ordering holds a fortiori.
    """

    sk, pk, rlk = bfv.keygen(params, rng)
    pt = bfv.Plaintext(rng.integers(0, params.t, params.ring_degree), params.t)
    weight = bfv.Plaintext(rng.integers(0, params.t, params.ring_degree), params.t)
    c1 = bfv.encrypt(pk, pt, params, rng)
    c2 = bfv.encrypt(pk, pt, params, rng)

    def timed(fn, reps):
        times = []
        for i in range(warmup + reps):
            t0 = time.perf_counter()
            fn()
            dt = (time.perf_counter() - t0) * 1000.0
            if i >= warmup:
                times.append(dt)
        return statistics.fmean(times), statistics.median(times)

    out = {
        "KeyGen": timed(lambda: bfv.keygen(params, rng), iterations),
        "Enc": timed(lambda: bfv.encrypt(pk, pt, params, rng), iterations),
        "Dec": timed(lambda: bfv.decrypt(sk, c1, params), iterations),
        "HAdd": timed(lambda: bfv.hadd(c1, c2), iterations),
        "HMultPlain": timed(lambda: bfv.hmult_plain(c1, weight, params), iterations),
        "HSquare": timed(lambda: bfv.hsquare(c1, rlk, params), iterations),
        "HMult": timed(lambda: bfv.hmult(c1, c2, rlk, params), iterations),
    }
    return out


if __name__ == "__main__":
    main()
