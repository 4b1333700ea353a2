"""Plaintext integer reference network: the ground truth for every
homomorphic result, plus the two published architectures as data and the
uniform scalar weight quantizer.

All arithmetic is exact integer arithmetic.  Layers never divide: average
pooling is a plain window sum with the scale factor absorbing the window
size, and the square activation replaces ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .codec import ScaleTracker, round_half_away
from .errors import HefirError


class LayerKind(Enum):
    CONV = "conv"
    SQUARE = "square"
    POOL = "pool"
    FC = "fc"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    name: str
    filters: int = 0  # conv: output channels; fc: output count
    kernel: tuple = (0, 0)
    stride: tuple = (1, 1)
    padded: bool = False
    groups: int = 1
    weight_scale: int = 1
    extent: int = 0  # pool window edge
    recorded_mult_plain: int | None = None  # published audit figure, if any


def conv_layer(name, filters, kernel, stride, padded, weight_scale, groups=1, recorded=None):
    return LayerSpec(
        kind=LayerKind.CONV,
        name=name,
        filters=filters,
        kernel=kernel,
        stride=stride,
        padded=padded,
        groups=groups,
        weight_scale=weight_scale,
        recorded_mult_plain=recorded,
    )


def square_layer_spec(name):
    return LayerSpec(kind=LayerKind.SQUARE, name=name)


def pool_layer(name, extent, stride):
    return LayerSpec(kind=LayerKind.POOL, name=name, extent=extent, stride=(stride, stride))


def fc_layer(name, outputs, weight_scale, recorded=None):
    return LayerSpec(
        kind=LayerKind.FC,
        name=name,
        filters=outputs,
        weight_scale=weight_scale,
        recorded_mult_plain=recorded,
    )


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple  # (h, w, c)
    input_scale: int
    layers: tuple
    wide_values: bool = False  # intermediate values may exceed int64

    def layer_shapes(self):
        """Shape after each layer; validates compatibility."""
        h, w, c = self.input_shape
        shapes = []
        for layer in self.layers:
            if layer.kind is LayerKind.CONV:
                kh, kw = layer.kernel
                sh, sw = layer.stride
                ph = (kh - 1) // 2 if layer.padded else 0
                pw = (kw - 1) // 2 if layer.padded else 0
                h = (h + 2 * ph - kh) // sh + 1
                w = (w + 2 * pw - kw) // sw + 1
                if c % layer.groups or layer.filters % layer.groups:
                    raise HefirError(f"{layer.name}: groups do not divide channels")
                c = layer.filters
            elif layer.kind is LayerKind.POOL:
                sh, sw = layer.stride
                h = (h - layer.extent) // sh + 1
                w = (w - layer.extent) // sw + 1
            elif layer.kind is LayerKind.FC:
                h, w, c = 1, 1, layer.filters
            shapes.append((h, w, c))
        return shapes


def mnist_hcnn() -> NetworkSpec:
    """5-layer MNIST network: conv-square-conv-square-fc, scales 15/1/15/1/15.

    The second convolution applies 50 single-channel 5x5 filters, ten per
    input channel (groups=5), which is what makes its multiply count
    25 * 800.  Inputs are scaled by 4.
    """
    return NetworkSpec(
        name="mnist_hcnn",
        input_shape=(28, 28, 1),
        input_scale=4,
        layers=(
            conv_layer("conv1", 5, (5, 5), (2, 2), padded=False, weight_scale=15),
            square_layer_spec("square1"),
            conv_layer("conv2", 50, (5, 5), (2, 2), padded=False, weight_scale=15, groups=5),
            square_layer_spec("square2"),
            fc_layer("fc", 10, weight_scale=15),
        ),
    )


def cifar10_hcnn() -> NetworkSpec:
    """11-layer CIFAR-10 network with padding and average pooling.

    The recorded multiply counts on the weighted layers are the published
    audit figures for this architecture; they reflect the authors' measured
    operation counts and are not derivable from the layer geometry alone.
    """
    return NetworkSpec(
        name="cifar10_hcnn",
        input_shape=(32, 32, 3),
        input_scale=255,
        wide_values=True,
        layers=(
            conv_layer("conv1", 32, (3, 3), (1, 1), padded=True, weight_scale=10000,
                       recorded=589_824),
            square_layer_spec("square1"),
            pool_layer("pool1", 2, 2),
            conv_layer("conv2", 64, (3, 3), (1, 1), padded=True, weight_scale=4095,
                       recorded=2_594_048),
            square_layer_spec("square2"),
            pool_layer("pool2", 2, 2),
            conv_layer("conv3", 128, (3, 3), (1, 1), padded=True, weight_scale=10000,
                       recorded=3_308_544),
            square_layer_spec("square3"),
            pool_layer("pool3", 2, 2),
            fc_layer("fc1", 256, weight_scale=1023, recorded=457_398),
            fc_layer("fc2", 10, weight_scale=63, recorded=2_518),
        ),
    )


def toy_hcnn() -> NetworkSpec:
    """Small net for fast tests: 8x8 input, conv 2@3x3 s2, square, fc 3."""
    return NetworkSpec(
        name="toy_hcnn",
        input_shape=(8, 8, 1),
        input_scale=4,
        layers=(
            conv_layer("conv1", 2, (3, 3), (2, 2), padded=False, weight_scale=15),
            square_layer_spec("square1"),
            fc_layer("fc", 3, weight_scale=15),
        ),
    )


NETWORKS = {
    "mnist_hcnn": mnist_hcnn,
    "cifar10_hcnn": cifar10_hcnn,
    "toy_hcnn": toy_hcnn,
}


@dataclass
class QuantizedModel:
    """Integer weights for every weighted layer of a NetworkSpec.

    Conv weights: (filters, kh, kw, channels_per_group).
    FC weights: (outputs, flattened_input) over row-major (h, w, c) order.
    """

    spec: NetworkSpec
    bit_width: int
    weights: list  # aligned with spec.layers; None for square/pool

    def weighted_layers(self):
        for layer, w in zip(self.spec.layers, self.weights):
            if w is not None:
                yield layer, w


# ---------------------------------------------------------------------------
# quantizer


def quantize_weight(w: float, k: int) -> Fraction:
    """Uniform scalar quantizer: w_q = round(w * (2^k - 1)) / (2^k - 1).

    Values outside [-1, 1] are clamped to the endpoints first.
    """
    if k < 1:
        raise ValueError("bit width must be >= 1")
    levels = (1 << k) - 1
    w = max(-1.0, min(1.0, float(w)))
    scaled = w * levels
    j = int(scaled + 0.5) if scaled >= 0 else -int(-scaled + 0.5)
    return Fraction(j, levels)


def integerize(w_q: Fraction, weight_scale: int) -> int:
    """round(w_q * weight_scale), half away from zero, exact."""
    return round_half_away(w_q.numerator * weight_scale, w_q.denominator)


# ---------------------------------------------------------------------------
# layers


def _as_dtype(arr, wide: bool):
    return np.asarray(arr, dtype=object if wide else np.int64)


def conv2d(x: np.ndarray, layer: LayerSpec, weights: np.ndarray, wide=False) -> np.ndarray:
    """Exact integer convolution; zero padding; grouped filters."""
    x = _as_dtype(x, wide)
    h, w, c = x.shape
    f, kh, kw, cg = weights.shape
    if (kh, kw) != layer.kernel or f != layer.filters:
        raise HefirError(f"{layer.name}: weight tensor does not match layer")
    if c != cg * layer.groups:
        raise HefirError(f"{layer.name}: expected {cg * layer.groups} input channels, got {c}")
    sh, sw = layer.stride
    if layer.padded:
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        padded = np.zeros((h + 2 * ph, w + 2 * pw, c), dtype=x.dtype)
        padded[ph : ph + h, pw : pw + w, :] = x
        x = padded
        h, w = h + 2 * ph, w + 2 * pw
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    per_group = f // layer.groups
    wmat = _as_dtype(weights, wide).reshape(f, kh * kw * cg)
    out = np.zeros((oh, ow, f), dtype=x.dtype)
    for oy in range(oh):
        for ox in range(ow):
            window = x[oy * sh : oy * sh + kh, ox * sw : ox * sw + kw, :]
            for g in range(layer.groups):
                patch = window[:, :, g * cg : (g + 1) * cg].reshape(-1)
                rows = wmat[g * per_group : (g + 1) * per_group]
                out[oy, ox, g * per_group : (g + 1) * per_group] = rows @ patch
    return out


def fully_connected(x: np.ndarray, layer: LayerSpec, weights: np.ndarray, wide=False) -> np.ndarray:
    x = _as_dtype(x, wide).reshape(-1)
    weights = _as_dtype(weights, wide)
    if weights.shape[1] != x.shape[0] or weights.shape[0] != layer.filters:
        raise HefirError(f"{layer.name}: weight matrix does not match layer")
    return (weights @ x).reshape(1, 1, layer.filters)


def square_layer(x: np.ndarray) -> np.ndarray:
    return x * x


def avg_pool(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Window sums (the 1/n factor lives in the scale, never divided out)."""
    h, w, c = x.shape
    e = layer.extent
    sh, sw = layer.stride
    oh = (h - e) // sh + 1
    ow = (w - e) // sw + 1
    out = np.zeros((oh, ow, c), dtype=x.dtype)
    for oy in range(oh):
        for ox in range(ow):
            window = x[oy * sh : oy * sh + e, ox * sw : ox * sw + e, :]
            out[oy, ox, :] = window.sum(axis=(0, 1))
    return out


def forward(model: QuantizedModel, image: np.ndarray, observe=None) -> np.ndarray:
    """Run the integer network; returns the logits tensor (1, 1, outputs).

    `observe`, when given, is called with (layer_name, tensor) after every
    layer; used to record actual magnitude maxima.
    """
    wide = model.spec.wide_values
    x = _as_dtype(image, wide)
    if x.shape != model.spec.input_shape:
        raise HefirError(
            f"input shape {x.shape} != expected {model.spec.input_shape}"
        )
    for layer, weights in zip(model.spec.layers, model.weights):
        if layer.kind is LayerKind.CONV:
            x = conv2d(x, layer, weights, wide)
        elif layer.kind is LayerKind.SQUARE:
            x = square_layer(x)
        elif layer.kind is LayerKind.POOL:
            x = avg_pool(x, layer)
        elif layer.kind is LayerKind.FC:
            x = fully_connected(x, layer, weights, wide)
        if observe is not None:
            observe(layer.name, x)
    return x


def classify(logits) -> int:
    """Index of the largest logit; ties break to the lowest index."""
    flat = list(np.asarray(logits).reshape(-1))
    best = max(flat)
    return flat.index(best)


def capacity_certificate(
    model: QuantizedModel, t_total: int, max_input: float = 1.0
) -> ScaleTracker:
    """Run the exact-interval scale tracker over the model's actual weights.

    Raises CapacityError naming the first layer whose certified bound could
    reach t_total/2; otherwise returns the tracker with per-layer records.
    """
    tracker = ScaleTracker.for_input(t_total, model.spec.input_scale, max_input)
    for layer, weights in zip(model.spec.layers, model.weights):
        if layer.kind is LayerKind.CONV:
            per_filter = np.asarray(weights).reshape(layer.filters, -1)
            tracker.track_weighted(
                layer.name, per_filter, layer.weight_scale, layer.padded
            )
        elif layer.kind is LayerKind.FC:
            tracker.track_weighted(layer.name, weights, layer.weight_scale, False)
        elif layer.kind is LayerKind.SQUARE:
            tracker.track_square(layer.name)
        elif layer.kind is LayerKind.POOL:
            tracker.track_pool(layer.name, layer.extent)
    return tracker


# ---------------------------------------------------------------------------
# operation audit


@dataclass
class OpAudit:
    per_layer: list  # (name, mult_plain, square_count)

    @property
    def total_mult_plain(self) -> int:
        return sum(m for _, m, _ in self.per_layer)

    @property
    def total_square(self) -> int:
        return sum(s for _, _, s in self.per_layer)


def _conv_tap_count(layer: LayerSpec, in_shape) -> int:
    """Scheduled multiplies: in-bounds taps over all placements and filters."""
    h, w, c = in_shape
    kh, kw = layer.kernel
    sh, sw = layer.stride
    cg = c // layer.groups
    ph = (kh - 1) // 2 if layer.padded else 0
    pw = (kw - 1) // 2 if layer.padded else 0
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    taps = 0
    for oy in range(oh):
        rows = sum(1 for ky in range(kh) if 0 <= oy * sh + ky - ph < h)
        for ox in range(ow):
            cols = sum(1 for kx in range(kw) if 0 <= ox * sw + kx - pw < w)
            taps += rows * cols
    return taps * cg * layer.filters


def count_ops(spec: NetworkSpec, use_recorded: bool = True) -> OpAudit:
    """Multiply counts per layer.

    Weighted layers with a recorded (published) figure report it when
    `use_recorded`; otherwise counts are enumerated from the geometry, which
    is exactly what the evaluation engine schedules.
    """
    per_layer = []
    in_shape = spec.input_shape
    for layer, out_shape in zip(spec.layers, spec.layer_shapes()):
        mult = 0
        squares = 0
        if layer.kind is LayerKind.CONV:
            if use_recorded and layer.recorded_mult_plain is not None:
                mult = layer.recorded_mult_plain
            else:
                mult = _conv_tap_count(layer, in_shape)
        elif layer.kind is LayerKind.FC:
            if use_recorded and layer.recorded_mult_plain is not None:
                mult = layer.recorded_mult_plain
            else:
                mult = layer.filters * in_shape[0] * in_shape[1] * in_shape[2]
        elif layer.kind is LayerKind.SQUARE:
            squares = in_shape[0] * in_shape[1] * in_shape[2]
        per_layer.append((layer.name, mult, squares))
        in_shape = out_shape
    return OpAudit(per_layer)
