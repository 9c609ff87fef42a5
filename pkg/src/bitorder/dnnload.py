"""DNN workloads: layer shapes, weights, reference execution and pair streams.

Tensors are channel-first (C, H, W) with no batch axis. Convolutions are
unpadded; a neuron is one output element, numbered channel-major
(``oc * out_h * out_w + row * out_w + col``). Its operands are the kernel
volume flattened channel, row, column.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bitcore import fixed8_raw, fixed8_scale, float32_raw, quantize_fixed8_array
from .ordering import PairBlock


class ShapeError(ValueError):
    pass


class LayerKind(enum.Enum):
    CONV2D = "conv2d"
    LINEAR = "linear"
    POOL = "pool"
    ACTIVATION = "activation"


class Precision(enum.Enum):
    FLOAT32 = "float32"
    FIXED8 = "fixed8"

    @property
    def word_width(self) -> int:
        return 32 if self is Precision.FLOAT32 else 8

    @classmethod
    def parse(cls, value) -> "Precision":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"float32": "float32", "fp32": "float32", "fixed8": "fixed8", "int8": "fixed8"}
        if key not in aliases:
            raise ValueError(f"unknown precision {value!r}; use float32 or fixed8")
        return cls(aliases[key])


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int
    out_channels: int
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    input_h: int = 1
    input_w: int = 1
    name: str = ""

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_h, self.kernel_w,
               self.stride, self.input_h, self.input_w) < 1:
            raise ShapeError(f"{self.name or self.kind.value}: dimensions must be positive")
        if self.kind in (LayerKind.POOL, LayerKind.ACTIVATION) and self.in_channels != self.out_channels:
            raise ShapeError(f"{self.name}: {self.kind.value} layers keep the channel count")
        if self.kernel_h > self.input_h or self.kernel_w > self.input_w:
            raise ShapeError(f"{self.name or self.kind.value}: kernel larger than input, empty output")

    @property
    def output_h(self) -> int:
        return (self.input_h - self.kernel_h) // self.stride + 1

    @property
    def output_w(self) -> int:
        return (self.input_w - self.kernel_w) // self.stride + 1

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.in_channels, self.input_h, self.input_w)

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.output_h, self.output_w)

    @property
    def has_weights(self) -> bool:
        return self.kind in (LayerKind.CONV2D, LayerKind.LINEAR)

    @property
    def kernel_volume(self) -> int:
        return self.in_channels * self.kernel_h * self.kernel_w

    @property
    def fan_in(self) -> int:
        return self.kernel_volume

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind is LayerKind.CONV2D:
            return (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
        if self.kind is LayerKind.LINEAR:
            return (self.out_channels, self.in_channels)
        return ()

    @property
    def n_neurons(self) -> int:
        return self.out_channels * self.output_h * self.output_w

    @property
    def mac_count(self) -> int:
        return self.n_neurons * self.kernel_volume if self.has_weights else 0


def conv2d(name, cin, cout, k, h, w, stride=1) -> LayerSpec:
    return LayerSpec(LayerKind.CONV2D, cin, cout, k, k, stride, h, w, name)


def linear(name, fin, fout) -> LayerSpec:
    return LayerSpec(LayerKind.LINEAR, fin, fout, name=name)


def maxpool(name, c, h, w, k=2) -> LayerSpec:
    return LayerSpec(LayerKind.POOL, c, c, k, k, k, h, w, name)


def relu(name, c, h, w) -> LayerSpec:
    return LayerSpec(LayerKind.ACTIVATION, c, c, 1, 1, 1, h, w, name)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[LayerSpec, ...]
    precision: Precision = Precision.FLOAT32

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "precision", Precision.parse(self.precision))
        if not self.layers:
            raise ShapeError("a model needs at least one layer")
        self.check_composition()

    def check_composition(self) -> bool:
        prev = self.layers[0].input_shape
        for layer in self.layers:
            if layer.kind is LayerKind.LINEAR:
                flat = prev[0] * prev[1] * prev[2]
                if flat != layer.in_channels:
                    raise ShapeError(f"{layer.name}: expects {layer.in_channels} features, gets {flat}")
            elif layer.input_shape != prev:
                raise ShapeError(f"{layer.name}: expects input {layer.input_shape}, gets {prev}")
            prev = layer.output_shape
        return True

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return self.layers[0].input_shape

    @property
    def weighted_layers(self) -> list[LayerSpec]:
        return [l for l in self.layers if l.has_weights]

    def with_precision(self, precision) -> "ModelSpec":
        return ModelSpec(self.name, self.layers, Precision.parse(precision))

    def describe(self) -> dict:
        return {
            "name": self.name,
            "precision": self.precision.value,
            "input_shape": list(self.input_shape),
            "layers": [
                {"name": l.name, "kind": l.kind.value, "in": l.in_channels, "out": l.out_channels,
                 "kernel": [l.kernel_h, l.kernel_w], "stride": l.stride,
                 "input_hw": [l.input_h, l.input_w]}
                for l in self.layers
            ],
        }


def make_lenet(precision=Precision.FLOAT32) -> ModelSpec:
    layers = [
        conv2d("conv1", 1, 6, 5, 32, 32), relu("relu1", 6, 28, 28), maxpool("pool1", 6, 28, 28),
        conv2d("conv2", 6, 16, 5, 14, 14), relu("relu2", 16, 10, 10), maxpool("pool2", 16, 10, 10),
        linear("fc1", 400, 120), relu("relu3", 120, 1, 1),
        linear("fc2", 120, 84), relu("relu4", 84, 1, 1),
        linear("fc3", 84, 10),
    ]
    return ModelSpec("lenet", tuple(layers), Precision.parse(precision))


def make_darknet_mini(precision=Precision.FLOAT32) -> ModelSpec:
    layers = []
    c, hw = 3, 64
    for i, cout in enumerate((16, 32, 64, 128), start=1):
        layers.append(conv2d(f"conv{i}", c, cout, 3, hw, hw))
        hw -= 2
        layers.append(relu(f"relu{i}", cout, hw, hw))
        layers.append(maxpool(f"pool{i}", cout, hw, hw))
        c, hw = cout, hw // 2
    layers.append(linear("fc", c * hw * hw, 10))
    return ModelSpec("darknet-mini", tuple(layers), Precision.parse(precision))


MODELS = {"lenet": make_lenet, "darknet-mini": make_darknet_mini}


def make_model(name: str, precision=Precision.FLOAT32) -> ModelSpec:
    try:
        return MODELS[name](precision)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


# --------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightSource:
    """``random`` draws from a seeded generator; ``file`` reads raw float32 data."""

    mode: str = "random"
    seed: int = 0
    path: str | None = None
    distribution: str = "uniform"

    def __post_init__(self):
        if self.mode not in ("random", "file"):
            raise ValueError(f"weight source mode must be 'random' or 'file', got {self.mode!r}")
        if self.mode == "file" and not self.path:
            raise ValueError("file weight source needs a path")
        if self.distribution not in ("uniform", "normal"):
            raise ValueError(f"unknown init distribution {self.distribution!r}")

    @classmethod
    def parse(cls, text: str, seed: int = 0, distribution: str = "uniform") -> "WeightSource":
        if text.startswith("file:"):
            return cls("file", seed, text[5:], distribution)
        if text == "random":
            return cls("random", seed, None, distribution)
        raise ValueError(f"weights must be 'random' or 'file:<path>', got {text!r}")

    def describe(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "path": self.path,
                "distribution": self.distribution}


def init_bound(fan_in: int) -> float:
    return 1.0 / np.sqrt(fan_in)


def init_weights(model: ModelSpec, source: WeightSource) -> list[np.ndarray]:
    """One float32 tensor per weighted layer, in layer order.

    Random weights are uniform on ``+-1/sqrt(fan_in)``, or normal with that
    standard deviation when ``distribution == "normal"``.
    """
    if source.mode == "file":
        return load_weights(source.path, model)
    rng = np.random.default_rng(source.seed)
    out = []
    for layer in model.weighted_layers:
        bound = init_bound(layer.fan_in)
        if source.distribution == "uniform":
            w = rng.uniform(-bound, bound, size=layer.weight_shape)
        else:
            w = rng.normal(0.0, bound, size=layer.weight_shape)
        out.append(w.astype(np.float32))
    return out


def manifest_path(path) -> Path:
    return Path(str(path) + ".manifest")


def save_weights(path, model: ModelSpec, weights: Sequence[np.ndarray]) -> None:
    """Concatenated little-endian float32 data plus ``<path>.manifest``."""
    layers = model.weighted_layers
    if len(layers) != len(weights):
        raise ShapeError(f"{len(layers)} weighted layers but {len(weights)} tensors")
    lines = []
    with open(path, "wb") as fh:
        for layer, w in zip(layers, weights):
            if tuple(w.shape) != layer.weight_shape:
                raise ShapeError(f"{layer.name}: tensor {w.shape} != {layer.weight_shape}")
            fh.write(np.asarray(w, dtype="<f4").tobytes())
            lines.append(" ".join([layer.name] + [str(d) for d in layer.weight_shape]))
    manifest_path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> list[tuple[str, tuple[int, ...]]]:
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, *dims = line.split()
        entries.append((name, tuple(int(d) for d in dims)))
    return entries


def load_weights(path, model: ModelSpec) -> list[np.ndarray]:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"weight file not found: {path}")
    data = np.fromfile(path, dtype="<f4")
    layers = model.weighted_layers
    shapes = [l.weight_shape for l in layers]
    mpath = manifest_path(path)
    if mpath.exists():
        entries = read_manifest(mpath)
        if [s for _, s in entries] != shapes:
            raise ShapeError(f"manifest shapes {[s for _, s in entries]} do not match model {shapes}")
    expected = sum(int(np.prod(s)) for s in shapes)
    if data.size != expected:
        raise ShapeError(f"weight file holds {data.size} values, model needs {expected}")
    out, offset = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(data[offset:offset + n].reshape(s).astype(np.float32))
        offset += n
    return out


def make_input(model: ModelSpec, seed: int = 0) -> np.ndarray:
    """Synthetic image in [0, 1), float32."""
    rng = np.random.default_rng([seed, 0x1A9])
    return rng.random(model.input_shape).astype(np.float32)


# --------------------------------------------------------------------------
# reference execution


def _patch_index(layer: LayerSpec) -> np.ndarray:
    """Flat input indices, shape (out_h*out_w, kernel_volume)."""
    c, h, w = layer.input_shape
    idx = np.arange(c * h * w).reshape(c, h, w)
    rows = np.arange(layer.output_h) * layer.stride
    cols = np.arange(layer.output_w) * layer.stride
    kr = np.arange(layer.kernel_h)
    kc = np.arange(layer.kernel_w)
    # (oh, ow, c, kh, kw)
    r = rows[:, None, None, None, None] + kr[None, None, None, :, None]
    q = cols[None, :, None, None, None] + kc[None, None, None, None, :]
    ch = np.arange(c)[None, None, :, None, None]
    gathered = idx[ch, r, q]
    return gathered.reshape(layer.output_h * layer.output_w, layer.kernel_volume)


def operand_matrices(layer: LayerSpec, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-neuron operand rows: (inputs, weights), each (n_neurons, kernel_volume)."""
    if not layer.has_weights:
        raise ValueError(f"{layer.name} has no weights")
    if tuple(w.shape) != layer.weight_shape:
        raise ShapeError(f"{layer.name}: weights {w.shape} != {layer.weight_shape}")
    flat = np.asarray(x).reshape(-1)
    if layer.kind is LayerKind.LINEAR:
        if flat.size != layer.in_channels:
            raise ShapeError(f"{layer.name}: got {flat.size} features, expects {layer.in_channels}")
        ins = np.broadcast_to(flat, (layer.out_channels, flat.size))
        return ins, np.asarray(w)
    if tuple(np.shape(x)) != layer.input_shape:
        raise ShapeError(f"{layer.name}: input {np.shape(x)} != {layer.input_shape}")
    patches = flat[_patch_index(layer)]
    pixels = patches.shape[0]
    wk = np.asarray(w).reshape(layer.out_channels, layer.kernel_volume)
    ins = np.broadcast_to(patches, (layer.out_channels,) + patches.shape).reshape(-1, layer.kernel_volume)
    wts = np.repeat(wk, pixels, axis=0)
    return ins, wts


def _pool(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    c = layer.in_channels
    oh, ow, k, s = layer.output_h, layer.output_w, layer.kernel_h, layer.stride
    out = np.full((c, oh, ow), -np.inf, dtype=x.dtype)
    for i in range(k):
        for j in range(layer.kernel_w):
            out = np.maximum(out, x[:, i:i + s * oh:s, j:j + s * ow:s][:, :oh, :ow])
    return out


@dataclass
class LayerTrace:
    layer: LayerSpec
    input: np.ndarray
    output: np.ndarray
    input_scale: float | None = None
    weight_scale: float | None = None
    accumulators: np.ndarray | None = None


@dataclass
class ForwardTrace:
    output: np.ndarray
    layers: list[LayerTrace] = field(default_factory=list)


def _accumulate(ins: np.ndarray, wts: np.ndarray, precision: Precision,
                perm: np.ndarray | None = None):
    """Row-wise dot products; ``perm`` reorders each row's pairs before summing."""
    if perm is not None:
        ins = np.take_along_axis(np.ascontiguousarray(ins), perm, axis=1)
        wts = np.take_along_axis(np.ascontiguousarray(wts), perm, axis=1)
    if precision is Precision.FIXED8:
        return np.einsum("ij,ij->i", ins.astype(np.int64), wts.astype(np.int64))
    # float32 operands, wide accumulator, summed strictly left to right
    prod = ins.astype(np.float64) * wts.astype(np.float64)
    return np.cumsum(prod, axis=1)[:, -1] if prod.shape[1] else np.zeros(prod.shape[0])


def forward_trace(model: ModelSpec, weights: Sequence[np.ndarray], x: np.ndarray,
                  precision=None, pair_perms: dict | None = None) -> ForwardTrace:
    """Evaluate ``model`` keeping every layer's input.

    Fixed-8 layers quantise input and weights per tensor and accumulate
    exactly in integers. ``pair_perms`` maps weighted-layer name to a
    (n_neurons, kernel_volume) permutation applied to each neuron's pairs.
    """
    precision = Precision.parse(precision or model.precision)
    x = np.asarray(x, dtype=np.float32)
    if tuple(x.shape) != model.input_shape:
        raise ShapeError(f"input {x.shape} != model input {model.input_shape}")
    weights = list(weights)
    if len(weights) != len(model.weighted_layers):
        raise ShapeError(f"{len(model.weighted_layers)} weighted layers, {len(weights)} tensors")
    trace = ForwardTrace(output=x)
    wi = 0
    for layer in model.layers:
        lt = LayerTrace(layer, x, x)
        if layer.has_weights:
            w = weights[wi]
            wi += 1
            perm = (pair_perms or {}).get(layer.name)
            if precision is Precision.FIXED8:
                sx = fixed8_scale(x)
                sw = fixed8_scale(w)
                qi, qw = operand_matrices(layer, quantize_fixed8_array(x, sx), quantize_fixed8_array(w, sw))
                acc = _accumulate(qi, qw, precision, perm)
                y = (acc * (sx * sw)).astype(np.float32)
                lt.input_scale, lt.weight_scale, lt.accumulators = sx, sw, acc
            else:
                ins, wts = operand_matrices(layer, x, w)
                acc = _accumulate(ins, wts, precision, perm)
                y = acc.astype(np.float32)
                lt.accumulators = acc
            x = y.reshape(layer.output_shape)
        elif layer.kind is LayerKind.POOL:
            x = _pool(layer, x)
        else:
            x = np.maximum(x, np.float32(0))
        lt.output = x
        trace.layers.append(lt)
    trace.output = x
    return trace


def reference_forward(model: ModelSpec, weights: Sequence[np.ndarray], x: np.ndarray,
                      precision=None, pair_perms: dict | None = None) -> np.ndarray:
    return forward_trace(model, weights, x, precision, pair_perms).output


# --------------------------------------------------------------------------
# pair streams


def raw_operands(layer: LayerSpec, x: np.ndarray, w: np.ndarray, precision) -> tuple[np.ndarray, np.ndarray]:
    """Raw bit patterns of each neuron's (inputs, weights) in the given precision."""
    precision = Precision.parse(precision)
    if precision is Precision.FIXED8:
        xi = fixed8_raw(quantize_fixed8_array(x, fixed8_scale(x)))
        wi = fixed8_raw(quantize_fixed8_array(w, fixed8_scale(w)))
        ins, wts = operand_matrices(layer, xi.reshape(np.shape(x)), wi.reshape(np.shape(w)))
    else:
        ins, wts = operand_matrices(layer, float32_raw(np.reshape(x, (1, -1))).reshape(np.shape(x)),
                                    float32_raw(np.reshape(w, (1, -1))).reshape(np.shape(w)))
    return np.ascontiguousarray(ins, dtype=np.uint32), np.ascontiguousarray(wts, dtype=np.uint32)


def neuron_pair_stream(layer: LayerSpec, x: np.ndarray, w: np.ndarray, precision=Precision.FLOAT32) -> list[PairBlock]:
    precision = Precision.parse(precision)
    ins, wts = raw_operands(layer, x, w, precision)
    return [PairBlock(tuple(a), tuple(b), precision.word_width, n)
            for n, (a, b) in enumerate(zip(ins.tolist(), wts.tolist()))]
