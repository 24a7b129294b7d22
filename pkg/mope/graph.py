"""
Layer-list networks: specification, parameter storage, forward/backward
execution and the binary weight file format.

A network is an ordered list of layers; layer i consumes the output of layer
i - 1 (the network input for i = 0). Skip layers additionally read the output
of an earlier layer, named by its index.
"""

import logging
import struct
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from mope import ops
from mope.exceptions import (
    ShapeError,
    SpecError,
    TapeError,
    UnknownTensorError,
    WeightFormatError,
    WeightTruncatedError,
)
from mope.settings import LEAKY_SLOPE, WEIGHTS_MAGIC, WEIGHTS_VERSION

logger = logging.getLogger(__name__)

LAYER_KINDS = (
    "conv",
    "conv_transpose",
    "instance_norm",
    "activation",
    "box_filter",
    "resize",
    "add_skip",
    "concat_skip",
    "global_pool",
)
ROLE_ORDER = ("weight", "bias", "gamma", "beta")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: Optional[int] = None
    channels: Optional[int] = None
    kernel: int = 3
    stride: int = 1
    pad: int = 0
    bias: bool = True
    activation: Optional[str] = None
    slope: float = LEAKY_SLOPE
    # skip source for add/concat, size-matching target for conv_transpose
    source: Optional[int] = None
    size: Optional[Tuple[int, int]] = None
    mode: str = "bilinear"

    @property
    def learnable(self):
        return self.kind in ("conv", "conv_transpose", "instance_norm")


def conv(in_channels, channels, kernel=3, stride=1, pad=None, bias=True):
    return LayerSpec("conv", in_channels=in_channels, channels=channels, kernel=kernel,
                     stride=stride, pad=kernel // 2 if pad is None else pad, bias=bias)


def conv_transpose(in_channels, channels, kernel=3, stride=2, pad=None, match=None):
    return LayerSpec("conv_transpose", in_channels=in_channels, channels=channels, kernel=kernel,
                     stride=stride, pad=kernel // 2 if pad is None else pad, source=match)


def instance_norm():
    return LayerSpec("instance_norm")


def act(kind, slope=LEAKY_SLOPE):
    return LayerSpec("activation", activation=kind, slope=slope)


def leaky_relu(slope=LEAKY_SLOPE):
    return act("leaky_relu", slope)


def sigmoid():
    return act("sigmoid")


def box_filter():
    return LayerSpec("box_filter")


def resize(height, width, mode="bilinear"):
    return LayerSpec("resize", size=(height, width), mode=mode)


def add_skip(source):
    return LayerSpec("add_skip", source=source)


def concat_skip(source):
    return LayerSpec("concat_skip", source=source)


def global_pool():
    return LayerSpec("global_pool")


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_channels: int
    layers: Tuple[LayerSpec, ...] = field(default_factory=tuple)


def channel_plan(spec):
    """Output channel count of every layer; raises SpecError at the first bad layer."""
    channels = []
    c = spec.input_channels
    for i, layer in enumerate(spec.layers):
        if layer.kind not in LAYER_KINDS:
            raise SpecError(f"layer {i}: unknown kind {layer.kind!r}", i)
        if layer.kind in ("conv", "conv_transpose"):
            if layer.in_channels is not None and layer.in_channels != c:
                raise SpecError(
                    f"layer {i}: {layer.kind} expects {layer.in_channels} input channels but receives {c}", i
                )
            if not layer.channels or layer.channels < 1:
                raise SpecError(f"layer {i}: {layer.kind} needs a positive output channel count", i)
            if layer.kernel % 2 == 0:
                raise SpecError(f"layer {i}: kernel size {layer.kernel} is not odd", i)
            if layer.kind == "conv_transpose" and layer.source is not None:
                _check_source(i, layer)
            c = layer.channels
        elif layer.kind == "activation":
            if layer.activation not in ops.ACTIVATIONS:
                raise SpecError(f"layer {i}: unknown activation {layer.activation!r}", i)
        elif layer.kind == "resize":
            if not layer.size or min(layer.size) < 1 or layer.mode not in ops.RESIZE_MODES:
                raise SpecError(f"layer {i}: resize needs a positive size and a known mode", i)
        elif layer.kind == "add_skip":
            _check_source(i, layer)
            if channels[layer.source] != c:
                raise SpecError(
                    f"layer {i}: add_skip from layer {layer.source} has {channels[layer.source]} "
                    f"channels, expected {c}", i
                )
        elif layer.kind == "concat_skip":
            _check_source(i, layer)
            c += channels[layer.source]
        channels.append(c)
    return channels


def _check_source(i, layer):
    if layer.source is None or not 0 <= layer.source < i:
        raise SpecError(f"layer {i}: {layer.kind} source {layer.source} must name an earlier layer", i)


def parameter_shapes(spec):
    """Map of (layer index, role) -> shape for every learnable tensor."""
    shapes = {}
    c = spec.input_channels
    for i, (layer, c_out) in enumerate(zip(spec.layers, channel_plan(spec))):
        k = layer.kernel
        if layer.kind == "conv":
            shapes[(i, "weight")] = (c_out, c, k, k)
        elif layer.kind == "conv_transpose":
            shapes[(i, "weight")] = (c, c_out, k, k)
        elif layer.kind == "instance_norm":
            shapes[(i, "gamma")] = (c_out,)
            shapes[(i, "beta")] = (c_out,)
        if layer.kind in ("conv", "conv_transpose") and layer.bias:
            shapes[(i, "bias")] = (c_out,)
        c = c_out
    return shapes


def infer_shapes(spec, height, width, batch=1):
    """Output shape of every layer for an input of the given spatial size."""
    plan = channel_plan(spec)
    shapes = []
    h, w = height, width
    for i, (layer, c) in enumerate(zip(spec.layers, plan)):
        if layer.kind == "conv":
            h = ops.conv_output_size(h, layer.kernel, layer.stride, layer.pad)
            w = ops.conv_output_size(w, layer.kernel, layer.stride, layer.pad)
        elif layer.kind == "conv_transpose":
            if layer.source is not None:
                h, w = shapes[layer.source][2:]
            else:
                h = ops.conv_transpose_output_size(h, layer.kernel, layer.stride, layer.pad)
                w = ops.conv_transpose_output_size(w, layer.kernel, layer.stride, layer.pad)
        elif layer.kind == "resize":
            h, w = layer.size
        elif layer.kind == "global_pool":
            h, w = 1, 1
        elif layer.kind in ("add_skip", "concat_skip") and shapes[layer.source][2:] != (h, w):
            raise ShapeError(
                f"layer {i}: skip from layer {layer.source} has spatial size "
                f"{shapes[layer.source][2:]}, expected {(h, w)}"
            )
        if h < 1 or w < 1:
            raise ShapeError(f"layer {i}: spatial size collapses to {h}x{w}")
        shapes.append((batch, c, h, w))
    return shapes


class ParamStore:
    """Named tensors keyed by (layer index, role)."""

    def __init__(self, tensors=None):
        self._tensors = dict(tensors or {})

    @staticmethod
    def _order(key):
        index, role = key
        return (index, ROLE_ORDER.index(role) if role in ROLE_ORDER else len(ROLE_ORDER), role)

    @staticmethod
    def tensor_name(key):
        return f"{key[0]}.{key[1]}"

    @staticmethod
    def parse_name(name):
        index, _, role = name.partition(".")
        if not index.isdigit() or role not in ROLE_ORDER:
            raise UnknownTensorError(name)
        return int(index), role

    def __getitem__(self, key):
        return self._tensors[key]

    def __setitem__(self, key, value):
        self._tensors[key] = value

    def __contains__(self, key):
        return key in self._tensors

    def __len__(self):
        return len(self._tensors)

    def __iter__(self):
        return iter(self.keys())

    def keys(self):
        return sorted(self._tensors, key=self._order)

    def items(self):
        return [(key, self._tensors[key]) for key in self.keys()]

    def get(self, key, default=None):
        return self._tensors.get(key, default)

    def copy(self):
        return ParamStore({key: value.copy() for key, value in self._tensors.items()})

    def astype(self, dtype):
        return ParamStore({key: value.astype(dtype) for key, value in self._tensors.items()})

    def zeros_like(self):
        return ParamStore({key: np.zeros_like(value) for key, value in self._tensors.items()})

    def num_values(self):
        return int(sum(value.size for value in self._tensors.values()))

    def equals(self, other):
        """Bit-exact comparison of names, dtypes, shapes and payloads."""
        if self.keys() != other.keys():
            return False
        for key, value in self.items():
            theirs = other[key]
            if value.dtype != theirs.dtype or value.shape != theirs.shape:
                return False
            if value.tobytes() != theirs.tobytes():
                return False
        return True

    def __repr__(self):
        return f"<ParamStore {len(self)} tensors, {self.num_values()} values>"


class Network:
    """A validated NetworkSpec."""

    def __init__(self, spec):
        self.spec = spec
        self.channels = channel_plan(spec)
        self.param_shapes = parameter_shapes(spec)
        self.skip_sources = {layer.source for layer in spec.layers if layer.source is not None}

    @property
    def name(self):
        return self.spec.name

    @property
    def output_channels(self):
        return self.channels[-1] if self.channels else self.spec.input_channels

    def __repr__(self):
        return f"<Network {self.name}: {len(self.spec.layers)} layers>"


def build(spec, seed):
    """Validate `spec` and initialize its parameters deterministically from `seed`.

    Convolution weights are He-normal with variance 2 / (k^2 * c_in), biases
    zero, instance norm gamma one and beta zero.
    """
    network = Network(spec)
    rng = np.random.default_rng(seed)
    params = ParamStore()
    for key, shape in sorted(network.param_shapes.items(), key=lambda kv: ParamStore._order(kv[0])):
        index, role = key
        layer = spec.layers[index]
        if role == "weight":
            c_in = shape[1] if layer.kind == "conv" else shape[0]
            std = np.sqrt(2.0 / (layer.kernel * layer.kernel * c_in))
            params[key] = (rng.standard_normal(shape) * std).astype(np.float32)
        elif role == "gamma":
            params[key] = np.ones(shape, dtype=np.float32)
        else:
            params[key] = np.zeros(shape, dtype=np.float32)
    logger.debug("Built %s with %d parameters", spec.name, params.num_values())
    return network, params


@dataclass
class Model:
    """A network together with the parameters it runs with."""

    network: Network
    params: ParamStore

    @property
    def name(self):
        return self.network.name

    def __call__(self, x):
        return forward(self.network, self.params, x)[0]


def build_model(spec, seed):
    return Model(*build(spec, seed))


@dataclass
class Tape:
    network_name: str
    activations: list


def _conv_params(index, layer, params, dtype):
    bias = params.get((index, "bias"))
    if bias is None:
        bias = np.zeros(layer.channels, dtype=dtype)
    return ops.ConvParams(params[(index, "weight")], bias, layer.stride, layer.pad)


def _output_pad(layer, x, acts):
    if layer.source is None:
        return 0
    target = acts[layer.source + 1].shape[2:]
    return tuple(
        want - ops.conv_transpose_output_size(have, layer.kernel, layer.stride, layer.pad)
        for want, have in zip(target, x.shape[2:])
    )


def _layer_forward(index, layer, params, x, acts):
    kind = layer.kind
    if kind == "conv":
        return ops.conv2d(x, _conv_params(index, layer, params, x.dtype))
    if kind == "conv_transpose":
        p = _conv_params(index, layer, params, x.dtype)
        return ops.conv_transpose2d(x, p, _output_pad(layer, x, acts))
    if kind == "instance_norm":
        return ops.instance_norm(x, params[(index, "gamma")], params[(index, "beta")])
    if kind == "activation":
        return ops.activation(x, layer.activation, layer.slope)
    if kind == "box_filter":
        return ops.box_filter3(x)
    if kind == "resize":
        return ops.resize(x, layer.size[0], layer.size[1], layer.mode)
    if kind == "add_skip":
        return ops.elementwise_add(x, acts[layer.source + 1])
    if kind == "concat_skip":
        return ops.concat_channels(x, acts[layer.source + 1])
    if kind == "global_pool":
        return ops.global_avg_pool(x)
    raise SpecError(f"layer {index}: unknown kind {kind!r}", index)


def forward(network, params, x, record_tape=False):
    """Run the network; returns (output, tape) with tape None unless requested."""
    x = ops.as_tensor(x)
    if x.shape[1] != network.spec.input_channels:
        raise ShapeError(
            f"{network.name}: input has {x.shape[1]} channels, expected {network.spec.input_channels}"
        )
    acts = [x]
    for index, layer in enumerate(network.spec.layers):
        acts.append(_layer_forward(index, layer, params, acts[index], acts))
        if not record_tape and index - 1 not in network.skip_sources:
            acts[index] = None
    tape = Tape(network.name, acts) if record_tape else None
    return acts[-1], tape


def _accumulate(current, grad):
    return grad if current is None else current + grad


def backward(network, params, tape, grad_out):
    """Gradients of every learnable tensor plus the gradient wrt the network input."""
    if tape is None:
        raise TapeError("backward needs a tape recorded by forward(..., record_tape=True)")
    layers = network.spec.layers
    if tape.network_name != network.name or len(tape.activations) != len(layers) + 1:
        raise TapeError(f"tape was recorded by {tape.network_name!r}, not {network.name!r}")
    acts = tape.activations
    if grad_out.shape != acts[-1].shape:
        raise ShapeError(f"{network.name}: grad_out shape {grad_out.shape} != output shape {acts[-1].shape}")

    grads = ParamStore()
    pending = [None] * (len(layers) + 1)
    pending[-1] = grad_out
    for index in reversed(range(len(layers))):
        layer, x, g = layers[index], acts[index], pending[index + 1]
        kind = layer.kind
        if kind == "conv":
            res = ops.conv2d_backward(x, _conv_params(index, layer, params, x.dtype), g)
        elif kind == "conv_transpose":
            p = _conv_params(index, layer, params, x.dtype)
            res = ops.conv_transpose2d_backward(x, p, g, _output_pad(layer, x, acts))
        if kind in ("conv", "conv_transpose"):
            grads[(index, "weight")] = res.grad_weight
            if layer.bias:
                grads[(index, "bias")] = res.grad_bias
            grad_in = res.grad_input
        elif kind == "instance_norm":
            res = ops.instance_norm_backward(x, params[(index, "gamma")], g)
            grads[(index, "gamma")] = res.grad_gamma
            grads[(index, "beta")] = res.grad_beta
            grad_in = res.grad_input
        elif kind == "activation":
            grad_in = ops.activation_backward(x, g, layer.activation, layer.slope)
        elif kind == "box_filter":
            grad_in = ops.box_filter3_backward(x.shape, g)
        elif kind == "resize":
            grad_in = ops.resize_backward(x.shape, g, layer.mode)
        elif kind == "add_skip":
            grad_in, grad_skip = ops.elementwise_add_backward(g)
            pending[layer.source + 1] = _accumulate(pending[layer.source + 1], grad_skip)
        elif kind == "concat_skip":
            grad_in, grad_skip = ops.concat_channels_backward(g, x.shape[1])
            pending[layer.source + 1] = _accumulate(pending[layer.source + 1], grad_skip)
        elif kind == "global_pool":
            grad_in = ops.global_avg_pool_backward(x.shape, g)
        pending[index] = _accumulate(pending[index], grad_in)
    return grads, pending[0]


def save_weights(params, path):
    """Write `params` in the little-endian MOPE weight format."""
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(params)))
        for key, tensor in params.items():
            name = ParamStore.tensor_name(key).encode("utf-8")
            data = np.ascontiguousarray(tensor, dtype="<f4")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
    logger.debug("Saved %d tensors to %s", len(params), path)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, size, tensor_name):
        if self.pos + size > len(self.buf):
            raise WeightTruncatedError(tensor_name)
        chunk = self.buf[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt, tensor_name):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), tensor_name))


def load_weights(path, network=None):
    """Read a MOPE weight file; with `network` given, names and shapes are checked against it."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read())
    if reader.take(min(len(WEIGHTS_MAGIC), len(reader.buf)), "<header>") != WEIGHTS_MAGIC:
        raise WeightFormatError(f"{path}: bad magic bytes, not a MOPE weight file")
    version, count = reader.unpack("<II", "<header>")
    if version != WEIGHTS_VERSION:
        raise WeightFormatError(f"{path}: unsupported format version {version}")

    expected = network.param_shapes if network is not None else None
    params = ParamStore()
    for position in range(count):
        placeholder = f"<tensor #{position}>"
        (name_len,) = reader.unpack("<H", placeholder)
        try:
            name = reader.take(name_len, placeholder).decode("utf-8")
        except UnicodeDecodeError:
            raise WeightFormatError(f"{path}: {placeholder} name is not valid UTF-8") from None
        key = ParamStore.parse_name(name)
        if expected is not None and key not in expected:
            raise UnknownTensorError(name, f"{path}: tensor {name!r} does not belong to {network.name}")
        (rank,) = reader.unpack("<B", name)
        dims = reader.unpack(f"<{rank}I", name) if rank else ()
        payload = reader.take(4 * int(np.prod(dims, dtype=np.int64)), name)
        params[key] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        if expected is not None and tuple(dims) != tuple(expected[key]):
            raise WeightFormatError(f"{path}: tensor {name!r} has shape {dims}, expected {expected[key]}")
    if reader.pos != len(reader.buf):
        raise WeightFormatError(f"{path}: {len(reader.buf) - reader.pos} trailing bytes after last tensor")
    if expected is not None and set(expected) != set(params.keys()):
        missing = sorted(ParamStore.tensor_name(k) for k in set(expected) - set(params.keys()))
        raise WeightFormatError(f"{path}: missing tensors {missing}")
    return params
