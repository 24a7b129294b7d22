"""
Dense NCHW tensor operators with explicit backward passes.

Tensors are plain numpy arrays shaped (n, c, h, w). Operators never modify
their inputs and keep the floating dtype they are given, so the same kernels
run at 32-bit during training and at 64-bit inside the gradient-check harness.
Convolutions follow the cross-correlation convention (no kernel flip).
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from mope.exceptions import ShapeError
from mope.settings import INSTANCE_NORM_EPS

DEFAULT_DTYPE = np.float32

ConvGrads = namedtuple("ConvGrads", ["grad_input", "grad_weight", "grad_bias"])
NormGrads = namedtuple("NormGrads", ["grad_input", "grad_gamma", "grad_beta"])


def as_tensor(data, dtype=None):
    """Return `data` as a 4-D floating array (n, c, h, w)."""
    arr = np.asarray(data)
    if arr.ndim != 4:
        raise ShapeError(f"Expected a 4-D (n, c, h, w) tensor, got rank {arr.ndim}")
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if not np.issubdtype(arr.dtype, np.floating):
        return arr.astype(DEFAULT_DTYPE)
    return arr


def _check_rank4(x, what):
    if x.ndim != 4:
        raise ShapeError(f"{what}: expected a 4-D tensor, got rank {x.ndim}")


@dataclass(frozen=True)
class ConvParams:
    """Weights and geometry of a (transposed) convolution.

    For `conv2d` the weight is (c_out, c_in, k, k). `conv_transpose2d` reads
    the same array as (c_in, c_out, k, k), so a transposed convolution with
    the weights of a forward one computes that convolution's data gradient.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError(f"Convolution weight must be (a, b, k, k), got {self.weight.shape}")
        if self.weight.shape[2] % 2 == 0:
            raise ShapeError(f"Kernel size must be odd, got {self.weight.shape[2]}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0, got {self.pad}")

    @property
    def kernel(self):
        return self.weight.shape[2]


def conv_output_size(size, kernel, stride, pad):
    return (size + 2 * pad - kernel) // stride + 1


def conv_transpose_output_size(size, kernel, stride, pad, output_pad=0):
    return (size - 1) * stride - 2 * pad + kernel + output_pad


def _im2col(x, k, stride, pad, out_h, out_w):
    n, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, k, k, out_h, out_w), dtype=x.dtype)
    for i in range(k):
        i_max = i + stride * out_h
        for j in range(k):
            j_max = j + stride * out_w
            cols[:, :, i, j] = xp[:, :, i:i_max:stride, j:j_max:stride]
    return cols


def _col2im(cols, shape, k, stride, pad):
    n, c, h, w = shape
    out_h, out_w = cols.shape[4:]
    canvas = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        i_max = i + stride * out_h
        for j in range(k):
            j_max = j + stride * out_w
            canvas[:, :, i:i_max:stride, j:j_max:stride] += cols[:, :, i, j]
    return canvas[:, :, pad:pad + h, pad:pad + w]


def _conv_geometry(x, p):
    _check_rank4(x, "conv2d input")
    n, c, h, w = x.shape
    c_out, c_in, k, _ = p.weight.shape
    if c != c_in:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects c_in={c_in}")
    if p.bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias length {p.bias.shape} does not match c_out={c_out}")
    out_h = conv_output_size(h, k, p.stride, p.pad)
    out_w = conv_output_size(w, k, p.stride, p.pad)
    if out_h < 1:
        raise ShapeError(f"conv2d: output height {out_h} < 1 for input height {h}")
    if out_w < 1:
        raise ShapeError(f"conv2d: output width {out_w} < 1 for input width {w}")
    return (n, c_out, out_h, out_w)


def conv2d(x, p):
    n, c_out, out_h, out_w = _conv_geometry(x, p)
    cols = _im2col(x, p.kernel, p.stride, p.pad, out_h, out_w)
    out = np.tensordot(p.weight, cols, axes=([1, 2, 3], [1, 2, 3]))
    out = out.transpose(1, 0, 2, 3) + p.bias.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out)


def conv2d_backward(x, p, grad_out):
    out_shape = _conv_geometry(x, p)
    if grad_out.shape != out_shape:
        raise ShapeError(f"conv2d_backward: grad_out shape {grad_out.shape} != output shape {out_shape}")
    k = p.kernel
    cols = _im2col(x, k, p.stride, p.pad, out_shape[2], out_shape[3])
    grad_weight = np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 4, 5]))
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    grad_cols = np.tensordot(p.weight, grad_out, axes=([0], [1])).transpose(3, 0, 1, 2, 4, 5)
    grad_input = _col2im(grad_cols, x.shape, k, p.stride, p.pad)
    return ConvGrads(np.ascontiguousarray(grad_input), grad_weight, grad_bias)


def _as_pair(value):
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def _conv_transpose_geometry(x, p, output_pad):
    _check_rank4(x, "conv_transpose2d input")
    n, c, h, w = x.shape
    c_in, c_out, k, _ = p.weight.shape
    if c != c_in:
        raise ShapeError(f"conv_transpose2d: input has {c} channels but weight expects c_in={c_in}")
    if p.bias.shape != (c_out,):
        raise ShapeError(f"conv_transpose2d: bias length {p.bias.shape} does not match c_out={c_out}")
    pad_h, pad_w = _as_pair(output_pad)
    for extra in (pad_h, pad_w):
        if not 0 <= extra < p.stride:
            raise ShapeError(f"conv_transpose2d: output_pad {extra} must lie in [0, stride={p.stride})")
    out_h = conv_transpose_output_size(h, k, p.stride, p.pad, pad_h)
    out_w = conv_transpose_output_size(w, k, p.stride, p.pad, pad_w)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv_transpose2d: empty output {out_h}x{out_w} for input {h}x{w}")
    return (n, c_out, out_h, out_w)


def conv_transpose2d(x, p, output_pad=0):
    """Transposed convolution; output side (h - 1)*stride - 2*pad + k + output_pad."""
    out_shape = _conv_transpose_geometry(x, p, output_pad)
    cols = np.tensordot(p.weight, x, axes=([0], [1])).transpose(3, 0, 1, 2, 4, 5)
    out = _col2im(cols, out_shape, p.kernel, p.stride, p.pad)
    return np.ascontiguousarray(out + p.bias.reshape(1, -1, 1, 1))


def conv_transpose2d_backward(x, p, grad_out, output_pad=0):
    out_shape = _conv_transpose_geometry(x, p, output_pad)
    if grad_out.shape != out_shape:
        raise ShapeError(
            f"conv_transpose2d_backward: grad_out shape {grad_out.shape} != output shape {out_shape}"
        )
    h, w = x.shape[2:]
    cols = _im2col(grad_out, p.kernel, p.stride, p.pad, h, w)
    grad_input = np.tensordot(p.weight, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
    grad_weight = np.tensordot(x, cols, axes=([0, 2, 3], [0, 4, 5]))
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    return ConvGrads(np.ascontiguousarray(grad_input), grad_weight, grad_bias)


def _check_affine(x, gamma, beta):
    _check_rank4(x, "instance_norm input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"instance_norm: gamma {gamma.shape} / beta {beta.shape} must have length c={c}"
        )


def _standardize(x, eps):
    mean = x.mean(axis=(2, 3), keepdims=True)
    var = x.var(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return (x - mean) * inv_std, inv_std


def instance_norm(x, gamma, beta, eps=INSTANCE_NORM_EPS):
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    _check_affine(x, gamma, beta)
    x_hat, _ = _standardize(x, eps)
    return x_hat * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)


def instance_norm_backward(x, gamma, grad_out, eps=INSTANCE_NORM_EPS):
    _check_affine(x, gamma, gamma)
    if grad_out.shape != x.shape:
        raise ShapeError(f"instance_norm_backward: grad_out shape {grad_out.shape} != {x.shape}")
    m = x.shape[2] * x.shape[3]
    x_hat, inv_std = _standardize(x, eps)
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    d_hat = grad_out * gamma.reshape(1, -1, 1, 1)
    grad_input = (inv_std / m) * (
        m * d_hat
        - d_hat.sum(axis=(2, 3), keepdims=True)
        - x_hat * (d_hat * x_hat).sum(axis=(2, 3), keepdims=True)
    )
    return NormGrads(grad_input, grad_gamma, grad_beta)


def _pad_mode(size):
    # reflect needs at least two samples along an axis
    return "reflect" if size > 1 else "edge"


def _reflect_pad(x):
    h, w = x.shape[2:]
    x = np.pad(x, ((0, 0), (0, 0), (1, 1), (0, 0)), mode=_pad_mode(h))
    return np.pad(x, ((0, 0), (0, 0), (0, 0), (1, 1)), mode=_pad_mode(w))


def _fold_rows(g, size):
    core = g[:, :, 1:size + 1].copy()
    top, bottom = (1, size - 2) if size > 1 else (0, 0)
    core[:, :, top] += g[:, :, 0]
    core[:, :, bottom] += g[:, :, size + 1]
    return core


def box_filter3(x):
    """Per-channel 3x3 mean with reflect padding; shape preserved."""
    _check_rank4(x, "box_filter3 input")
    h, w = x.shape[2:]
    xp = _reflect_pad(x)
    out = np.zeros_like(x)
    for i in range(3):
        for j in range(3):
            out += xp[:, :, i:i + h, j:j + w]
    return out / 9


def box_filter3_backward(x_shape, grad_out):
    n, c, h, w = x_shape
    if grad_out.shape != tuple(x_shape):
        raise ShapeError(f"box_filter3_backward: grad_out shape {grad_out.shape} != {tuple(x_shape)}")
    grad_padded = np.zeros((n, c, h + 2, w + 2), dtype=grad_out.dtype)
    for i in range(3):
        for j in range(3):
            grad_padded[:, :, i:i + h, j:j + w] += grad_out
    grad_padded /= 9
    rows = _fold_rows(grad_padded, h)
    return _fold_rows(rows.swapaxes(2, 3), w).swapaxes(2, 3).copy()


RESIZE_MODES = ("nearest", "bilinear")


def interpolation_matrix(in_size, out_size, mode):
    """Row-stochastic (out_size, in_size) matrix used by `resize` along one axis."""
    if mode not in RESIZE_MODES:
        raise ValueError(f"Unknown resize mode {mode!r}; expected one of {RESIZE_MODES}")
    rows = np.arange(out_size)
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    scale = in_size / out_size
    if mode == "nearest":
        src = np.minimum(np.floor(rows * scale).astype(np.int64), in_size - 1)
        matrix[rows, src] = 1.0
        return matrix
    # pixel-centre sampling (align_corners off)
    src = np.clip((rows + 0.5) * scale - 0.5, 0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix


def resize(x, out_h, out_w, mode="bilinear"):
    _check_rank4(x, "resize input")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be at least 1x1, got {out_h}x{out_w}")
    h, w = x.shape[2:]
    rows = interpolation_matrix(h, out_h, mode).astype(x.dtype)
    cols = interpolation_matrix(w, out_w, mode).astype(x.dtype)
    return (rows @ x) @ cols.T


def resize_backward(x_shape, grad_out, mode="bilinear"):
    h, w = x_shape[2:]
    out_h, out_w = grad_out.shape[2:]
    rows = interpolation_matrix(h, out_h, mode).astype(grad_out.dtype)
    cols = interpolation_matrix(w, out_w, mode).astype(grad_out.dtype)
    return (rows.T @ grad_out) @ cols


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def leaky_relu(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(x, grad_out, slope=0.2):
    return grad_out * np.where(x > 0, 1.0, slope).astype(grad_out.dtype)


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid_backward(x, grad_out):
    s = sigmoid(x)
    return grad_out * s * (1.0 - s)


def tanh(x):
    return np.tanh(x)


def tanh_backward(x, grad_out):
    t = np.tanh(x)
    return grad_out * (1.0 - t * t)


ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh")


def activation(x, kind, slope=0.2):
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"Unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_backward(x, grad_out, kind, slope=0.2):
    if kind == "relu":
        return relu_backward(x, grad_out)
    if kind == "leaky_relu":
        return leaky_relu_backward(x, grad_out, slope)
    if kind == "sigmoid":
        return sigmoid_backward(x, grad_out)
    if kind == "tanh":
        return tanh_backward(x, grad_out)
    raise ValueError(f"Unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def elementwise_add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"elementwise_add: shapes {a.shape} and {b.shape} differ")
    return a + b


def elementwise_add_backward(grad_out):
    return grad_out, grad_out


def concat_channels(a, b):
    _check_rank4(a, "concat_channels lhs")
    _check_rank4(b, "concat_channels rhs")
    for axis, name in ((0, "n"), (2, "h"), (3, "w")):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeError(f"concat_channels: dimension {name} differs ({a.shape[axis]} vs {b.shape[axis]})")
    return np.concatenate([a, b], axis=1)


def concat_channels_backward(grad_out, lhs_channels):
    return grad_out[:, :lhs_channels], grad_out[:, lhs_channels:]


def global_avg_pool(x):
    _check_rank4(x, "global_avg_pool input")
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(x_shape, grad_out):
    h, w = x_shape[2:]
    return np.broadcast_to(grad_out / (h * w), tuple(x_shape)).copy()
