"""
Differentiable primitives
"""

import math
from typing import (
    List,
    Optional,
    Sequence,
    Union
)

import numpy as np

from ..core.enums import (
    Activation,
    Padding
)
from ..core.exceptions import (
    ConfigError,
    ContractError,
    DimensionError
)
from ..core.constants import LAYER_NORM_EPS
from .tensor import (
    Tensor,
    record
)

Operand = Union[Tensor, np.ndarray, float, int]

_GELU_C = math.sqrt(2.0 / math.pi)


def as_tensor(value: Operand, like: Optional[Tensor] = None) -> Tensor:
    """
    Wraps constants as tensors, matching the dtype of ``like``
    """
    if isinstance(value, Tensor):
        return value
    if like is not None:
        return Tensor(np.asarray(value, dtype=like.dtype))
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """
    Sums a broadcast gradient back down to ``shape``
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary_operands(a: Operand, b: Operand):
    like = a if isinstance(a, Tensor) else b
    return as_tensor(a, like), as_tensor(b, like)


def add(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise sum with broadcasting
    """
    a, b = _binary_operands(a, b)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise DimensionError('add', a.shape, b.shape) from e

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record('add', (a, b), data, _backward)


def sub(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise difference with broadcasting
    """
    a, b = _binary_operands(a, b)
    try:
        data = a.data - b.data
    except ValueError as e:
        raise DimensionError('sub', a.shape, b.shape) from e

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record('sub', (a, b), data, _backward)


def mul(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise product with broadcasting
    """
    a, b = _binary_operands(a, b)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise DimensionError('mul', a.shape, b.shape) from e

    def _backward(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return record('mul', (a, b), data, _backward)


def div(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise quotient with broadcasting
    """
    a, b = _binary_operands(a, b)
    try:
        data = a.data / b.data
    except ValueError as e:
        raise DimensionError('div', a.shape, b.shape) from e

    def _backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return record('div', (a, b), data, _backward)


def neg(a: Tensor) -> Tensor:
    """
    Elementwise negation
    """
    return record('neg', (a,), -a.data, lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of two 2D tensors
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError('matmul', a.shape, b.shape)

    def _backward(g):
        return g @ b.data.T, a.data.T @ g

    return record('matmul', (a, b), a.data @ b.data, _backward)


def transpose(a: Tensor) -> Tensor:
    """
    Transposes a 2D tensor
    """
    return record('transpose', (a,), a.data.T, lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    """
    Reshapes without copying values
    """
    original = a.shape
    try:
        data = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError('reshape', original, shape) from e
    return record('reshape', (a,), data, lambda g: (g.reshape(original),))


def getitem(a: Tensor, index) -> Tensor:
    """
    Numpy style indexing; repeated indices accumulate gradient
    """
    def _backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return record('getitem', (a,), np.array(a.data[index]), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """
    Concatenates tensors along an existing axis
    """
    tensors = list(tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError('concat', *[t.shape for t in tensors]) from e
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return np.split(g, splits, axis=axis)

    return record('concat', tensors, data, _backward)


def split_rows(x: Tensor, lengths: Sequence[int]) -> List[Tensor]:
    """
    Cuts x into consecutive row blocks of the given lengths
    """
    if int(np.sum(lengths)) != x.shape[0]:
        raise DimensionError('split_rows', x.shape, (int(np.sum(lengths)),))
    res = []
    offset = 0
    for length in lengths:
        res.append(x[offset:offset + length])
        offset += length
    return res


def join_rows(blocks: Sequence[Tensor]) -> Tensor:
    """
    Inverse of split_rows
    """
    blocks = list(blocks)
    return blocks[0] if len(blocks) == 1 else concat(blocks, axis=0)


def sum(a: Tensor, axis=None,  # pylint: disable=redefined-builtin
        keepdims: bool = False) -> Tensor:
    """
    Sums over the given axes
    """
    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return record('sum', (a,), np.sum(a.data, axis=axis, keepdims=keepdims),
                  _backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """
    Averages over the given axes
    """
    count = a.size if axis is None else \
        int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def exp(a: Tensor) -> Tensor:
    """
    Elementwise exponential
    """
    data = np.exp(a.data)
    return record('exp', (a,), data, lambda g: (g * data,))


def log(a: Tensor) -> Tensor:
    """
    Elementwise natural logarithm
    """
    return record('log', (a,), np.log(a.data), lambda g: (g / a.data,))


def power(a: Tensor, exponent: float) -> Tensor:
    """
    Elementwise power with a constant exponent, for nonnegative bases
    """
    if exponent == 0:
        return as_tensor(np.ones_like(a.data))
    data = np.power(a.data, exponent)

    def _backward(g):
        return (g * exponent * np.power(a.data, exponent - 1),)

    return record('power', (a,), data, _backward)


def softplus(a: Tensor) -> Tensor:
    """
    log(1 + exp(a)), computed without overflow
    """
    data = np.logaddexp(0, a.data)

    def _backward(g):
        return (g * _sigmoid(a.data),)

    return record('softplus', (a,), data, _backward)


def minimum(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise minimum; ties send the gradient to ``a``
    """
    a, b = _binary_operands(a, b)
    pick_a = a.data <= b.data

    def _backward(g):
        return (_unbroadcast(np.where(pick_a, g, 0), a.shape),
                _unbroadcast(np.where(pick_a, 0, g), b.shape))

    return record('minimum', (a, b), np.where(pick_a, a.data, b.data),
                  _backward)


def maximum(a: Operand, b: Operand) -> Tensor:
    """
    Elementwise maximum; ties send the gradient to ``a``
    """
    a, b = _binary_operands(a, b)
    pick_a = a.data >= b.data

    def _backward(g):
        return (_unbroadcast(np.where(pick_a, g, 0), a.shape),
                _unbroadcast(np.where(pick_a, 0, g), b.shape))

    return record('maximum', (a, b), np.where(pick_a, a.data, b.data),
                  _backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    """
    Logistic function
    """
    data = _sigmoid(a.data)
    return record('sigmoid', (a,), data,
                  lambda g: (g * data * (1.0 - data),))


def relu(a: Tensor) -> Tensor:
    """
    max(a, 0)
    """
    positive = a.data > 0
    return record('relu', (a,), np.where(positive, a.data, 0),
                  lambda g: (np.where(positive, g, 0),))


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    """
    a for positive values, slope * a otherwise
    """
    positive = a.data > 0
    return record('leaky_relu', (a,),
                  np.where(positive, a.data, slope * a.data),
                  lambda g: (np.where(positive, g, slope * g),))


def prelu(a: Tensor, slope: Tensor) -> Tensor:
    """
    Leaky relu with a learned scalar slope
    """
    positive = a.data > 0
    data = np.where(positive, a.data, slope.data * a.data)

    def _backward(g):
        grad_slope = np.sum(np.where(positive, 0, a.data) * g)
        return (np.where(positive, g, slope.data * g),
                np.reshape(grad_slope, slope.shape))

    return record('prelu', (a, slope), data, _backward)


def gelu(a: Tensor) -> Tensor:
    """
    Gaussian error linear unit, tanh approximation
    """
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    tanh_inner = np.tanh(inner)
    data = 0.5 * x * (1.0 + tanh_inner)

    def _backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        local = 0.5 * (1.0 + tanh_inner) + \
            0.5 * x * (1.0 - tanh_inner ** 2) * d_inner
        return (g * local,)

    return record('gelu', (a,), data, _backward)


def activation(a: Tensor,
               kind: Activation,
               slope: Union[float, Tensor, None] = None) -> Tensor:
    """
    Applies an activation by kind. ``slope`` is the fixed slope of
    leaky relu or the learned slope parameter of prelu.
    """
    if kind == Activation.Relu:
        return relu(a)
    if kind == Activation.LeakyRelu:
        return leaky_relu(a, 0.01 if slope is None else float(slope))
    if kind == Activation.Prelu:
        if not isinstance(slope, Tensor):
            raise ConfigError('prelu requires a learned slope tensor')
        return prelu(a, slope)
    if kind == Activation.Sigmoid:
        return sigmoid(a)
    return gelu(a)


def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax over the last axis after subtracting the row maximum.

    Positions where ``mask`` is False get probability zero; rows with no
    allowed position are all zero.
    """
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    row_max = np.max(z, axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0)
    e = np.exp(z - row_max)
    total = np.sum(e, axis=-1, keepdims=True)
    data = e / np.where(total > 0, total, 1)

    def _backward(g):
        return (data * (g - np.sum(g * data, axis=-1, keepdims=True)),)

    return record('softmax_rows', (x,), data, _backward)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    x @ w (+ b)
    """
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError('linear', x.shape, w.shape)
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def layer_norm(x: Tensor,
               gain: Tensor,
               bias: Tensor,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    """
    Normalizes every row to zero mean and unit variance, then applies
    the affine gain and bias
    """
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != bias.shape[-1]:
        raise DimensionError('layer_norm', x.shape, gain.shape)
    mu = np.mean(x.data, axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    data = normed * gain.data + bias.data
    width = x.shape[-1]

    def _backward(g):
        g_normed = g * gain.data
        grad_x = inv_std * (
            g_normed
            - np.mean(g_normed, axis=-1, keepdims=True)
            - normed * np.mean(g_normed * normed, axis=-1, keepdims=True))
        grad_gain = np.sum((g * normed).reshape(-1, width), axis=0)
        grad_bias = np.sum(g.reshape(-1, width), axis=0)
        return grad_x, grad_gain, grad_bias

    return record('layer_norm', (x, gain, bias), data, _backward)


def _window_indices(length: int,
                    kernel_size: int,
                    stride: int,
                    padding: Padding):
    """
    Returns (indices into the padded sequence, left padding, padded length)
    """
    if padding == Padding.Same:
        if kernel_size % 2 == 0:
            raise ConfigError(
                'same padding requires an odd kernel size, got {}'.format(
                    kernel_size))
        pad = (kernel_size - 1) // 2
    else:
        pad = 0
    padded = length + 2 * pad
    out_length = (padded - kernel_size) // stride + 1
    if out_length < 1:
        raise DimensionError('conv1d', (length,), (kernel_size,))
    starts = np.arange(out_length) * stride
    return starts[:, None] + np.arange(kernel_size)[None, :], pad, padded


def conv1d(x: Tensor,
           kernel: Tensor,
           stride: int = 1,
           padding: Padding = Padding.Same,
           bias: Optional[Tensor] = None) -> Tensor:
    """
    Temporal convolution of x[T x Cin] with kernel[K x Cin x Cout],
    zero padded. Same padding yields ceil(T / stride) outputs.
    """
    if stride < 1:
        raise ConfigError('stride must be positive, got {}'.format(stride))
    if x.ndim != 2 or kernel.ndim != 3 or x.shape[1] != kernel.shape[1]:
        raise DimensionError('conv1d', x.shape, kernel.shape)
    k, c_in, c_out = kernel.shape
    idx, pad, padded_length = _window_indices(x.shape[0], k, stride, padding)
    xp = np.zeros((padded_length, c_in), dtype=x.dtype)
    xp[pad:pad + x.shape[0]] = x.data
    cols = xp[idx].reshape(idx.shape[0], k * c_in)
    flat_kernel = kernel.data.reshape(k * c_in, c_out)
    data = cols @ flat_kernel
    inputs = (x, kernel)
    if bias is not None:
        data = data + bias.data
        inputs = (x, kernel, bias)

    def _backward(g):
        grad_kernel = (cols.T @ g).reshape(kernel.shape)
        grad_cols = (g @ flat_kernel.T).reshape(idx.shape[0], k, c_in)
        grad_xp = np.zeros_like(xp)
        np.add.at(grad_xp, idx, grad_cols)
        grads = [grad_xp[pad:pad + x.shape[0]], grad_kernel]
        if bias is not None:
            grads.append(np.sum(g, axis=0))
        return grads

    return record('conv1d', inputs, data, _backward)


def depthwise_conv1d(x: Tensor,
                     kernel: Tensor,
                     stride: int = 1,
                     padding: Padding = Padding.Same) -> Tensor:
    """
    Per-channel temporal convolution of x[T x C] with kernel[K x C]
    """
    if x.ndim != 2 or kernel.ndim != 2 or x.shape[1] != kernel.shape[1]:
        raise DimensionError('depthwise_conv1d', x.shape, kernel.shape)
    k, channels = kernel.shape
    idx, pad, padded_length = _window_indices(x.shape[0], k, stride, padding)
    xp = np.zeros((padded_length, channels), dtype=x.dtype)
    xp[pad:pad + x.shape[0]] = x.data
    cols = xp[idx]
    data = np.sum(cols * kernel.data[None, :, :], axis=1)

    def _backward(g):
        grad_kernel = np.sum(cols * g[:, None, :], axis=0)
        grad_xp = np.zeros_like(xp)
        np.add.at(grad_xp, idx, g[:, None, :] * kernel.data[None, :, :])
        return grad_xp[pad:pad + x.shape[0]], grad_kernel

    return record('depthwise_conv1d', (x, kernel), data, _backward)


def straight_through(hard: np.ndarray, soft: Tensor) -> Tensor:
    """
    Forward value ``hard``, gradient of ``soft``
    """
    if hard.shape != soft.shape:
        raise DimensionError('straight_through', hard.shape, soft.shape)
    return record('straight_through', (soft,),
                  np.asarray(hard, dtype=soft.dtype), lambda g: (g,))


def gated_sum(gate: Tensor, values: Sequence[Tensor]) -> Tensor:
    """
    sum_j gate[j] * values[j], accumulated in index order.

    A one-hot gate therefore reproduces the selected value exactly.
    """
    values = list(values)
    if gate.ndim != 1 or gate.shape[0] != len(values):
        raise DimensionError('gated_sum', gate.shape, (len(values),))
    shape = values[0].shape
    for value in values:
        if value.shape != shape:
            raise DimensionError('gated_sum', shape, value.shape)

    data = np.zeros(shape, dtype=values[0].dtype)
    for weight, value in zip(gate.data, values):
        data = data + weight * value.data

    def _backward(g):
        grad_gate = np.array([np.sum(g * value.data) for value in values],
                             dtype=gate.dtype)
        return [grad_gate] + [weight * g for weight in gate.data]

    return record('gated_sum', [gate] + values, data, _backward)


def masked_mean_rows(x: Tensor, valid: np.ndarray) -> Tensor:
    """
    Averages the rows of x[T x D] where ``valid`` is True
    """
    count = int(np.count_nonzero(valid))
    if count == 0:
        raise ContractError('masked_mean_rows needs at least one valid row')
    weights = valid.astype(x.dtype)[:, None] / count
    return sum(mul(x, weights), axis=0)
