"""
Parameter containers and the transformer building blocks
"""

import math
from typing import (
    Dict,
    Iterator,
    List,
    Optional,
    Tuple
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
from . import ops
from .tensor import (
    Param,
    Tensor
)


def xavier_uniform(rng: np.random.Generator,
                   fan_in: int,
                   fan_out: int,
                   shape: Tuple[int, ...]) -> np.ndarray:
    """
    Glorot uniform initialization
    """
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """
    Base class for anything holding parameters.

    Parameters and child modules are discovered from instance attributes,
    including lists of modules, so names follow attribute paths.
    """

    def named_parameters(self, prefix: str = '') \
            -> Iterator[Tuple[str, Param]]:
        """
        Yields (path, parameter) pairs in attribute definition order
        """
        for key, value in vars(self).items():
            if key.startswith('_'):
                continue
            path = f'{prefix}{key}'
            if isinstance(value, Param):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + '.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f'{path}.{i}.')
                    elif isinstance(item, Param):
                        yield f'{path}.{i}', item

    def parameters(self) -> List[Param]:
        """
        Returns every parameter of the module tree
        """
        return [p for _, p in self.named_parameters()]

    def state(self) -> Dict[str, Param]:
        """
        Returns parameters keyed by path, naming them as a side effect
        """
        res = {}
        for name, param in self.named_parameters():
            param.name = name
            res[name] = param
        return res

    def num_parameters(self) -> int:
        """
        Returns the number of scalar parameters
        """
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        """
        Clears all parameter gradients
        """
        for param in self.parameters():
            param.zero_grad()

    def to_precision(self, dtype):
        """
        Casts every parameter to ``dtype``
        """
        for param in self.parameters():
            param.cast(dtype)


class Linear(Module):
    """
    Affine map x @ w + b
    """

    def __init__(self,
                 rng: np.random.Generator,
                 in_features: int,
                 out_features: int,
                 bias: bool = True):
        self.w = Param(xavier_uniform(rng, in_features, out_features,
                                      (in_features, out_features)))
        self.b = Param(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)


class LayerNorm(Module):
    """
    Layer normalization with learned gain and bias
    """

    def __init__(self, width: int):
        if width < 1:
            raise ConfigError('layer norm width must be positive')
        self.gain = Param(np.ones(width))
        self.bias = Param(np.zeros(width))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


class PReLU(Module):
    """
    Leaky relu with one learned slope per module instance
    """

    def __init__(self, init: float = 0.25):
        self.slope = Param(np.full(1, init))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.activation(x, Activation.Prelu, self.slope)


class Conv1d(Module):
    """
    Temporal convolution layer with kernel K x Cin x Cout
    """

    def __init__(self,
                 rng: np.random.Generator,
                 in_channels: int,
                 out_channels: int,
                 kernel_size: int = 3,
                 stride: int = 1,
                 padding: Padding = Padding.Same,
                 bias: bool = True):
        if padding == Padding.Same and kernel_size % 2 == 0:
            raise ConfigError(
                'same padding requires an odd kernel size, got {}'.format(
                    kernel_size))
        self.kernel = Param(xavier_uniform(
            rng, kernel_size * in_channels, kernel_size * out_channels,
            (kernel_size, in_channels, out_channels)))
        self.bias = Param(np.zeros(out_channels)) if bias else None
        self._stride = stride
        self._padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.kernel, self._stride, self._padding,
                          self.bias)


class DepthwiseConv1d(Module):
    """
    Strided per-channel convolution used for temporal downsampling
    """

    def __init__(self,
                 rng: np.random.Generator,
                 channels: int,
                 kernel_size: int = 3,
                 stride: int = 2):
        self.kernel = Param(
            np.full((kernel_size, channels), 1.0 / kernel_size)
            + 0.01 * rng.standard_normal((kernel_size, channels)))
        self._stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv1d(x, self.kernel, self._stride)


class AttentionParams(Module):
    """
    Query, key, value and output projections of a multi-head attention
    """

    def __init__(self, rng: np.random.Generator, width: int, heads: int):
        if heads < 1 or width % heads != 0:
            raise ConfigError(
                'embedding width {} is not divisible by {} heads'.format(
                    width, heads))
        self.heads = heads
        self.w_q = Param(xavier_uniform(rng, width, width, (width, width)))
        self.w_k = Param(xavier_uniform(rng, width, width, (width, width)))
        self.w_v = Param(xavier_uniform(rng, width, width, (width, width)))
        self.w_o = Param(xavier_uniform(rng, width, width, (width, width)))
        self.b_q = Param(np.zeros(width))
        self.b_k = Param(np.zeros(width))
        self.b_v = Param(np.zeros(width))
        self.b_o = Param(np.zeros(width))


def attention_mask(query_valid: np.ndarray,
                   key_valid: np.ndarray) -> np.ndarray:
    """
    Builds a [Tq x Tk] mask letting every query see the valid keys
    """
    return np.broadcast_to(key_valid[None, :],
                           (query_valid.shape[0], key_valid.shape[0])).copy()


def multi_head_attention(q: Tensor,
                         k: Tensor,
                         v: Tensor,
                         params: AttentionParams,
                         mask: Optional[np.ndarray] = None,
                         query_valid: Optional[np.ndarray] = None,
                         weights: Optional[List[np.ndarray]] = None) \
        -> Tensor:
    """
    Scaled dot-product attention over ``params.heads`` heads.

    ``mask[i, j]`` False removes key j from query i. A valid query (per
    ``query_valid``) whose row is entirely masked is a contract error.
    When ``weights`` is given the head-averaged attention matrix is
    appended to it.
    """
    width = q.shape[1]
    if k.shape[1] != width or v.shape[1] != width or k.shape[0] != v.shape[0]:
        raise DimensionError('multi_head_attention', q.shape, k.shape,
                             v.shape)
    if width % params.heads != 0:
        raise ConfigError(
            'embedding width {} is not divisible by {} heads'.format(
                width, params.heads))
    if mask is not None:
        if mask.shape != (q.shape[0], k.shape[0]):
            raise DimensionError('attention mask', mask.shape,
                                 (q.shape[0], k.shape[0]))
        empty_rows = ~np.any(mask, axis=1)
        if query_valid is not None:
            empty_rows = empty_rows & query_valid
        if np.any(empty_rows):
            raise ContractError(
                'valid query positions {} have no key to attend to'.format(
                    np.flatnonzero(empty_rows).tolist()))

    head_width = width // params.heads
    scale = 1.0 / math.sqrt(head_width)
    queries = ops.linear(q, params.w_q, params.b_q)
    keys = ops.linear(k, params.w_k, params.b_k)
    values = ops.linear(v, params.w_v, params.b_v)

    heads = []
    maps = []
    for h in range(params.heads):
        cols = slice(h * head_width, (h + 1) * head_width)
        scores = ops.matmul(queries[:, cols], keys[:, cols].T) * scale
        probs = ops.softmax_rows(scores, mask)
        maps.append(probs.data)
        heads.append(ops.matmul(probs, values[:, cols]))

    if weights is not None:
        weights.append(np.mean(np.stack(maps), axis=0))

    merged = heads[0] if len(heads) == 1 else ops.concat(heads, axis=1)
    return ops.linear(merged, params.w_o, params.b_o)


class FeedForward(Module):
    """
    Two linear layers with a GELU between them
    """

    def __init__(self, rng: np.random.Generator, width: int, ratio: int = 4):
        self.fc1 = Linear(rng, width, ratio * width)
        self.fc2 = Linear(rng, ratio * width, width)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


def _zero_invalid(x: Tensor, valid: Optional[np.ndarray]) -> Tensor:
    if valid is None:
        return x
    return x * valid.astype(x.dtype)[:, None]


class SelfAttentionBlock(Module):
    """
    Pre-norm transformer block: x + MSA(LN(x)), then x + FFN(LN(x)).

    Padded rows of the output are zero.
    """

    def __init__(self,
                 rng: np.random.Generator,
                 width: int,
                 heads: int,
                 ffn_ratio: int = 4):
        self.norm_attn = LayerNorm(width)
        self.attn = AttentionParams(rng, width, heads)
        self.norm_ffn = LayerNorm(width)
        self.ffn = FeedForward(rng, width, ffn_ratio)

    def __call__(self,
                 x: Tensor,
                 mask: Optional[np.ndarray] = None,
                 valid: Optional[np.ndarray] = None,
                 weights: Optional[List[np.ndarray]] = None) -> Tensor:
        normed = self.norm_attn(x)
        x = x + multi_head_attention(normed, normed, normed, self.attn,
                                     mask, valid, weights)
        x = x + self.ffn(self.norm_ffn(x))
        return _zero_invalid(x, valid)


class CrossAttentionBlock(Module):
    """
    Pre-norm cross attention: the query stream attends to a second
    stream, with residuals on the query path, followed by an FFN
    """

    def __init__(self,
                 rng: np.random.Generator,
                 width: int,
                 heads: int,
                 ffn_ratio: int = 4):
        self.norm_query = LayerNorm(width)
        self.norm_context = LayerNorm(width)
        self.attn = AttentionParams(rng, width, heads)
        self.norm_ffn = LayerNorm(width)
        self.ffn = FeedForward(rng, width, ffn_ratio)

    def attend(self,
               query: Tensor,
               context: Tensor,
               mask: Optional[np.ndarray] = None,
               valid: Optional[np.ndarray] = None,
               weights: Optional[List[np.ndarray]] = None) -> Tensor:
        """
        Returns the attention readout alone, without residual or FFN
        """
        normed_context = self.norm_context(context)
        return multi_head_attention(self.norm_query(query), normed_context,
                                    normed_context, self.attn, mask, valid,
                                    weights)

    def __call__(self,
                 query: Tensor,
                 context: Tensor,
                 mask: Optional[np.ndarray] = None,
                 valid: Optional[np.ndarray] = None,
                 weights: Optional[List[np.ndarray]] = None) -> Tensor:
        x = query + self.attend(query, context, mask, valid, weights)
        x = x + self.ffn(self.norm_ffn(x))
        return _zero_invalid(x, valid)


class MLPHead(Module):
    """
    Two linear layers with a PReLU between them
    """

    def __init__(self,
                 rng: np.random.Generator,
                 in_features: int,
                 hidden: int,
                 out_features: int):
        self.fc1 = Linear(rng, in_features, hidden)
        self.act = PReLU()
        self.fc2 = Linear(rng, hidden, out_features)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.act(self.fc1(x)))
