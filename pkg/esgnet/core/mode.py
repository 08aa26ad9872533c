"""
Mixture of dependency experts: temporal aggregation followed by a chain
of hard-gated mixture-of-experts layers
"""

import threading
from dataclasses import dataclass
from typing import (
    Dict,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np

from ..tensor import ops
from ..tensor.nn import (
    Linear,
    MLPHead,
    Module,
    SelfAttentionBlock,
    xavier_uniform
)
from ..tensor.tensor import (
    Param,
    Tensor
)
from .config import ModelConfig
from .constants import EXPERT_LEAKY_SLOPE
from .enums import GateMode
from .exceptions import (
    ConfigError,
    DimensionError
)

_NOISE_STREAM = 0x6A7E


def level_block_mask(lengths: Sequence[int],
                     valid: np.ndarray) -> np.ndarray:
    """
    Attention mask letting every pyramid position see the valid positions
    of its own level only
    """
    total = int(sum(lengths))
    if valid.shape[0] != total:
        raise DimensionError('level_block_mask', valid.shape, (total,))
    mask = np.zeros((total, total), dtype=bool)
    offset = 0
    for length in lengths:
        block = slice(offset, offset + length)
        mask[block, block] = valid[block][None, :]
        offset += length
    return mask


class TemporalAggregation(Module):
    """
    Concatenates the two pyramid streams, projects them to class width
    and applies N1 + N2 level-local self-attention blocks
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        width = cfg.num_classes
        self.proj = Linear(rng, 2 * cfg.embed_dim, width)
        self.blocks = [SelfAttentionBlock(rng, width, cfg.aggregate_heads,
                                          cfg.ffn_ratio)
                       for _ in range(cfg.temporal_blocks)]
        self.final_blocks = [SelfAttentionBlock(rng, width,
                                                cfg.aggregate_heads,
                                                cfg.ffn_ratio)
                             for _ in range(cfg.final_blocks)]

    def __call__(self,
                 audio_visual: Tensor,
                 visual_audio: Tensor,
                 lengths: Sequence[int],
                 valid: np.ndarray) -> Tuple[Tensor, Tensor]:
        """
        Returns (Z~, Z_t)
        """
        if audio_visual.shape != visual_audio.shape:
            raise DimensionError('aggregate', audio_visual.shape,
                                 visual_audio.shape)
        mask = level_block_mask(lengths, valid)
        z = self.proj(ops.concat([audio_visual, visual_audio], axis=1))
        z = z * valid.astype(z.dtype)[:, None]
        for block in self.blocks:
            z = block(z, mask, valid)
        z_tilde = z
        for block in self.final_blocks:
            z = block(z, mask, valid)
        return z_tilde, z


class Expert(Module):
    """
    Temporal convolution followed by a C x C class adjacency map and a
    leaky relu
    """

    def __init__(self,
                 rng: np.random.Generator,
                 classes: int,
                 kernel_size: int = 3,
                 adjacency_init_std: float = 0.01):
        if kernel_size % 2 == 0:
            raise ConfigError('expert kernel size must be odd')
        self.conv_kernel = Param(xavier_uniform(
            rng, kernel_size * classes, kernel_size * classes,
            (kernel_size, classes, classes)))
        self.adjacency = Param(
            np.eye(classes)
            + adjacency_init_std * rng.standard_normal((classes, classes)))

    def __call__(self, z: Tensor,
                 lengths: Optional[Sequence[int]] = None) -> Tensor:
        return expert_apply(z, self, lengths)


def expert_apply(z: Tensor,
                 expert: Expert,
                 lengths: Optional[Sequence[int]] = None) -> Tensor:
    """
    LeakyReLU(A x Conv(z)), with out[t] = A . conv(z)[t].

    With pyramid level ``lengths`` the convolution runs on every level
    separately.
    """
    if expert.adjacency.shape[0] != expert.adjacency.shape[1]:
        raise DimensionError('expert adjacency', expert.adjacency.shape)
    levels = ops.split_rows(z, lengths) if lengths else [z]
    conv = ops.join_rows([ops.conv1d(level, expert.conv_kernel)
                          for level in levels])
    return ops.leaky_relu(ops.matmul(conv, expert.adjacency.T),
                          EXPERT_LEAKY_SLOPE)


@dataclass
class GateState:
    """
    One routing decision of one layer
    """
    logits: Tensor
    selection: np.ndarray
    soft: Optional[np.ndarray]
    tau: float

    @property
    def index(self) -> int:
        """
        Returns the selected expert
        """
        return int(np.argmax(self.selection))


def gumbel_gate(logits: Tensor,
                tau: float,
                training: bool,
                rng: Optional[np.random.Generator] = None,
                mode: GateMode = GateMode.Hard) -> Tuple[Tensor, GateState]:
    """
    Turns gate logits [n] into a one-hot selection.

    While training, Gumbel(0, 1) noise is added and the result divided
    by ``tau``; the hard selection carries the gradient of the soft
    relaxation. At inference the argmax of the logits is taken. Ties go
    to the lowest index.
    """
    if tau <= 0:
        raise ConfigError('gumbel temperature must be positive')
    n = logits.shape[0]
    if not training:
        index = int(np.argmax(logits.data))
        selection = np.zeros(n, dtype=logits.dtype)
        selection[index] = 1
        return Tensor(selection), GateState(logits, selection, None, tau)

    noise = rng.gumbel(size=n).astype(logits.dtype)
    soft = ops.softmax_rows(((logits + noise) * (1.0 / tau)).reshape(1, n))
    soft = soft.reshape(n)
    index = int(np.argmax(soft.data))
    selection = np.zeros(n, dtype=logits.dtype)
    selection[index] = 1
    state = GateState(logits, selection, soft.data.copy(), tau)
    if mode == GateMode.Soft:
        return soft, state
    return ops.straight_through(selection, soft), state


class MoELayer(Module):
    """
    n experts and the gate choosing between them
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self.gate_mlp = MLPHead(rng, cfg.num_classes, cfg.num_classes,
                                cfg.experts)
        self.experts = [Expert(rng, cfg.num_classes, cfg.expert_kernel,
                               cfg.adjacency_init_std)
                        for _ in range(cfg.experts)]
        self.usage = np.zeros(cfg.experts, dtype=np.int64)
        self._usage_lock = threading.Lock()

    def count(self, index: int):
        """
        Records one selection of expert ``index``
        """
        with self._usage_lock:
            self.usage[index] += 1

    def reset_usage(self):
        """
        Clears the selection counts
        """
        with self._usage_lock:
            self.usage[:] = 0

    def gate_logits(self, z_prev: Tensor, valid: np.ndarray) -> Tensor:
        """
        Gate logits from the time-mean of the valid positions
        """
        pooled = ops.masked_mean_rows(z_prev, valid)
        return self.gate_mlp(pooled.reshape(1, z_prev.shape[1])).reshape(
            len(self.experts))

    def __call__(self,
                 z_prev: Tensor,
                 valid: np.ndarray,
                 training: bool,
                 tau: float,
                 rng: Optional[np.random.Generator] = None,
                 mode: GateMode = GateMode.Hard,
                 prune: bool = True,
                 lengths: Optional[Sequence[int]] = None) \
            -> Tuple[Tensor, GateState]:
        """
        Returns z_prev plus the gated expert output, and the gate state.

        At inference with ``prune`` only the selected expert runs.
        """
        logits = self.gate_logits(z_prev, valid)
        gate, state = gumbel_gate(logits, tau, training, rng, mode)
        self.count(state.index)

        if not training and prune:
            out = self.experts[state.index](z_prev, lengths)
        else:
            out = ops.gated_sum(gate, [e(z_prev, lengths)
                                       for e in self.experts])
        return z_prev + out, state


class MixtureOfDependencyExperts(Module):
    """
    Aggregation branch plus m serial MoE layers. The output is
    Z_t + Z_e, where Z_e is the MoE chain applied to Z~.
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self._cfg = cfg
        self.aggregation = TemporalAggregation(rng, cfg)
        self.layers = [MoELayer(rng, cfg) for _ in range(cfg.moe_layers)]
        self._noise_rng = np.random.default_rng([cfg.seed, _NOISE_STREAM])

    def set_noise_seed(self, seed: int):
        """
        Restarts the Gumbel noise stream
        """
        self._noise_rng = np.random.default_rng([seed, _NOISE_STREAM])

    def noise_state(self) -> Dict:
        """
        Returns the state of the Gumbel noise stream
        """
        return self._noise_rng.bit_generator.state

    def set_noise_state(self, state: Dict):
        """
        Restores a state returned by noise_state()
        """
        self._noise_rng.bit_generator.state = state

    def reset_usage(self):
        """
        Clears the per-layer expert usage counts
        """
        for layer in self.layers:
            layer.reset_usage()

    def usage(self) -> List[List[int]]:
        """
        Returns how often each expert of each layer was selected
        """
        return [layer.usage.tolist() for layer in self.layers]

    def __call__(self,
                 audio_visual: Tensor,
                 visual_audio: Tensor,
                 lengths: Sequence[int],
                 valid: np.ndarray,
                 training: bool = False,
                 tau: Optional[float] = None,
                 prune: bool = True) \
            -> Tuple[Tensor, List[int], List[GateState]]:
        """
        Returns (Z^, route, gate states)
        """
        tau = self._cfg.gumbel_tau_end if tau is None else tau
        z_tilde, z_t = self.aggregation(audio_visual, visual_audio, lengths,
                                        valid)
        z_e = z_tilde
        states = []
        for layer in self.layers:
            z_e, state = layer(z_e, valid, training, tau, self._noise_rng,
                               self._cfg.gate(), prune, lengths)
            states.append(state)
        route = [state.index for state in states]
        return z_t + z_e, route, states


def expert_usage_stats(routes: Sequence[Sequence[int]],
                       experts: Optional[int] = None) -> List[List[float]]:
    """
    Per-layer selection frequencies from a log of routes.

    An empty log gives an empty table.
    """
    routes = [list(r) for r in routes]
    if not routes:
        return []
    layers = len(routes[0])
    if any(len(r) != layers for r in routes):
        raise DimensionError('expert_usage_stats',
                             *sorted({(len(r),) for r in routes}))
    counts = np.asarray(routes, dtype=np.int64)
    width = experts if experts is not None else int(counts.max()) + 1
    res = []
    for layer in range(layers):
        hist = np.bincount(counts[:, layer], minlength=width)
        res.append((hist / len(routes)).tolist())
    return res


def route_count(experts: int, layers: int) -> int:
    """
    Number of distinct routes through the MoE chain, n^m
    """
    return experts ** layers
