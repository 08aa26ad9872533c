"""
Classification and class-aware boundary regression heads
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..tensor import ops
from ..tensor.nn import (
    Conv1d,
    Module
)
from ..tensor.tensor import Tensor
from .constants import CLS_PRIOR_PROB

#: initial value of the regression output bias, in stride units
REG_BIAS_INIT = 1.0


@dataclass
class HeadOutputs:
    """
    Decoder outputs over the pyramid. ``logits`` and ``probs`` are
    [T_l x C]; ``distances`` is [T_l x C x 2] in stride units.
    """
    logits: Tensor
    probs: Tensor
    distances: Tensor


class ConvStack(Module):
    """
    Three same-padded temporal convolutions with GELU between them
    """

    def __init__(self,
                 rng: np.random.Generator,
                 channels: int,
                 out_channels: int,
                 kernel_size: int = 3):
        self.conv1 = Conv1d(rng, channels, channels, kernel_size)
        self.conv2 = Conv1d(rng, channels, channels, kernel_size)
        self.conv3 = Conv1d(rng, channels, out_channels, kernel_size)

    def __call__(self, x: Tensor) -> Tensor:
        x = ops.gelu(self.conv1(x))
        x = ops.gelu(self.conv2(x))
        return self.conv3(x)


class DecoderHeads(Module):
    """
    Parallel classification (sigmoid) and regression (relu) heads.

    Both heads run on each pyramid level separately, so no convolution
    window straddles two levels.
    """

    def __init__(self, rng: np.random.Generator, classes: int):
        self._classes = classes
        self.cls_head = ConvStack(rng, classes, classes)
        self.reg_head = ConvStack(rng, classes, 2 * classes)
        self.cls_head.conv3.bias.data[:] = -math.log(
            (1 - CLS_PRIOR_PROB) / CLS_PRIOR_PROB)
        self.reg_head.conv3.bias.data[:] = REG_BIAS_INIT

    def __call__(self, z: Tensor, lengths: Sequence[int]) -> HeadOutputs:
        levels = ops.split_rows(z, lengths)
        logits = ops.join_rows([self.cls_head(level) for level in levels])
        distances = ops.join_rows([ops.relu(self.reg_head(level))
                                  for level in levels])
        return HeadOutputs(
            logits=logits,
            probs=ops.sigmoid(logits),
            distances=distances.reshape(z.shape[0], self._classes, 2))
