"""
Enums
"""

from enum import (
    Enum,
    auto
)

import numpy as np


class Padding(Enum):
    """
    Temporal convolution padding modes
    """
    Same = auto()
    Valid = auto()


class Activation(Enum):
    """
    Elementwise activation kinds
    """
    Relu = auto()
    LeakyRelu = auto()
    Prelu = auto()
    Sigmoid = auto()
    Gelu = auto()


class Precision(Enum):
    """
    Floating point precision of tensors
    """
    Float32 = auto()
    Float64 = auto()

    def dtype(self) -> type:
        """
        Returns the numpy dtype matching the precision
        """
        return {
            Precision.Float32: np.float32,
            Precision.Float64: np.float64
        }[self]


class Split(Enum):
    """
    Dataset splits
    """
    Train = auto()
    Val = auto()
    Test = auto()

    @staticmethod
    def from_string(string: str) -> 'Split':
        """
        Returns a Split from a string value
        """
        return {
            'train': Split.Train,
            'val': Split.Val,
            'test': Split.Test
        }[string]

    def to_string(self) -> str:
        """
        Converts split to the string used in file names and ids
        """
        return {
            Split.Train: 'train',
            Split.Val: 'val',
            Split.Test: 'test'
        }[self]


class NmsMethod(Enum):
    """
    Soft-NMS score decay methods
    """
    Gaussian = auto()
    Linear = auto()

    @staticmethod
    def from_string(string: str) -> 'NmsMethod':
        """
        Returns a NmsMethod from a string value
        """
        return {
            'gaussian': NmsMethod.Gaussian,
            'linear': NmsMethod.Linear
        }[string]

    def to_string(self) -> str:
        """
        Converts method to a config string
        """
        return {
            NmsMethod.Gaussian: 'gaussian',
            NmsMethod.Linear: 'linear'
        }[self]


class GateMode(Enum):
    """
    How a mixture of experts gate combines its experts while training
    """
    Hard = auto()
    Soft = auto()

    @staticmethod
    def from_string(string: str) -> 'GateMode':
        """
        Returns a GateMode from a string value
        """
        return {
            'hard': GateMode.Hard,
            'soft': GateMode.Soft
        }[string]

    def to_string(self) -> str:
        """
        Converts gate mode to a config string
        """
        return {
            GateMode.Hard: 'hard',
            GateMode.Soft: 'soft'
        }[self]
