"""
Dense tensors recorded on a reverse-mode differentiation tape
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import (
    Callable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np

from ..core.enums import Precision
from ..core.exceptions import (
    ContractError,
    NonFiniteError
)

_DEFAULT_PRECISION = Precision.Float32
_FINITE_CHECKS = True

_local = threading.local()


def default_dtype() -> type:
    """
    Returns the dtype new tensors and parameters are created with
    """
    return _DEFAULT_PRECISION.dtype()


def set_default_precision(value: Precision):
    """
    Sets the precision new tensors and parameters are created with
    """
    global _DEFAULT_PRECISION  # pylint: disable=global-statement
    _DEFAULT_PRECISION = value


@contextmanager
def precision(value: Precision) -> Iterator[None]:
    """
    Temporarily switches the default precision, eg to 64 bit for
    gradient checks
    """
    previous = _DEFAULT_PRECISION
    set_default_precision(value)
    try:
        yield
    finally:
        set_default_precision(previous)


def set_finite_checks(enabled: bool):
    """
    Enables or disables the NaN/Inf watchdog
    """
    global _FINITE_CHECKS  # pylint: disable=global-statement
    _FINITE_CHECKS = enabled


def finite_checks_enabled() -> bool:
    """
    Returns True if every op result is checked for NaN/Inf
    """
    return _FINITE_CHECKS


def is_grad_enabled() -> bool:
    """
    Returns True if ops are recorded on the tape in the current thread
    """
    return getattr(_local, 'grad_enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disables recording for the current thread
    """
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


@dataclass
class Node:
    """
    One recorded operation
    """
    op: str
    inputs: Tuple['Tensor', ...]
    output: 'Tensor'
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Graph:
    """
    Append-only tape of operations. Inputs of a node always precede it,
    so reverse append order is a valid backward order.
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def append(self, node: Node) -> int:
        """
        Appends a node, returning its index
        """
        self.nodes.append(node)
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    @staticmethod
    def current() -> 'Graph':
        """
        Returns the tape of the current thread
        """
        graph = getattr(_local, 'graph', None)
        if graph is None:
            graph = Graph()
            _local.graph = graph
        return graph

    @staticmethod
    def reset() -> 'Graph':
        """
        Starts a fresh tape for the current thread
        """
        _local.graph = Graph()
        return _local.graph


class Tensor:
    """
    Dense N-dimensional real array participating in the tape
    """

    # let numpy defer to our reflected operators
    __array_priority__ = 1000

    def __init__(self,
                 data,
                 requires_grad: bool = False,
                 name: str = ''):
        if isinstance(data, np.ndarray) and \
                np.issubdtype(data.dtype, np.floating):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[Tuple[Graph, int]] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        """
        Returns the tensor shape
        """
        return self.data.shape

    @property
    def dtype(self):
        """
        Returns the numpy dtype of the data
        """
        return self.data.dtype

    @property
    def ndim(self) -> int:
        """
        Returns the number of dimensions
        """
        return self.data.ndim

    @property
    def size(self) -> int:
        """
        Returns the number of elements
        """
        return self.data.size

    def is_leaf(self) -> bool:
        """
        Returns True if the tensor was not produced by a recorded op
        """
        return self._node is None

    def numpy(self) -> np.ndarray:
        """
        Returns the underlying array
        """
        return self.data

    def item(self) -> float:
        """
        Returns the value of a single element tensor
        """
        return float(self.data.reshape(-1)[0])

    def accumulate_grad(self, grad: np.ndarray):
        """
        Adds to the stored gradient
        """
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def zero_grad(self):
        """
        Clears the stored gradient
        """
        if self.grad is not None:
            self.grad.fill(0)

    def detach(self) -> 'Tensor':
        """
        Returns a tensor sharing data but not recorded on the tape
        """
        return Tensor(self.data)

    def __repr__(self):
        return 'Tensor(shape={}, dtype={}{})'.format(
            self.shape, self.dtype, ', requires_grad' if self.requires_grad
            else '')

    # pylint: disable=import-outside-toplevel,missing-function-docstring
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __radd__(self, other):
        from .ops import add
        return add(other, self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __rmul__(self, other):
        from .ops import mul
        return mul(other, self)

    def __truediv__(self, other):
        from .ops import div
        return div(self, other)

    def __rtruediv__(self, other):
        from .ops import div
        return div(other, self)

    def __neg__(self):
        from .ops import neg
        return neg(self)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)

    def __getitem__(self, index):
        from .ops import getitem
        return getitem(self, index)

    @property
    def T(self) -> 'Tensor':  # pylint: disable=invalid-name
        from .ops import transpose
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        from .ops import sum as _sum
        return _sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        from .ops import mean
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> 'Tensor':
        from .ops import reshape
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)
    # pylint: enable=import-outside-toplevel,missing-function-docstring


class Param(Tensor):
    """
    A learnable tensor with Adam moment buffers
    """

    def __init__(self, data, name: str = ''):
        super().__init__(np.array(data, dtype=default_dtype(), copy=True),
                         requires_grad=True,
                         name=name)
        self.grad = np.zeros_like(self.data)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def cast(self, dtype):
        """
        Converts data, gradient and moment buffers to another dtype
        """
        self.data = self.data.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.adam_m = self.adam_m.astype(dtype)
        self.adam_v = self.adam_v.astype(dtype)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def record(op: str,
           inputs: Sequence[Tensor],
           data: np.ndarray,
           backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) \
        -> Tensor:
    """
    Wraps an op result in a tensor, appending a tape node when any input
    needs a gradient
    """
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(op)

    needs_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(np.asarray(data), requires_grad=needs_grad)
    if needs_grad:
        graph = Graph.current()
        index = graph.append(Node(op, tuple(inputs), out, backward))
        out._node = (graph, index)  # pylint: disable=protected-access
    return out


def backward(loss: Tensor):
    """
    Accumulates d(loss)/d(leaf) into every reachable leaf tensor
    requiring a gradient
    """
    if loss.size != 1:
        raise ContractError(
            'backward requires a scalar loss, got shape {}'.format(loss.shape))
    if loss.is_leaf():
        if not loss.requires_grad:
            raise ContractError('loss is not on the graph')
        loss.accumulate_grad(np.ones_like(loss.data))
        return

    graph, index = loss._node  # pylint: disable=protected-access
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes[:index + 1]):
        grad = grads.pop(id(node.output), None)
        if grad is None:
            continue
        input_grads = node.backward(grad)
        for tensor, input_grad in zip(node.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            if _FINITE_CHECKS and not np.all(np.isfinite(input_grad)):
                raise NonFiniteError(node.op, 'backward')
            if tensor.is_leaf():
                tensor.accumulate_grad(input_grad)
            elif id(tensor) in grads:
                grads[id(tensor)] = grads[id(tensor)] + input_grad
            else:
                grads[id(tensor)] = input_grad
