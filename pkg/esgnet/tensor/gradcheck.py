"""
Central difference gradient checker
"""

from dataclasses import dataclass
from typing import (
    Callable,
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np

from .tensor import (
    Tensor,
    backward,
    no_grad
)


@dataclass
class GradCheckResult:
    """
    Worst mismatch between analytic and numerical gradients
    """
    max_error: float
    worst_tensor: Optional[str]
    worst_index: Optional[Tuple[int, ...]]
    entries_checked: int

    def passed(self, tolerance: float) -> bool:
        """
        Returns True if the worst error is below ``tolerance``
        """
        return self.max_error < tolerance


def relative_error(analytic: float, numeric: float) -> float:
    """
    |analytic - numeric| / max(1, |numeric|)
    """
    return abs(analytic - numeric) / max(1.0, abs(numeric))


def _entries(tensor: Tensor,
             max_entries: Optional[int],
             rng: np.random.Generator) -> List[Tuple[int, ...]]:
    indices = list(np.ndindex(*tensor.shape))
    if max_entries is not None and len(indices) > max_entries:
        picks = rng.choice(len(indices), size=max_entries, replace=False)
        indices = [indices[i] for i in sorted(picks)]
    return indices


def check_gradients(fn: Callable[[], Tensor],
                    tensors: Sequence[Tensor],
                    names: Optional[Sequence[str]] = None,
                    h: float = 1e-4,
                    max_entries: Optional[int] = None,
                    seed: int = 0) -> GradCheckResult:
    """
    Compares the gradients of the scalar ``fn()`` with respect to
    ``tensors`` against central differences with step ``h``.

    ``fn`` must be deterministic. ``max_entries`` samples that many
    entries per tensor instead of checking all of them.
    """
    rng = np.random.default_rng(seed)
    names = list(names) if names is not None else \
        [t.name or str(i) for i, t in enumerate(tensors)]

    for tensor in tensors:
        tensor.grad = np.zeros_like(tensor.data)
    backward(fn())
    analytic = [tensor.grad.copy() for tensor in tensors]

    result = GradCheckResult(0.0, None, None, 0)
    with no_grad():
        for tensor, name, grad in zip(tensors, names, analytic):
            for index in _entries(tensor, max_entries, rng):
                original = tensor.data[index]
                tensor.data[index] = original + h
                plus = fn().item()
                tensor.data[index] = original - h
                minus = fn().item()
                tensor.data[index] = original
                numeric = (plus - minus) / (2 * h)
                error = relative_error(float(grad[index]), numeric)
                result.entries_checked += 1
                if error > result.max_error:
                    result.max_error = error
                    result.worst_tensor = name
                    result.worst_index = index
    return result
