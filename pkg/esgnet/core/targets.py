"""
Training targets for the guidance heads and the decoder heads
"""

from dataclasses import dataclass
from typing import (
    List,
    Optional,
    Sequence,
    Tuple
)

import numpy as np

from .dataset import EventAnnotation
from .exceptions import (
    ConfigError,
    DimensionError
)

Range = Tuple[float, Optional[float]]


@dataclass
class PyramidPositions:
    """
    Time (in snippets), stride and level of every pyramid position
    """
    times: np.ndarray
    strides: np.ndarray
    levels: np.ndarray

    @staticmethod
    def from_lengths(lengths: Sequence[int]) -> 'PyramidPositions':
        """
        Level l position i sits at time i * 2^l
        """
        times, strides, levels = [], [], []
        for level, length in enumerate(lengths):
            stride = 2 ** level
            times.append(np.arange(length, dtype=np.float64) * stride)
            strides.append(np.full(length, stride, dtype=np.float64))
            levels.append(np.full(length, level, dtype=np.int64))
        return PyramidPositions(np.concatenate(times),
                                np.concatenate(strides),
                                np.concatenate(levels))


@dataclass
class SnippetTargets:
    """
    Decoder targets over the pyramid.

    ``classes`` is [T_l x C] in {0, 1}; ``distances`` is [T_l x C x 2]
    holding (d_s, d_e) in snippets where ``positive`` is set.
    """
    classes: np.ndarray
    distances: np.ndarray
    positive: np.ndarray
    positions: PyramidPositions

    def num_positives(self) -> int:
        """
        Returns the number of (position, class) regression targets
        """
        return int(np.count_nonzero(self.positive))


def _check_ranges(ranges: Sequence[Range], levels: int):
    if len(ranges) != levels:
        raise ConfigError('{} regression ranges for {} levels'.format(
            len(ranges), levels))


def assign_targets(events: Sequence[EventAnnotation],
                   lengths: Sequence[int],
                   ranges: Sequence[Range],
                   classes: int) -> SnippetTargets:
    """
    Labels every pyramid position.

    A position at time t on level l is positive for an event when
    t_start <= t < t_end and max(d_s, d_e) lies in the level's range.
    Same-class events competing for a position resolve to the shorter
    one, then to the earlier one in ``events``.
    """
    _check_ranges(ranges, len(lengths))
    positions = PyramidPositions.from_lengths(lengths)
    total = positions.times.shape[0]
    cls = np.zeros((total, classes), dtype=np.float32)
    distances = np.zeros((total, classes, 2), dtype=np.float32)
    positive = np.zeros((total, classes), dtype=bool)
    extent = np.full((total, classes), np.inf)

    lower = np.array([lo for lo, _ in ranges], dtype=np.float64)
    upper = np.array([np.inf if hi is None else hi for _, hi in ranges],
                     dtype=np.float64)
    lo = lower[positions.levels]
    hi = upper[positions.levels]
    t = positions.times

    for event in events:
        if not 0 <= event.class_id < classes:
            raise DimensionError('assign_targets', (event.class_id,),
                                 (classes,))
        d_s = t - event.t_start
        d_e = event.t_end - t
        reach = np.maximum(d_s, d_e)
        inside = (t >= event.t_start) & (t < event.t_end)
        hit = inside & (reach >= lo) & (reach < hi)
        better = hit & (event.duration() < extent[:, event.class_id])
        rows = np.flatnonzero(better)
        extent[rows, event.class_id] = event.duration()
        positive[rows, event.class_id] = True
        cls[rows, event.class_id] = 1.0
        distances[rows, event.class_id, 0] = d_s[rows]
        distances[rows, event.class_id, 1] = d_e[rows]

    return SnippetTargets(cls, distances, positive, positions)


def snippet_labels(events: Sequence[EventAnnotation],
                   length: int,
                   classes: int) -> np.ndarray:
    """
    [length x C] multi-label targets: snippet t is labelled c when an
    event of class c overlaps [t, t + 1)
    """
    res = np.zeros((length, classes), dtype=np.float32)
    t = np.arange(length)
    for event in events:
        covered = (event.t_start < t + 1) & (event.t_end > t)
        res[covered, event.class_id] = 1.0
    return res


def pyramid_labels(labels: np.ndarray, lengths: Sequence[int]) -> np.ndarray:
    """
    Pools snippet labels onto the pyramid: level l position i takes the
    union of the snippets in [i * 2^l, (i + 1) * 2^l)
    """
    res = []
    for level, length in enumerate(lengths):
        stride = 2 ** level
        window = labels[:length * stride].reshape(length, stride, -1)
        res.append(window.max(axis=1))
    return np.concatenate(res, axis=0)


@dataclass
class Targets:
    """
    Everything the losses of one video compare against
    """
    snippets: np.ndarray
    snippet_valid: np.ndarray
    pyramid: np.ndarray
    pyramid_valid: np.ndarray
    decoder: SnippetTargets


def build_targets(events: Sequence[EventAnnotation],
                  valid: np.ndarray,
                  lengths: Sequence[int],
                  ranges: Sequence[Range],
                  classes: int) -> Targets:
    """
    Builds guidance and decoder targets of a padded video
    """
    labels = snippet_labels(events, valid.shape[0], classes)
    pyramid_valid: List[np.ndarray] = [valid[::2 ** level]
                                       for level in range(len(lengths))]
    return Targets(snippets=labels,
                   snippet_valid=valid,
                   pyramid=pyramid_labels(labels, lengths),
                   pyramid_valid=np.concatenate(pyramid_valid),
                   decoder=assign_targets(events, lengths, ranges, classes))
