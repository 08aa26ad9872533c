"""
Candidate decoding and multi-class Soft-NMS
"""

from collections import defaultdict
from dataclasses import (
    dataclass,
    replace
)
from typing import (
    Dict,
    List,
    Optional,
    Sequence
)

import numpy as np

from .config import ModelConfig
from .enums import NmsMethod
from .targets import PyramidPositions

#: largest score a candidate may carry, keeping scores inside (0, 1)
MAX_SCORE = 1.0 - 1e-7


@dataclass(frozen=True)
class Candidate:
    """
    One detection: class, [start, end) in snippets and confidence
    """
    class_id: int
    t_start: float
    t_end: float
    score: float
    level: int = 0

    def to_json(self) -> Dict:
        """
        Converts the candidate to a detections file record
        """
        return {'class': self.class_id,
                'start': self.t_start,
                'end': self.t_end,
                'score': self.score}

    @staticmethod
    def from_json(res: Dict) -> 'Candidate':
        """
        Creates a candidate from a detections file record
        """
        return Candidate(class_id=int(res['class']),
                         t_start=float(res['start']),
                         t_end=float(res['end']),
                         score=float(res['score']),
                         level=int(res.get('level', 0)))


def sort_by_score(candidates: Sequence[Candidate]) -> List[Candidate]:
    """
    Sorts candidates by descending score, keeping the input order of
    equal scores
    """
    scores = np.array([c.score for c in candidates], dtype=np.float64)
    order = np.argsort(-scores, kind='stable')
    return [candidates[i] for i in order]


def decode_candidates(probs: np.ndarray,
                      distances: np.ndarray,
                      level_lengths: Sequence[int],
                      score_floor: float,
                      length: Optional[float] = None,
                      max_candidates: Optional[int] = None) \
        -> List[Candidate]:
    """
    Turns head outputs into candidates.

    Every (position, class) with a score of at least ``score_floor``
    becomes a candidate spanning [t - d_s * stride, t + d_e * stride],
    clamped to [0, length]. Zero-length intervals are discarded.
    """
    positions = PyramidPositions.from_lengths(level_lengths)
    if length is None:
        length = float(level_lengths[0])
    scores = np.minimum(probs.astype(np.float64), MAX_SCORE)
    rows, classes = np.nonzero(scores >= score_floor)
    if rows.size == 0:
        return []

    picked = scores[rows, classes]
    order = np.argsort(-picked, kind='stable')
    if max_candidates is not None:
        order = order[:max_candidates]
    rows, classes, picked = rows[order], classes[order], picked[order]

    times = positions.times[rows]
    strides = positions.strides[rows]
    d = distances[rows, classes].astype(np.float64)
    starts = np.clip(times - d[:, 0] * strides, 0.0, length)
    ends = np.clip(times + d[:, 1] * strides, 0.0, length)

    res = []
    for i in np.flatnonzero(ends > starts):
        res.append(Candidate(class_id=int(classes[i]),
                             t_start=float(starts[i]),
                             t_end=float(ends[i]),
                             score=float(picked[i]),
                             level=int(positions.levels[rows[i]])))
    return res


def interval_iou(start: float, end: float,
                 starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """
    tIoU of one interval against many
    """
    inter = np.clip(np.minimum(end, ends) - np.maximum(start, starts),
                    0.0, None)
    union = (end - start) + (ends - starts) - inter
    return np.divide(inter, union, out=np.zeros_like(inter),
                     where=union > 0)


def _soft_nms_class(candidates: List[Candidate],
                    sigma: float,
                    method: NmsMethod,
                    prune_floor: float,
                    linear_threshold: float) -> List[Candidate]:
    starts = np.array([c.t_start for c in candidates], dtype=np.float64)
    ends = np.array([c.t_end for c in candidates], dtype=np.float64)
    scores = np.array([c.score for c in candidates], dtype=np.float64)
    remaining = np.arange(len(candidates))
    keep = []
    while remaining.size:
        best = remaining[int(np.argmax(scores[remaining]))]
        keep.append(replace(candidates[best], score=float(scores[best])))
        remaining = remaining[remaining != best]
        if not remaining.size:
            break
        iou = interval_iou(starts[best], ends[best], starts[remaining],
                           ends[remaining])
        if method == NmsMethod.Gaussian:
            decay = np.exp(-(iou * iou) / sigma)
        else:
            decay = np.where(iou > linear_threshold, 1.0 - iou, 1.0)
        scores[remaining] = scores[remaining] * decay
        remaining = remaining[scores[remaining] >= prune_floor]
    return keep


def soft_nms(candidates: Sequence[Candidate],
             sigma: float = 0.5,
             method: NmsMethod = NmsMethod.Gaussian,
             prune_floor: float = 1e-3,
             linear_threshold: float = 0.3,
             max_detections: Optional[int] = None) -> List[Candidate]:
    """
    Multi-class Soft-NMS.

    Repeatedly keeps the best remaining candidate of a class and decays
    the scores of the other candidates of that class by their overlap
    with it. Candidates of different classes never interact.
    """
    per_class = defaultdict(list)
    for candidate in candidates:
        per_class[candidate.class_id].append(candidate)

    res = []
    for class_id in sorted(per_class):
        res.extend(_soft_nms_class(per_class[class_id], sigma, method,
                                   prune_floor, linear_threshold))
    res = sort_by_score(res)
    if max_detections is not None:
        res = res[:max_detections]
    return res


def postprocess(probs: np.ndarray,
                distances: np.ndarray,
                level_lengths: Sequence[int],
                length: float,
                cfg: ModelConfig) -> List[Candidate]:
    """
    Decodes and suppresses the detections of one video
    """
    candidates = decode_candidates(probs, distances, level_lengths,
                                   cfg.score_floor, length,
                                   cfg.max_candidates)
    return soft_nms(candidates, cfg.nms_sigma, cfg.nms(),
                    cfg.nms_prune_floor, cfg.nms_linear_threshold,
                    cfg.max_detections)
