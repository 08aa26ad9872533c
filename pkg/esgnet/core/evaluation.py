"""
tIoU, average precision and mAP evaluation
"""

from dataclasses import (
    dataclass,
    field
)
from typing import (
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple
)

import numpy as np

from .constants import (
    HIGH_TIOU_THRESHOLDS,
    TIOU_THRESHOLDS
)
from .dataset import EventAnnotation
from .detection import (
    Candidate,
    interval_iou
)
from .exceptions import ContractError

Interval = Tuple[float, float]

#: instance size limits of the brute force oracle
ORACLE_MAX_CANDIDATES = 8
ORACLE_MAX_GROUND_TRUTH = 4


def tiou(a: Interval, b: Interval) -> float:
    """
    Temporal intersection over union of two intervals
    """
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """
    Area under the all-point interpolated precision/recall curve
    """
    mprec = np.hstack([[0.0], precision, [0.0]])
    mrec = np.hstack([[0.0], recall, [1.0]])
    for i in range(len(mprec) - 2, -1, -1):
        mprec[i] = max(mprec[i], mprec[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mprec[idx]))


@dataclass
class Detection:
    """
    A candidate attributed to a video
    """
    video_id: str
    t_start: float
    t_end: float
    score: float


def match_detections(detections: Sequence[Detection],
                     ground_truth: Mapping[str, Sequence[Interval]],
                     threshold: float) -> np.ndarray:
    """
    Greedily matches score-sorted detections to ground truth of the
    same video. Each detection takes the unmatched ground truth with the
    highest tIoU, if that reaches ``threshold``.

    Returns the true positive flag of every detection, in the order of
    ``detections``.
    """
    scores = np.array([d.score for d in detections], dtype=np.float64)
    order = np.argsort(-scores, kind='stable')
    matched = {vid: np.zeros(len(gts), dtype=bool)
               for vid, gts in ground_truth.items()}
    gt_arrays = {vid: (np.array([g[0] for g in gts], dtype=np.float64),
                       np.array([g[1] for g in gts], dtype=np.float64))
                 for vid, gts in ground_truth.items()}

    tp = np.zeros(len(detections), dtype=bool)
    for i in order:
        det = detections[i]
        if det.video_id not in gt_arrays or not matched[det.video_id].size:
            continue
        starts, ends = gt_arrays[det.video_id]
        ious = interval_iou(det.t_start, det.t_end, starts, ends)
        for j in np.argsort(-ious, kind='stable'):
            if ious[j] < threshold:
                break
            if matched[det.video_id][j]:
                continue
            matched[det.video_id][j] = True
            tp[i] = True
            break
    return tp


def average_precision(detections: Sequence[Detection],
                      ground_truth: Mapping[str, Sequence[Interval]],
                      threshold: float) -> Optional[float]:
    """
    AP of one class at one tIoU threshold.

    Returns None when the class has no ground truth, so callers can skip
    it.
    """
    total = sum(len(g) for g in ground_truth.values())
    if total == 0:
        return None
    if not detections:
        return 0.0
    tp = match_detections(detections, ground_truth, threshold)
    scores = np.array([d.score for d in detections], dtype=np.float64)
    order = np.argsort(-scores, kind='stable')
    tp_sorted = tp[order].astype(np.float64)
    tp_cum = np.cumsum(tp_sorted)
    fp_cum = np.cumsum(1.0 - tp_sorted)
    recall = tp_cum / total
    precision = tp_cum / (tp_cum + fp_cum)
    return interpolated_ap(precision, recall)


def brute_force_ap_oracle(candidates: Sequence[Tuple[Interval, float]],
                          ground_truth: Sequence[Interval],
                          threshold: float) -> Optional[float]:
    """
    Recomputes single-video AP by explicit enumeration, for checking
    average_precision on tiny instances.

    Candidates are visited by descending score, equal scores by input
    position. Each takes the unmatched ground truth of highest tIoU
    (lowest index on ties) reaching the threshold. AP is the sum, over
    the ranks of true positives, of the best precision at that rank or
    any later rank, divided by the ground truth count.
    """
    if len(candidates) > ORACLE_MAX_CANDIDATES or \
            len(ground_truth) > ORACLE_MAX_GROUND_TRUTH:
        raise ContractError(
            'oracle instance too large: {} candidates, {} ground truth'
            .format(len(candidates), len(ground_truth)))
    if not ground_truth:
        return None
    if not candidates:
        return 0.0

    ranked = []
    remaining = list(range(len(candidates)))
    while remaining:
        best = remaining[0]
        for k in remaining[1:]:
            if candidates[k][1] > candidates[best][1]:
                best = k
        ranked.append(best)
        remaining.remove(best)

    used = [False] * len(ground_truth)
    hits = []
    for k in ranked:
        interval = candidates[k][0]
        choice, choice_iou = None, -1.0
        for g, gt in enumerate(ground_truth):
            overlap = tiou(interval, gt)
            if used[g] or overlap < threshold:
                continue
            if overlap > choice_iou:
                choice, choice_iou = g, overlap
        if choice is None:
            hits.append(False)
        else:
            used[choice] = True
            hits.append(True)

    precisions = []
    found = 0
    for rank, hit in enumerate(hits, start=1):
        found += hit
        precisions.append(found / rank)

    area = 0.0
    for rank, hit in enumerate(hits):
        if hit:
            area += max(precisions[rank:]) / len(ground_truth)
    return area


@dataclass
class EvaluationReport:
    """
    mAP table of a split
    """
    map: Dict[float, float]
    avg_map: float
    avg_map_high: float
    per_class_ap: Dict[int, Optional[float]]
    videos: int = 0
    inference_seconds: Optional[float] = None
    expert_usage: List[List[float]] = field(default_factory=list)

    def to_json(self) -> Dict:
        """
        Converts the report to its JSON file layout
        """
        res = {'map': {'{:.1f}'.format(t): v for t, v in self.map.items()},
               'avg_map': self.avg_map,
               'avg_map_high': self.avg_map_high,
               'per_class_ap': {str(c): v
                                for c, v in self.per_class_ap.items()},
               'videos': self.videos,
               'expert_usage': self.expert_usage}
        if self.inference_seconds is not None:
            res['inference_seconds'] = self.inference_seconds
        return res

    def to_text(self, title: str = 'esgnet') -> str:
        """
        Formats the report as a plain-text table, one column per
        threshold
        """
        thresholds = sorted(self.map)
        header = ['Method'] + ['{:.1f}'.format(t) for t in thresholds] + \
            ['Avg.']
        row = [title] + ['{:.1f}'.format(100 * self.map[t])
                         for t in thresholds] + \
            ['{:.1f}'.format(100 * self.avg_map)]
        widths = [max(len(h), len(r)) for h, r in zip(header, row)]
        lines = [' | '.join(h.rjust(w) for h, w in zip(header, widths)),
                 '-+-'.join('-' * w for w in widths),
                 ' | '.join(r.rjust(w) for r, w in zip(row, widths))]
        return '\n'.join(lines) + '\n'


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0


def mean_ap(detections: Mapping[str, Sequence[Candidate]],
            ground_truth: Mapping[str, Sequence[EventAnnotation]],
            num_classes: int,
            thresholds: Sequence[float] = TIOU_THRESHOLDS) \
        -> EvaluationReport:
    """
    Dataset-wide mAP at every threshold, averaged over the classes that
    have ground truth, plus the average over thresholds
    """
    per_class_dets: Dict[int, List[Detection]] = {
        c: [] for c in range(num_classes)}
    for vid in sorted(detections):
        for cand in detections[vid]:
            if 0 <= cand.class_id < num_classes:
                per_class_dets[cand.class_id].append(
                    Detection(vid, cand.t_start, cand.t_end, cand.score))
    per_class_gt: Dict[int, Dict[str, List[Interval]]] = {
        c: {} for c in range(num_classes)}
    for vid in sorted(ground_truth):
        for event in ground_truth[vid]:
            per_class_gt[event.class_id].setdefault(vid, []).append(
                (event.t_start, event.t_end))

    table: Dict[float, float] = {}
    class_scores: Dict[int, List[float]] = {c: [] for c in
                                            range(num_classes)}
    for threshold in thresholds:
        aps = []
        for class_id in range(num_classes):
            ap = average_precision(per_class_dets[class_id],
                                   per_class_gt[class_id], threshold)
            if ap is not None:
                aps.append(ap)
                class_scores[class_id].append(ap)
        table[threshold] = _mean(aps)

    high = [table[t] for t in HIGH_TIOU_THRESHOLDS if t in table]
    return EvaluationReport(
        map=table,
        avg_map=_mean(list(table.values())),
        avg_map_high=_mean(high),
        per_class_ap={c: (_mean(v) if v else None)
                      for c, v in class_scores.items()},
        videos=len(set(detections) | set(ground_truth)))
