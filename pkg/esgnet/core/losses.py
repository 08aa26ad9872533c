"""
Loss terms: focal classification, 1D gIoU regression and the
multi-stage guidance loss
"""

from dataclasses import dataclass
from typing import (
    Dict,
    Optional,
    Sequence,
    Tuple
)

import numpy as np

from ..tensor import ops
from ..tensor.tensor import Tensor
from .config import validate_alphas
from .constants import GIOU_EPS
from .esi import GuidanceLogits
from .exceptions import DimensionError
from .heads import HeadOutputs
from .targets import Targets


def _zero(like: Tensor) -> Tensor:
    return Tensor(np.zeros((), dtype=like.dtype))


def focal_loss(scores: Tensor,
               targets: np.ndarray,
               alpha: float = 0.25,
               gamma: float = 2.0,
               valid: Optional[np.ndarray] = None,
               from_logits: bool = True) -> Tensor:
    """
    Binary focal loss averaged over valid positions x classes.

    ``scores`` are logits unless ``from_logits`` is False, in which case
    they are probabilities in (0, 1).
    """
    if scores.shape != targets.shape:
        raise DimensionError('focal_loss', scores.shape, targets.shape)
    y = targets.astype(scores.dtype)
    if valid is None:
        valid = np.ones(scores.shape[0], dtype=bool)
    count = int(np.count_nonzero(valid)) * scores.shape[1]
    if count == 0:
        return _zero(scores)

    if from_logits:
        probs = ops.sigmoid(scores)
        ce = ops.softplus(-scores) * y + ops.softplus(scores) * (1 - y)
    else:
        probs = scores
        ce = -(ops.log(scores) * y + ops.log(1 - scores) * (1 - y))
    miss = (1 - probs) * y + probs * (1 - y)
    weight = alpha * y + (1 - alpha) * (1 - y)
    loss = ops.power(miss, gamma) * ce * weight
    loss = loss * valid.astype(scores.dtype)[:, None]
    return ops.sum(loss) * (1.0 / count)


def giou_1d(pred_start: Tensor,
            pred_end: Tensor,
            gt_start: np.ndarray,
            gt_end: np.ndarray) -> Tensor:
    """
    Generalized IoU of paired 1D intervals
    """
    gt_start = np.asarray(gt_start, dtype=pred_start.dtype)
    gt_end = np.asarray(gt_end, dtype=pred_start.dtype)
    inter = ops.relu(ops.minimum(pred_end, gt_end)
                     - ops.maximum(pred_start, gt_start))
    union = (pred_end - pred_start) + (gt_end - gt_start) - inter
    hull = ops.maximum(pred_end, gt_end) - ops.minimum(pred_start, gt_start)
    return inter / (union + GIOU_EPS) - (hull - union) / (hull + GIOU_EPS)


def giou_loss_1d(pred_start: Tensor,
                 pred_end: Tensor,
                 gt_start: np.ndarray,
                 gt_end: np.ndarray) -> Tensor:
    """
    Mean of 1 - gIoU over the given interval pairs; zero for none
    """
    if pred_start.size == 0:
        return _zero(pred_start)
    giou = giou_1d(pred_start, pred_end, gt_start, gt_end)
    return ops.mean(1 - giou)


def regression_loss(heads: HeadOutputs, targets: Targets) -> Tensor:
    """
    gIoU loss over the (position, class) pairs with a regression target.

    Only the channels of positive classes are read, so every other
    distance receives exactly zero gradient.
    """
    decoder = targets.decoder
    rows, classes = np.nonzero(decoder.positive)
    if rows.size == 0:
        return _zero(heads.distances)
    dtype = heads.distances.dtype
    times = decoder.positions.times[rows].astype(dtype)
    strides = decoder.positions.strides[rows].astype(dtype)
    d_start = heads.distances[rows, classes, 0]
    d_end = heads.distances[rows, classes, 1]
    gt = decoder.distances[rows, classes]
    return giou_loss_1d(times - d_start * strides,
                        times + d_end * strides,
                        times - gt[:, 0],
                        times + gt[:, 1])


@dataclass
class StageLoss:
    """
    Guidance loss of one stage, before its weight
    """
    audio: float
    visual: float


def multi_stage_loss(guidance: GuidanceLogits,
                     targets: Targets,
                     alphas: Sequence[float],
                     alpha: float = 0.25,
                     gamma: float = 2.0) \
        -> Tuple[Tensor, Dict[int, StageLoss]]:
    """
    sum_i alpha_i (L_audio_i + L_visual_i), each term a focal loss.

    Stages weighted zero are skipped entirely and receive no gradient.
    """
    validate_alphas(alphas)
    total = None
    stages = {}
    for index, (weight, (audio, visual)) in enumerate(
            zip(alphas, guidance.stages()), start=1):
        if weight == 0:
            continue
        if index < 3:
            labels, valid = targets.snippets, targets.snippet_valid
        else:
            labels, valid = targets.pyramid, targets.pyramid_valid
        audio_loss = focal_loss(audio, labels, alpha, gamma, valid)
        visual_loss = focal_loss(visual, labels, alpha, gamma, valid)
        stages[index] = StageLoss(audio_loss.item(), visual_loss.item())
        term = (audio_loss + visual_loss) * weight
        total = term if total is None else total + term
    if total is None:
        total = _zero(guidance.stage1[0])
    return total, stages


@dataclass
class LossBreakdown:
    """
    Loss components of one step
    """
    cls: float
    reg: float
    mcls: float
    total: float

    def to_json(self) -> Dict:
        """
        Returns the metrics log fields
        """
        return {'L_cls': self.cls,
                'L_reg': self.reg,
                'L_mcls': self.mcls,
                'total': self.total}


def total_loss(heads: HeadOutputs,
               guidance: GuidanceLogits,
               targets: Targets,
               alphas: Sequence[float],
               alpha: float = 0.25,
               gamma: float = 2.0) -> Tuple[Tensor, LossBreakdown]:
    """
    L_cls + L_reg + L_mcls, unweighted
    """
    l_cls = focal_loss(heads.logits, targets.decoder.classes, alpha, gamma,
                       targets.pyramid_valid)
    l_reg = regression_loss(heads, targets)
    l_mcls, _ = multi_stage_loss(guidance, targets, alphas, alpha, gamma)
    total = l_cls + l_reg + l_mcls
    cls_value, reg_value, mcls_value = l_cls.item(), l_reg.item(), \
        l_mcls.item()
    return total, LossBreakdown(cls=cls_value,
                                reg=reg_value,
                                mcls=mcls_value,
                                total=cls_value + reg_value + mcls_value)
