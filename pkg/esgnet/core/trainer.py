"""
Training loop
"""

import math
from dataclasses import (
    dataclass,
    field
)
from pathlib import Path
from typing import (
    Callable,
    Dict,
    List,
    Optional,
    Sequence
)

import numpy as np

from ..tensor.optim import (
    Adam,
    clip_grad_norm
)
from ..tensor.tensor import backward
from .checkpoint import (
    load_checkpoint,
    restore,
    save_checkpoint
)
from .config import RunConfig
from .constants import (
    BEST_CHECKPOINT_NAME,
    FINAL_LR_RATIO,
    LAST_CHECKPOINT_NAME,
    METRICS_LOG_NAME
)
from .dataset import (
    Prefetcher,
    VideoSample,
    batches
)
from .exceptions import (
    NonFiniteError,
    TrainingAborted
)
from .inference import evaluate_split
from .logger import (
    JsonLinesWriter,
    Logger
)
from .losses import (
    LossBreakdown,
    total_loss
)
from .model import ESGNet
from .multi_step_feedback import (
    Feedback,
    MultiStepFeedback
)


def lr_at(step: int,
          warmup_steps: int,
          total_steps: int,
          base_lr: float,
          final_ratio: float = FINAL_LR_RATIO) -> float:
    """
    Learning rate before optimizer step ``step`` (0-based).

    Rises linearly from 0 to ``base_lr`` over the warmup, then follows a
    cosine down to ``final_ratio * base_lr`` at ``total_steps``.
    """
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    final = final_ratio * base_lr
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return final + (base_lr - final) * 0.5 * (1 + math.cos(math.pi * progress))


def tau_at(step: int, total_steps: int, start: float, end: float) -> float:
    """
    Gumbel temperature, annealed linearly from ``start`` to ``end``
    """
    if total_steps <= 1:
        return end
    progress = min(1.0, step / (total_steps - 1))
    return start + (end - start) * progress


def steps_per_epoch(samples: int, batch_size: int) -> int:
    """
    Number of optimizer steps in one pass over ``samples``
    """
    return max(1, math.ceil(samples / batch_size))


@dataclass
class TrainingState:
    """
    Progress of a training run, persisted in checkpoint metadata
    """
    step: int = 0
    epoch: int = 0
    best_score: float = -1.0
    history: List[Dict] = field(default_factory=list)

    def to_json(self) -> Dict:
        """
        Returns the checkpoint metadata fields
        """
        return {'step': self.step,
                'epoch': self.epoch,
                'best_score': self.best_score}


@dataclass
class _PreparedSample:
    sample: VideoSample
    valid: np.ndarray
    targets: object


class Trainer:
    """
    Trains a model on a train split, scoring a val split after every
    epoch.

    Writes ``metrics.jsonl``, ``last.ckpt`` (after every epoch) and
    ``best.ckpt`` (best val average mAP so far) to the output directory.
    """

    def __init__(self,
                 cfg: RunConfig,
                 model: Optional[ESGNet] = None,
                 output_dir: Optional[Path] = None,
                 feedback: Optional[Feedback] = None,
                 status_changed: Optional[Callable[[str], None]] = None):
        cfg.validate()
        self.cfg = cfg
        self.model = model or ESGNet(cfg.model)
        self.output_dir = Path(output_dir or cfg.output_dir)
        self.feedback = feedback
        self.status_changed = status_changed
        self.optimizer = Adam(self.model.parameters(),
                              weight_decay=cfg.weight_decay)
        self.state = TrainingState()
        self._resumed = False

    def _status(self, message: str):
        if self.status_changed:
            self.status_changed(message)

    def resume(self, path: Path):
        """
        Continues from a checkpoint: parameters, Adam moments, step,
        epoch, best score and the Gumbel noise stream
        """
        checkpoint = load_checkpoint(path)
        restore(self.model, checkpoint, self.cfg.model)
        self.state.step = checkpoint.step
        self.state.epoch = checkpoint.epoch
        self.state.best_score = float(
            checkpoint.metadata.get('best_score', -1.0))
        noise = checkpoint.metadata.get('noise_state')
        if noise:
            self.model.mode.set_noise_state(noise)
        self._resumed = True
        Logger.instance().log_message_json({
            'type': Logger.CHECKPOINT,
            'resumed': str(path),
            'step': self.state.step,
            'epoch': self.state.epoch,
        })

    def _prepare(self, batch: Sequence[VideoSample]) \
            -> List[_PreparedSample]:
        res = []
        for sample in batch:
            padded, valid = self.model.prepare(sample)
            res.append(_PreparedSample(padded, valid,
                                       self.model.targets(padded, valid)))
        return res

    def _save(self, name: str):
        save_checkpoint(self.output_dir / name,
                        self.model,
                        self.cfg.model,
                        noise_state=self.model.mode.noise_state(),
                        run=self.cfg.to_json(),
                        **self.state.to_json())

    def train_step(self,
                   batch: Sequence[_PreparedSample],
                   lr: float,
                   tau: float) -> LossBreakdown:
        """
        One optimizer step on a batch. Gradients are averaged over the
        batch, clipped, then applied.
        """
        model_cfg = self.cfg.model
        parts = []
        for item in batch:
            outputs = self.model(item.sample.audio, item.sample.visual,
                                 item.valid, training=True, tau=tau)
            loss, breakdown = total_loss(outputs.heads, outputs.guidance,
                                         item.targets, model_cfg.alphas,
                                         model_cfg.focal_alpha,
                                         model_cfg.focal_gamma)
            if not math.isfinite(breakdown.total):
                raise NonFiniteError('total_loss', 'forward')
            backward(loss)
            parts.append(breakdown)

        scale = 1.0 / len(batch)
        for param in self.optimizer.params:
            param.grad *= param.grad.dtype.type(scale)
        clip_grad_norm(self.optimizer.params, self.cfg.clip_grad_norm)
        self.optimizer.step(lr)

        cls_value = float(np.mean([p.cls for p in parts]))
        reg_value = float(np.mean([p.reg for p in parts]))
        mcls_value = float(np.mean([p.mcls for p in parts]))
        return LossBreakdown(cls=cls_value,
                             reg=reg_value,
                             mcls=mcls_value,
                             total=cls_value + reg_value + mcls_value)

    def train(self,
              train_samples: Sequence[VideoSample],
              val_samples: Sequence[VideoSample]) -> TrainingState:
        """
        Runs the remaining epochs.

        Raises TrainingAborted if a loss or gradient stops being finite;
        the checkpoints of the last completed epoch are left in place.
        """
        cfg = self.cfg
        per_epoch = steps_per_epoch(len(train_samples), cfg.batch_size)
        total_steps = cfg.epochs * per_epoch
        warmup_steps = cfg.warmup_epochs * per_epoch
        remaining = max(0, cfg.epochs - self.state.epoch)
        feedback = MultiStepFeedback(remaining, self.feedback) \
            if self.feedback else None

        with JsonLinesWriter(self.output_dir / METRICS_LOG_NAME,
                             append=self._resumed) as metrics:
            for epoch in range(self.state.epoch, cfg.epochs):
                self._status('Epoch {}/{}'.format(epoch + 1, cfg.epochs))
                rng = np.random.default_rng([cfg.seed, epoch])
                prefetcher = Prefetcher(
                    (self._prepare(batch) for batch in
                     batches(train_samples, cfg.batch_size, rng)),
                    cfg.prefetch)
                for i, batch in enumerate(prefetcher):
                    if self.feedback and self.feedback.is_canceled():
                        prefetcher.close()
                        self._status('Canceled')
                        return self.state
                    lr = lr_at(self.state.step, warmup_steps, total_steps,
                               cfg.lr)
                    tau = tau_at(self.state.step, total_steps,
                                 cfg.model.gumbel_tau_start,
                                 cfg.model.gumbel_tau_end)
                    try:
                        breakdown = self.train_step(batch, lr, tau)
                    except NonFiniteError as e:
                        prefetcher.close()
                        Logger.instance().log_error_json({
                            'type': Logger.NON_FINITE,
                            'step': self.state.step,
                            'error': str(e),
                        })
                        raise TrainingAborted(
                            'non-finite value at step {}: {}'.format(
                                self.state.step, e)) from e
                    record = {'step': self.state.step}
                    record.update(breakdown.to_json())
                    metrics.write(record)
                    self.state.step += 1
                    if feedback:
                        feedback.set_progress(100 * (i + 1) / per_epoch)

                self.state.epoch = epoch + 1
                report, _ = evaluate_split(self.model, val_samples,
                                           cfg.eval_workers)
                self.state.history.append({'epoch': self.state.epoch,
                                           'val_avg_map': report.avg_map})
                Logger.instance().log_message_json({
                    'type': Logger.TRAIN_STEP,
                    'epoch': self.state.epoch,
                    'step': self.state.step,
                    'val_avg_map': report.avg_map,
                })
                if report.avg_map > self.state.best_score:
                    self.state.best_score = report.avg_map
                    self._save(BEST_CHECKPOINT_NAME)
                self._save(LAST_CHECKPOINT_NAME)
                if feedback:
                    feedback.step_finished()

        self._status('Finished')
        return self.state
