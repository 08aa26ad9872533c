"""
Shared test fixtures
"""

from typing import (
    List,
    Optional,
    Sequence
)

import numpy as np

from esgnet.core.config import (
    ModelConfig,
    RunConfig,
    SynthConfig
)
from esgnet.core.dataset import (
    EventAnnotation,
    VideoSample
)
from esgnet.core.logger import Logger


def toy_model_config(**overrides) -> ModelConfig:
    """
    A model small enough for finite difference checks
    """
    values = dict(audio_dim=4,
                  visual_dim=4,
                  embed_dim=8,
                  heads=2,
                  ffn_ratio=2,
                  pyramid_levels=2,
                  max_length=8,
                  num_classes=4,
                  temporal_blocks=1,
                  final_blocks=1,
                  aggregate_heads=2,
                  moe_layers=2,
                  experts=2)
    values.update(overrides)
    return ModelConfig(**values)


def toy_synth_config(**overrides) -> SynthConfig:
    """
    A tiny dataset matching toy_model_config
    """
    values = dict(train_videos=4,
                  val_videos=2,
                  test_videos=2,
                  length_range=(5, 8),
                  audio_dim=4,
                  visual_dim=4,
                  num_classes=4,
                  events_range=(1, 2),
                  duration_range=(2, 4),
                  co_occurrences=[])
    values.update(overrides)
    return SynthConfig(**values)


def toy_run_config(output_dir: str = 'runs/test',
                   data_dir: str = 'data',
                   **overrides) -> RunConfig:
    """
    A run config for the toy model and dataset
    """
    values = dict(model=toy_model_config(),
                  synth=toy_synth_config(),
                  epochs=2,
                  warmup_epochs=1,
                  batch_size=2,
                  output_dir=output_dir,
                  data_dir=data_dir)
    values.update(overrides)
    return RunConfig(**values)


def random_sample(rng: np.random.Generator,
                  length: int,
                  dim: int = 4,
                  events: Optional[Sequence[EventAnnotation]] = None,
                  video_id: str = 'video') -> VideoSample:
    """
    A sample of standard normal features
    """
    return VideoSample(id=video_id,
                       audio=rng.standard_normal((length, dim))
                       .astype(np.float32),
                       visual=rng.standard_normal((length, dim))
                       .astype(np.float32),
                       events=list(events or []))


def numeric_gradient(fn, array: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """
    Central differences of the scalar fn() with respect to ``array``,
    which is perturbed in place
    """
    grad = np.zeros_like(array)
    for index in np.ndindex(*array.shape):
        original = array[index]
        array[index] = original + h
        plus = fn()
        array[index] = original - h
        minus = fn()
        array[index] = original
        grad[index] = (plus - minus) / (2 * h)
    return grad


class RecordingLogger(Logger):
    """
    Keeps every record in memory
    """

    def __init__(self):
        super().__init__()
        self.messages: List = []
        self.errors: List = []

    def log_message(self, message: str):
        self.messages.append(message)

    def log_message_json(self, message):
        self.messages.append(message)

    def log_error(self, error: str):
        self.errors.append(error)

    def log_error_json(self, error):
        self.errors.append(error)
