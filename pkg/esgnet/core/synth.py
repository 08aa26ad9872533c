"""
Synthetic audio-visual event dataset generator
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import (
    Dict,
    List,
    Optional,
    Tuple
)

import numpy as np

from .config import SynthConfig
from .dataset import (
    EventAnnotation,
    VideoSample,
    save_split
)
from .enums import Split
from .logger import Logger
from .multi_step_feedback import (
    Feedback,
    MultiStepFeedback
)

_PROTOTYPE_STREAM = 0
_SPLIT_STREAMS = {
    Split.Train: 1,
    Split.Val: 2,
    Split.Test: 3
}


@dataclass
class ClassPrototypes:
    """
    One fixed feature vector per class and modality
    """
    audio: np.ndarray
    visual: np.ndarray

    @staticmethod
    def generate(cfg: SynthConfig) -> 'ClassPrototypes':
        """
        Draws the prototypes from the dataset seed
        """
        rng = np.random.default_rng([cfg.seed, _PROTOTYPE_STREAM])
        audio = cfg.prototype_scale * rng.standard_normal(
            (cfg.num_classes, cfg.audio_dim))
        visual = cfg.prototype_scale * rng.standard_normal(
            (cfg.num_classes, cfg.visual_dim))
        return ClassPrototypes(audio.astype(np.float32),
                               visual.astype(np.float32))


def video_id(split: Split, index: int) -> str:
    """
    Returns the id of the index-th video of a split
    """
    return '{}_{:04d}'.format(Split.to_string(split), index)


def _draw_event(rng: np.random.Generator,
                cfg: SynthConfig,
                length: int) -> Tuple[int, int]:
    duration = int(rng.integers(cfg.duration_range[0],
                                cfg.duration_range[1] + 1))
    if duration >= length:
        return 0, length
    start = int(rng.integers(0, length - duration + 1))
    return start, start + duration


def _partner_event(rng: np.random.Generator,
                   cfg: SynthConfig,
                   length: int,
                   anchor: EventAnnotation,
                   lag: Tuple[int, int]) -> Tuple[int, int]:
    offset = int(rng.integers(lag[0], lag[1] + 1))
    duration = int(rng.integers(cfg.duration_range[0],
                                cfg.duration_range[1] + 1))
    start = int(np.clip(anchor.t_start + offset, 0, length - 1))
    return start, min(start + duration, length)


def draw_events(rng: np.random.Generator,
                cfg: SynthConfig,
                length: int) -> List[EventAnnotation]:
    """
    Draws the events of one video, including co-occurring partners.

    Partners may trigger further rules, for at most as many generations
    as there are rules.
    """
    count = int(rng.integers(cfg.events_range[0], cfg.events_range[1] + 1))
    events = []
    for _ in range(count):
        class_id = int(rng.integers(0, cfg.num_classes))
        start, end = _draw_event(rng, cfg, length)
        events.append(EventAnnotation(class_id, float(start), float(end)))

    generation = events
    for _ in range(len(cfg.co_occurrences)):
        partners = []
        for anchor in generation:
            for rule in cfg.co_occurrences:
                if anchor.class_id != rule.class_a:
                    continue
                if rng.random() >= rule.probability:
                    continue
                start, end = _partner_event(rng, cfg, length, anchor,
                                            rule.lag)
                partners.append(
                    EventAnnotation(rule.class_b, float(start), float(end)))
        if not partners:
            break
        events.extend(partners)
        generation = partners
    return events


def generate_video(cfg: SynthConfig,
                   prototypes: ClassPrototypes,
                   split: Split,
                   index: int) -> VideoSample:
    """
    Generates one video from its own seed, so videos can be generated in
    any order
    """
    rng = np.random.default_rng([cfg.seed, _SPLIT_STREAMS[split], index])
    length = int(rng.integers(cfg.length_range[0], cfg.length_range[1] + 1))
    events = draw_events(rng, cfg, length)

    audio = cfg.background_noise * rng.standard_normal(
        (length, cfg.audio_dim))
    visual = cfg.background_noise * rng.standard_normal(
        (length, cfg.visual_dim))
    for event in events:
        s, e = int(event.t_start), int(event.t_end)
        audio[s:e] += prototypes.audio[event.class_id] + \
            cfg.prototype_noise * rng.standard_normal((e - s, cfg.audio_dim))
        visual[s:e] += prototypes.visual[event.class_id] + \
            cfg.prototype_noise * rng.standard_normal((e - s, cfg.visual_dim))

    events.sort(key=lambda ev: (ev.t_start, ev.t_end, ev.class_id))
    return VideoSample(id=video_id(split, index),
                       audio=audio.astype(np.float32),
                       visual=visual.astype(np.float32),
                       events=events)


def generate_dataset(cfg: SynthConfig,
                     workers: int = 1,
                     feedback: Optional[Feedback] = None) \
        -> Dict[Split, List[VideoSample]]:
    """
    Generates the train, val and test splits
    """
    cfg.validate()
    prototypes = ClassPrototypes.generate(cfg)
    counts = {Split.from_string(k): v
              for k, v in cfg.videos_per_split().items()}
    multi_step_feedback = MultiStepFeedback(len(counts), feedback) \
        if feedback else None

    res = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        for step, (split, count) in enumerate(counts.items()):
            if multi_step_feedback:
                multi_step_feedback.set_current_step(step)
            res[split] = list(executor.map(
                lambda i, s=split: generate_video(cfg, prototypes, s, i),
                range(count)))
            if multi_step_feedback:
                multi_step_feedback.step_finished()
            Logger.instance().log_message_json({
                'type': Logger.DATASET,
                'split': Split.to_string(split),
                'videos': count,
                'events': sum(len(v.events) for v in res[split]),
            })
    return res


def write_dataset(cfg: SynthConfig,
                  data_dir: Path,
                  workers: int = 1,
                  feedback: Optional[Feedback] = None) \
        -> Dict[Split, List[VideoSample]]:
    """
    Generates the dataset and writes feature and annotation files
    """
    dataset = generate_dataset(cfg, workers, feedback)
    for split, samples in dataset.items():
        save_split(data_dir, split, samples)
    return dataset
