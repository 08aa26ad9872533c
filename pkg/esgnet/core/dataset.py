"""
Video samples, annotations and split loading
"""

import queue
import threading
from dataclasses import (
    dataclass,
    field,
    replace
)
from pathlib import Path
from typing import (
    Dict,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union
)

import numpy as np

from .constants import (
    ANNOTATION_FILE_SUFFIX,
    FEATURE_FILE_SUFFIX
)
from .enums import Split
from .exceptions import (
    ContractError,
    UnknownVideoError
)
from .feature_io import (
    load_features,
    save_features
)
from .logger import (
    JsonLinesWriter,
    Logger,
    read_json_lines
)

FEATURES_DIR = 'features'


@dataclass(frozen=True)
class EventAnnotation:
    """
    One ground truth event. Times are in snippets, start inclusive and
    end exclusive.
    """
    class_id: int
    t_start: float
    t_end: float

    def duration(self) -> float:
        """
        Returns the event length in snippets
        """
        return self.t_end - self.t_start

    def is_valid(self, length: float) -> bool:
        """
        Returns True if 0 <= start < end <= length
        """
        return 0 <= self.t_start < self.t_end <= length

    def to_json(self) -> Dict:
        """
        Converts the event to an annotation record
        """
        return {'class': self.class_id,
                'start': self.t_start,
                'end': self.t_end}

    @staticmethod
    def from_json(res: Dict) -> 'EventAnnotation':
        """
        Creates an event from an annotation record
        """
        return EventAnnotation(class_id=int(res['class']),
                               t_start=float(res['start']),
                               t_end=float(res['end']))


@dataclass
class VideoSample:
    """
    Synchronized audio and visual snippet features of one video, plus
    its events
    """
    id: str
    audio: np.ndarray
    visual: np.ndarray
    events: List[EventAnnotation] = field(default_factory=list)

    def __post_init__(self):
        if self.audio.shape[0] != self.visual.shape[0]:
            raise ContractError(
                'video {}: audio has {} snippets but visual has {}'.format(
                    self.id, self.audio.shape[0], self.visual.shape[0]))

    @property
    def length(self) -> int:
        """
        Returns the number of snippets
        """
        return self.audio.shape[0]

    def annotation_json(self) -> Dict:
        """
        Returns the annotation record of the video
        """
        return {'id': self.id,
                'T': self.length,
                'events': [e.to_json() for e in self.events]}


@dataclass
class VideoAnnotation:
    """
    One line of an annotation file
    """
    id: str
    length: int
    events: List[EventAnnotation]

    @staticmethod
    def from_json(res: Dict) -> 'VideoAnnotation':
        """
        Creates an annotation from an annotation record
        """
        return VideoAnnotation(
            id=res['id'],
            length=int(res['T']),
            events=[EventAnnotation.from_json(e)
                    for e in res.get('events', [])])


def clip_events(events: Sequence[EventAnnotation],
                length: float) -> List[EventAnnotation]:
    """
    Clips events to [0, length), dropping events left empty
    """
    res = []
    for event in events:
        start = max(0.0, event.t_start)
        end = min(float(length), event.t_end)
        if start < end:
            res.append(EventAnnotation(event.class_id, start, end))
    return res


def pad_or_crop(sample: VideoSample,
                max_length: int) -> Tuple[VideoSample, np.ndarray]:
    """
    Zero pads or truncates both feature streams to ``max_length``
    snippets.

    Returns the resized sample and a mask which is True exactly on the
    snippets of the original video.
    """
    if max_length < 1:
        raise ContractError('max_length must be positive')

    kept = min(sample.length, max_length)
    valid = np.zeros(max_length, dtype=bool)
    valid[:kept] = True

    def _resize(features: np.ndarray) -> np.ndarray:
        res = np.zeros((max_length, features.shape[1]), dtype=features.dtype)
        res[:kept] = features[:kept]
        return res

    resized = replace(sample,
                      audio=_resize(sample.audio),
                      visual=_resize(sample.visual),
                      events=clip_events(sample.events, kept))
    return resized, valid


def annotation_path(data_dir: Path, split: Split) -> Path:
    """
    Returns the annotation file of a split
    """
    return Path(data_dir) / (Split.to_string(split) + ANNOTATION_FILE_SUFFIX)


def feature_paths(data_dir: Path, video_id: str) -> Tuple[Path, Path]:
    """
    Returns the (audio, visual) feature files of a video
    """
    folder = Path(data_dir) / FEATURES_DIR
    return (folder / '{}_audio{}'.format(video_id, FEATURE_FILE_SUFFIX),
            folder / '{}_visual{}'.format(video_id, FEATURE_FILE_SUFFIX))


def write_annotations(path: Path, samples: Sequence[VideoSample]):
    """
    Writes an annotation file, one video per line
    """
    with JsonLinesWriter(path) as writer:
        writer.write_all(s.annotation_json() for s in samples)


def read_annotations(path: Path) -> List[VideoAnnotation]:
    """
    Reads an annotation file
    """
    return [VideoAnnotation.from_json(r) for r in read_json_lines(path)]


def save_split(data_dir: Path, split: Split, samples: Sequence[VideoSample]):
    """
    Writes the feature files and the annotation file of a split
    """
    for sample in samples:
        audio_path, visual_path = feature_paths(data_dir, sample.id)
        save_features(sample.audio, audio_path)
        save_features(sample.visual, visual_path)
    write_annotations(annotation_path(data_dir, split), samples)


def load_video(data_dir: Path, annotation: VideoAnnotation) -> VideoSample:
    """
    Loads the features of an annotated video
    """
    audio_path, visual_path = feature_paths(data_dir, annotation.id)
    return VideoSample(id=annotation.id,
                       audio=load_features(audio_path),
                       visual=load_features(visual_path),
                       events=list(annotation.events))


def load_split(data_dir: Path, split: Split) -> List[VideoSample]:
    """
    Loads every video of a split. A missing annotation file is an
    empty split.
    """
    path = annotation_path(data_dir, split)
    if not path.exists():
        Logger.instance().log_message_json({
            'type': Logger.DATASET,
            'message': 'no annotation file',
            'split': Split.to_string(split),
        })
        return []
    return [load_video(data_dir, a) for a in read_annotations(path)]


def find_video(data_dir: Path, video_id: str,
               split: Optional[Split] = None) -> VideoSample:
    """
    Looks up a video by id, in one split or in all of them
    """
    splits = [split] if split is not None else list(Split)
    for candidate in splits:
        path = annotation_path(data_dir, candidate)
        if not path.exists():
            continue
        for annotation in read_annotations(path):
            if annotation.id == video_id:
                return load_video(data_dir, annotation)
    raise UnknownVideoError('unknown video id {}'.format(video_id))


def batches(samples: Sequence[VideoSample],
            batch_size: int,
            rng: Optional[np.random.Generator] = None) \
        -> Iterator[List[VideoSample]]:
    """
    Yields batches of samples, shuffled when ``rng`` is given
    """
    order = np.arange(len(samples))
    if rng is not None:
        rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        yield [samples[i] for i in order[start:start + batch_size]]


class Prefetcher:
    """
    Prepares items on a background thread, handing them over through a
    bounded queue.

    Iteration yields items in source order and re-raises any error the
    worker hit.
    """

    _DONE = object()

    def __init__(self, source, size: int = 2):
        self._source = source
        self._queue: queue.Queue = queue.Queue(maxsize=max(1, size))
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        try:
            for item in self._source:
                if self._stop.is_set():
                    return
                self._queue.put((item, None))
        except Exception as e:  # pylint: disable=broad-except
            self._queue.put((None, e))
            return
        self._queue.put((self._DONE, None))

    def __iter__(self):
        self._thread.start()
        try:
            while True:
                item, error = self._queue.get()
                if error is not None:
                    raise error
                if item is self._DONE:
                    return
                yield item
        finally:
            self.close()

    def close(self):
        """
        Stops the worker after its current item
        """
        self._stop.set()
        # unblock a worker waiting on a full queue
        while not self._queue.empty():
            try:
                self._queue.get_nowait()
            except queue.Empty:
                break


def as_split(value: Union[str, Split]) -> Split:
    """
    Converts a split name to a Split
    """
    return value if isinstance(value, Split) else Split.from_string(value)
