"""
Model, dataset and run configuration
"""

import json
from dataclasses import (
    asdict,
    dataclass,
    field,
    fields
)
from pathlib import Path
from typing import (
    Dict,
    List,
    Optional,
    Tuple,
    Union
)

from .enums import (
    GateMode,
    NmsMethod
)
from .exceptions import ConfigError

#: Regression range of each pyramid level, in snippets. None is open ended.
DEFAULT_REGRESSION_RANGES = (
    (0.0, 4.0),
    (4.0, 8.0),
    (8.0, 16.0),
    (16.0, 32.0),
    (32.0, 64.0),
    (64.0, None),
)


def _load_json(jsons: Union[str, Dict]) -> Dict:
    if isinstance(jsons, str):
        try:
            jsons = json.loads(jsons)
        except json.JSONDecodeError as e:
            raise ConfigError('malformed config JSON: {}'.format(e)) from e
    if not isinstance(jsons, dict):
        raise ConfigError('config must be a JSON object, got {}'.format(
            type(jsons).__name__))
    return dict(jsons)


def _known_fields(cls, values: Dict) -> Dict:
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError('unknown {} keys: {}'.format(
            cls.__name__, ', '.join(sorted(unknown))))
    return values


@dataclass
class ModelConfig:
    """
    Every architectural hyperparameter. Defaults are the desk scale
    configuration; see published() for the published one.
    """

    audio_dim: int = 16
    visual_dim: int = 16
    embed_dim: int = 32
    heads: int = 4
    ffn_ratio: int = 4
    pyramid_levels: int = 4
    max_length: int = 96
    num_classes: int = 8
    temporal_blocks: int = 2
    final_blocks: int = 1
    aggregate_heads: int = 2
    moe_layers: int = 4
    experts: int = 2
    expert_kernel: int = 3
    adjacency_init_std: float = 0.01
    early_fusion: bool = True
    alphas: Tuple[float, float, float] = (0.3, 0.6, 0.9)
    gumbel_tau_start: float = 2.0
    gumbel_tau_end: float = 0.5
    gate_mode: str = 'hard'
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    nms_method: str = 'gaussian'
    nms_sigma: float = 0.5
    nms_linear_threshold: float = 0.3
    nms_prune_floor: float = 1e-3
    score_floor: float = 1e-3
    max_candidates: int = 1000
    max_detections: int = 100
    regression_ranges: Optional[List[Tuple[float, Optional[float]]]] = None
    seed: int = 7

    def __post_init__(self):
        self.alphas = tuple(float(a) for a in self.alphas)
        if self.regression_ranges is None:
            ranges = [list(r) for r in
                      DEFAULT_REGRESSION_RANGES[:self.pyramid_levels]]
            if ranges:
                ranges[-1][1] = None
            self.regression_ranges = [tuple(r) for r in ranges]
        else:
            self.regression_ranges = [
                (float(lo), None if hi is None else float(hi))
                for lo, hi in self.regression_ranges]

    @staticmethod
    def published() -> 'ModelConfig':
        """
        Returns the published configuration, sized for 1536-wide features
        """
        return ModelConfig(audio_dim=1536,
                           visual_dim=1536,
                           embed_dim=512,
                           heads=4,
                           pyramid_levels=6,
                           max_length=256,
                           num_classes=100,
                           temporal_blocks=2,
                           final_blocks=1,
                           aggregate_heads=4,
                           moe_layers=4,
                           experts=2)

    def gate(self) -> GateMode:
        """
        Returns the gate mode as an enum
        """
        return GateMode.from_string(self.gate_mode)

    def nms(self) -> NmsMethod:
        """
        Returns the Soft-NMS method as an enum
        """
        return NmsMethod.from_string(self.nms_method)

    def level_lengths(self) -> List[int]:
        """
        Returns the sequence length of every pyramid level
        """
        return [self.max_length // 2 ** level
                for level in range(self.pyramid_levels)]

    def level_strides(self) -> List[int]:
        """
        Returns the temporal stride of every pyramid level
        """
        return [2 ** level for level in range(self.pyramid_levels)]

    def pyramid_length(self) -> int:
        """
        Returns the total length of the concatenated pyramid
        """
        return sum(self.level_lengths())

    def validate(self):
        """
        Raises ConfigError if the configuration is inconsistent
        """
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                'embed_dim {} is not divisible by {} heads'.format(
                    self.embed_dim, self.heads))
        if self.num_classes < 2:
            raise ConfigError('at least two event classes are required')
        if self.num_classes % self.aggregate_heads != 0:
            raise ConfigError(
                'num_classes {} is not divisible by {} aggregate heads'.format(
                    self.num_classes, self.aggregate_heads))
        if self.pyramid_levels < 1:
            raise ConfigError('at least one pyramid level is required')
        if self.max_length % 2 ** (self.pyramid_levels - 1) != 0:
            raise ConfigError(
                'max_length {} is not divisible by 2^{}'.format(
                    self.max_length, self.pyramid_levels - 1))
        if self.moe_layers < 1 or self.experts < 1:
            raise ConfigError('MoDE needs at least one layer and one expert')
        if self.temporal_blocks < 0 or self.final_blocks < 0:
            raise ConfigError('block counts must be nonnegative')
        if self.expert_kernel % 2 == 0:
            raise ConfigError('expert kernel size must be odd')
        if len(self.regression_ranges) != self.pyramid_levels:
            raise ConfigError('one regression range per pyramid level needed')
        if self.gumbel_tau_start <= 0 or self.gumbel_tau_end <= 0:
            raise ConfigError('gumbel temperatures must be positive')
        validate_alphas(self.alphas)
        try:
            self.gate()
            self.nms()
        except KeyError as e:
            raise ConfigError('unknown setting {}'.format(e)) from e

    def to_json(self) -> Dict:
        """
        Converts the config to a JSON compatible dictionary
        """
        res = asdict(self)
        res['alphas'] = list(self.alphas)
        res['regression_ranges'] = [list(r) for r in self.regression_ranges]
        return res

    @staticmethod
    def from_json(jsons: Union[str, Dict]) -> 'ModelConfig':
        """
        Creates a config from a JSON string or dictionary
        """
        res = _known_fields(ModelConfig, _load_json(jsons))
        return ModelConfig(**res)


def validate_alphas(alphas):
    """
    Stage weights must be nonnegative, and the enabled (nonzero) ones
    must increase strictly from stage to stage
    """
    if len(alphas) != 3:
        raise ConfigError('exactly three stage weights are required')
    if any(a < 0 for a in alphas):
        raise ConfigError('stage weights must be nonnegative: {}'.format(
            list(alphas)))
    enabled = [a for a in alphas if a > 0]
    if any(b <= a for a, b in zip(enabled, enabled[1:])):
        raise ConfigError(
            'stage weights must increase from stage to stage: {}'.format(
                list(alphas)))


@dataclass
class CoOccurrence:
    """
    Class b is planted alongside class a with a probability and a lag
    """
    class_a: int
    class_b: int
    probability: float
    lag: Tuple[int, int]

    def to_json(self) -> Dict:
        """
        Converts to a JSON compatible dictionary
        """
        return {'class_a': self.class_a,
                'class_b': self.class_b,
                'probability': self.probability,
                'lag': list(self.lag)}

    @staticmethod
    def from_json(res: Dict) -> 'CoOccurrence':
        """
        Creates a co-occurrence rule from a dictionary
        """
        return CoOccurrence(class_a=int(res['class_a']),
                            class_b=int(res['class_b']),
                            probability=float(res['probability']),
                            lag=tuple(res['lag']))


def _default_co_occurrences() -> List[CoOccurrence]:
    return [CoOccurrence(0, 1, 0.8, (0, 4)),
            CoOccurrence(2, 3, 0.6, (-2, 2)),
            CoOccurrence(4, 5, 0.5, (2, 6))]


@dataclass
class SynthConfig:
    """
    Synthetic dataset generator settings
    """

    train_videos: int = 200
    val_videos: int = 50
    test_videos: int = 50
    length_range: Tuple[int, int] = (32, 96)
    audio_dim: int = 16
    visual_dim: int = 16
    num_classes: int = 8
    events_range: Tuple[int, int] = (1, 3)
    duration_range: Tuple[int, int] = (4, 40)
    prototype_scale: float = 1.5
    prototype_noise: float = 0.3
    background_noise: float = 1.0
    co_occurrences: List[CoOccurrence] = field(
        default_factory=_default_co_occurrences)
    seed: int = 7

    def __post_init__(self):
        self.length_range = tuple(self.length_range)
        self.events_range = tuple(self.events_range)
        self.duration_range = tuple(self.duration_range)
        self.co_occurrences = [
            c if isinstance(c, CoOccurrence) else CoOccurrence.from_json(c)
            for c in self.co_occurrences]

    def videos_per_split(self) -> Dict[str, int]:
        """
        Returns video counts keyed by split name
        """
        return {'train': self.train_videos,
                'val': self.val_videos,
                'test': self.test_videos}

    def validate(self):
        """
        Raises ConfigError if the configuration is inconsistent
        """
        if self.num_classes < 2:
            raise ConfigError('at least two event classes are required')
        for name in ('length_range', 'events_range', 'duration_range'):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError('{} is empty: {}'.format(name, (lo, hi)))
        if self.length_range[0] < 1 or self.duration_range[0] < 1:
            raise ConfigError('lengths and durations must be positive')
        if self.events_range[0] < 0:
            raise ConfigError('event counts must be nonnegative')
        for rule in self.co_occurrences:
            if not 0.0 <= rule.probability <= 1.0:
                raise ConfigError(
                    'co-occurrence probability {} outside [0, 1]'.format(
                        rule.probability))
            if rule.lag[0] > rule.lag[1]:
                raise ConfigError('co-occurrence lag range is empty')
            for c in (rule.class_a, rule.class_b):
                if not 0 <= c < self.num_classes:
                    raise ConfigError('co-occurrence class {} out of range'
                                      .format(c))

    def to_json(self) -> Dict:
        """
        Converts the config to a JSON compatible dictionary
        """
        res = asdict(self)
        for name in ('length_range', 'events_range', 'duration_range'):
            res[name] = list(getattr(self, name))
        res['co_occurrences'] = [c.to_json() for c in self.co_occurrences]
        return res

    @staticmethod
    def from_json(jsons: Union[str, Dict]) -> 'SynthConfig':
        """
        Creates a config from a JSON string or dictionary
        """
        res = _known_fields(SynthConfig, _load_json(jsons))
        return SynthConfig(**res)


@dataclass
class RunConfig:
    """
    Training run settings, including the model and dataset configs
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    epochs: int = 40
    warmup_epochs: int = 5
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 1e-4
    clip_grad_norm: float = 1.0
    seed: int = 7
    output_dir: str = 'runs/default'
    data_dir: str = 'data'
    eval_workers: int = 1
    prefetch: int = 2

    def validate(self):
        """
        Raises ConfigError if the configuration is inconsistent
        """
        self.model.validate()
        self.synth.validate()
        if self.epochs < 1:
            raise ConfigError('at least one epoch is required')
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError(
                'warmup epochs {} must be below epochs {}'.format(
                    self.warmup_epochs, self.epochs))
        if self.batch_size < 1:
            raise ConfigError('batch size must be positive')
        if self.lr <= 0:
            raise ConfigError('learning rate must be positive')
        if (self.model.audio_dim, self.model.visual_dim) != \
                (self.synth.audio_dim, self.synth.visual_dim):
            raise ConfigError('model and dataset feature widths differ')
        if self.model.num_classes != self.synth.num_classes:
            raise ConfigError('model and dataset class counts differ')

    def to_json(self) -> Dict:
        """
        Converts the config to a JSON compatible dictionary
        """
        res = asdict(self)
        res['model'] = self.model.to_json()
        res['synth'] = self.synth.to_json()
        return res

    @staticmethod
    def from_json(jsons: Union[str, Dict]) -> 'RunConfig':
        """
        Creates a config from a JSON string or dictionary
        """
        res = _known_fields(RunConfig, _load_json(jsons))
        if 'model' in res:
            res['model'] = ModelConfig.from_json(res['model'])
        if 'synth' in res:
            res['synth'] = SynthConfig.from_json(res['synth'])
        return RunConfig(**res)

    @staticmethod
    def load(path: Path) -> 'RunConfig':
        """
        Reads a config file
        """
        with open(path, 'r', encoding='utf-8') as f:
            return RunConfig.from_json(f.read())

    def save(self, path: Path):
        """
        Writes the config, with every default, as indented JSON
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_json(), f, indent=2)
            f.write('\n')
