"""
Early semantics interaction: multi-modal early fusion, the cross-modal
pyramid and the multi-stage guidance heads
"""

import threading
from dataclasses import (
    dataclass,
    field
)
from typing import (
    Dict,
    List,
    Optional,
    Tuple
)

import numpy as np

from ..tensor import ops
from ..tensor.nn import (
    AttentionParams,
    CrossAttentionBlock,
    DepthwiseConv1d,
    LayerNorm,
    Linear,
    MLPHead,
    Module,
    SelfAttentionBlock,
    attention_mask,
    multi_head_attention
)
from ..tensor.tensor import (
    Param,
    Tensor
)
from .config import ModelConfig
from .exceptions import (
    ConfigError,
    ContractError
)

TensorPair = Tuple[Tensor, Tensor]

#: names of the exported attention maps, in export order
ATTENTION_MAP_NAMES = (
    'stage1_audio',
    'stage1_visual',
    'stage2_audio',
    'stage2_visual',
    'stage3_audio',
    'stage3_visual',
)


def level_lengths(max_length: int, levels: int) -> List[int]:
    """
    Returns the length of every pyramid level
    """
    if levels < 1:
        raise ConfigError('at least one pyramid level is required')
    if max_length % 2 ** (levels - 1) != 0:
        raise ConfigError(
            'max_length {} is not divisible by 2^{}'.format(
                max_length, levels - 1))
    return [max_length // 2 ** level for level in range(levels)]


def level_masks(valid: np.ndarray, levels: int) -> List[np.ndarray]:
    """
    Subsamples the snippet mask with the stride of every level
    """
    return [valid[::2 ** level].copy() for level in range(levels)]


@dataclass
class StageOutputs:
    """
    Intermediate features of the three fusion stages.

    Stage 1 and 2 pairs are [T_m x D]; stage 3 pairs are the concatenated
    pyramid, [T_l x D].
    """
    stage1: TensorPair
    stage2: TensorPair
    stage3: TensorPair
    level_lengths: List[int]
    valid: np.ndarray
    level_valid: List[np.ndarray]
    attention_maps: Optional[Dict[str, np.ndarray]] = None

    @property
    def pyramid_length(self) -> int:
        """
        Returns T_l, the total pyramid length
        """
        return int(sum(self.level_lengths))

    def pyramid_valid(self) -> np.ndarray:
        """
        Returns the validity of every pyramid position
        """
        return np.concatenate(self.level_valid)


@dataclass
class GuidanceLogits:
    """
    Raw per-snippet class logits of the six guidance heads
    """
    stage1: TensorPair
    stage2: TensorPair
    stage3: TensorPair

    def stages(self) -> List[TensorPair]:
        """
        Returns the stages in order
        """
        return [self.stage1, self.stage2, self.stage3]


class Aligner(Module):
    """
    Fuses the two modalities by the product of dedicated projections,
    followed by self-attention
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        self.proj_audio = Linear(rng, cfg.audio_dim, cfg.embed_dim)
        self.proj_visual = Linear(rng, cfg.visual_dim, cfg.embed_dim)
        self.norm = LayerNorm(cfg.embed_dim)
        self.attn = AttentionParams(rng, cfg.embed_dim, cfg.heads)

    def fuse(self, audio: Tensor, visual: Tensor) -> Tensor:
        """
        Returns F_g, the product of the projected streams
        """
        return self.proj_audio(audio) * self.proj_visual(visual)

    def __call__(self,
                 fused: Tensor,
                 mask: np.ndarray,
                 valid: np.ndarray) -> Tensor:
        normed = self.norm(fused)
        out = fused + multi_head_attention(normed, normed, normed, self.attn,
                                           mask, valid)
        return out * valid.astype(out.dtype)[:, None]


@dataclass
class _Recorder:
    maps: Dict[str, List[np.ndarray]] = field(default_factory=dict)
    enabled: bool = False

    def target(self, name: str) -> Optional[List[np.ndarray]]:
        if not self.enabled:
            return None
        return self.maps.setdefault(name, [])


def _block_diagonal(blocks: List[np.ndarray]) -> np.ndarray:
    size = sum(b.shape[0] for b in blocks)
    res = np.zeros((size, size), dtype=blocks[0].dtype)
    offset = 0
    for block in blocks:
        n = block.shape[0]
        res[offset:offset + n, offset:offset + n] = block
        offset += n
    return res


class EarlySemanticsInteraction(Module):
    """
    Three-stage fusion of audio and visual snippet features.

    Stage 1 models each modality on its own, stage 2 mixes the streams
    under the guidance of an early fused representation, and stage 3
    builds a cross-modal temporal pyramid.
    """

    def __init__(self, rng: np.random.Generator, cfg: ModelConfig):
        cfg.validate()
        self._cfg = cfg
        width = cfg.embed_dim
        self.proj_audio = Linear(rng, cfg.audio_dim, width)
        self.proj_visual = Linear(rng, cfg.visual_dim, width)
        self.position = Param(0.02 * rng.standard_normal((cfg.max_length,
                                                          width)))
        self.audio_block = SelfAttentionBlock(rng, width, cfg.heads,
                                              cfg.ffn_ratio)
        self.visual_block = SelfAttentionBlock(rng, width, cfg.heads,
                                               cfg.ffn_ratio)
        if cfg.early_fusion:
            self.aligner = Aligner(rng, cfg)
            self.early_block = SelfAttentionBlock(rng, width, cfg.heads,
                                                  cfg.ffn_ratio)
            self.audio_driven = CrossAttentionBlock(rng, width, cfg.heads,
                                                    cfg.ffn_ratio)
            self.visual_driven = CrossAttentionBlock(rng, width, cfg.heads,
                                                     cfg.ffn_ratio)
        self.downsample_audio = [DepthwiseConv1d(rng, width)
                                 for _ in range(cfg.pyramid_levels - 1)]
        self.downsample_visual = [DepthwiseConv1d(rng, width)
                                  for _ in range(cfg.pyramid_levels - 1)]
        self.level_audio = [CrossAttentionBlock(rng, width, cfg.heads,
                                                cfg.ffn_ratio)
                            for _ in range(cfg.pyramid_levels)]
        self.level_visual = [CrossAttentionBlock(rng, width, cfg.heads,
                                                 cfg.ffn_ratio)
                             for _ in range(cfg.pyramid_levels)]
        self.guidance_stage1_audio = MLPHead(rng, width, width,
                                             cfg.num_classes)
        self.guidance_stage1_visual = MLPHead(rng, width, width,
                                              cfg.num_classes)
        self.guidance_stage2_audio = MLPHead(rng, width, width,
                                             cfg.num_classes)
        self.guidance_stage2_visual = MLPHead(rng, width, width,
                                              cfg.num_classes)
        self.guidance_stage3_audio = MLPHead(rng, width, width,
                                             cfg.num_classes)
        self.guidance_stage3_visual = MLPHead(rng, width, width,
                                              cfg.num_classes)
        self._local = threading.local()

    @property
    def _recorder(self) -> _Recorder:
        # one recorder per thread
        recorder = getattr(self._local, 'recorder', None)
        if recorder is None:
            recorder = self._local.recorder = _Recorder()
        return recorder

    @_recorder.setter
    def _recorder(self, recorder: _Recorder):
        self._local.recorder = recorder

    def _as_input(self, features) -> Tensor:
        if isinstance(features, Tensor):
            return features
        return Tensor(np.asarray(features, dtype=self.position.dtype))

    def _check_length(self, *streams: Tensor):
        for stream in streams:
            if stream.shape[0] != self._cfg.max_length:
                raise ContractError(
                    'expected {} snippets, got {}; pad or crop first'.format(
                        self._cfg.max_length, stream.shape[0]))

    def embed(self, audio: Tensor, visual: Tensor) -> TensorPair:
        """
        Projects both modalities to D and adds the position embedding
        """
        return (self.proj_audio(audio) + self.position,
                self.proj_visual(visual) + self.position)

    def single_modal_block(self,
                           features: Tensor,
                           block: SelfAttentionBlock,
                           valid: np.ndarray,
                           name: str) -> Tensor:
        """
        Long-range temporal modeling within one modality
        """
        mask = attention_mask(valid, valid)
        return block(features, mask, valid, self._recorder.target(name))

    def align(self,
              audio: Tensor,
              visual: Tensor,
              valid: np.ndarray) -> Tensor:
        """
        Returns F_g', the self-attended product of the aligner
        projections
        """
        if audio.shape[0] != visual.shape[0]:
            raise ContractError(
                'audio has {} snippets but visual has {}'.format(
                    audio.shape[0], visual.shape[0]))
        fused = self.aligner.fuse(audio, visual) + self.position
        return self.aligner(fused, attention_mask(valid, valid), valid)

    def early_repr_block(self, aligned: Tensor, valid: np.ndarray) -> Tensor:
        """
        Temporal modeling of the early fused representation
        """
        return self.early_block(aligned, attention_mask(valid, valid), valid)

    def driven_mixture(self,
                       fused: Tensor,
                       audio: Tensor,
                       visual: Tensor,
                       valid: np.ndarray) -> TensorPair:
        """
        The fused representation queries each modality in turn
        """
        mask = attention_mask(valid, valid)
        audio_driven = self.audio_driven(
            fused, audio, mask, valid, self._recorder.target('stage2_audio'))
        visual_driven = self.visual_driven(
            fused, visual, mask, valid,
            self._recorder.target('stage2_visual'))
        return audio_driven, visual_driven

    def pyramid(self,
                audio_driven: Tensor,
                visual_driven: Tensor,
                valid: np.ndarray) -> Tuple[TensorPair, List[int],
                                            List[np.ndarray]]:
        """
        Downsamples both streams level by level, exchanging information
        by bidirectional cross-attention at every level.

        Returns the concatenated levels, their lengths and masks.
        """
        lengths = level_lengths(audio_driven.shape[0],
                                self._cfg.pyramid_levels)
        masks = level_masks(valid, self._cfg.pyramid_levels)
        audio_maps: List[np.ndarray] = []
        visual_maps: List[np.ndarray] = []
        recording = self._recorder.enabled

        audio_levels = []
        visual_levels = []
        a, v = audio_driven, visual_driven
        for level, level_valid in enumerate(masks):
            if level > 0:
                a = self.downsample_audio[level - 1](a)
                v = self.downsample_visual[level - 1](v)
            mask = attention_mask(level_valid, level_valid)
            a_next = self.level_audio[level](
                a, v, mask, level_valid, audio_maps if recording else None)
            v_next = self.level_visual[level](
                v, a, mask, level_valid, visual_maps if recording else None)
            a, v = a_next, v_next
            audio_levels.append(a)
            visual_levels.append(v)

        if recording:
            self._recorder.maps['stage3_audio'] = [
                _block_diagonal(audio_maps)]
            self._recorder.maps['stage3_visual'] = [
                _block_diagonal(visual_maps)]

        return ((ops.join_rows(audio_levels), ops.join_rows(visual_levels)),
                lengths, masks)

    def guidance_heads(self, stages: StageOutputs) -> GuidanceLogits:
        """
        Per-snippet class logits of every stage and branch
        """
        return GuidanceLogits(
            stage1=(self.guidance_stage1_audio(stages.stage1[0]),
                    self.guidance_stage1_visual(stages.stage1[1])),
            stage2=(self.guidance_stage2_audio(stages.stage2[0]),
                    self.guidance_stage2_visual(stages.stage2[1])),
            stage3=(self.guidance_stage3_audio(stages.stage3[0]),
                    self.guidance_stage3_visual(stages.stage3[1])))

    def __call__(self,
                 audio,
                 visual,
                 valid: np.ndarray,
                 record_attention: bool = False) -> StageOutputs:
        """
        Runs the three fusion stages on padded features
        """
        audio = self._as_input(audio)
        visual = self._as_input(visual)
        self._check_length(audio, visual)
        valid = np.asarray(valid, dtype=bool)
        self._recorder = _Recorder(enabled=record_attention)

        embedded_audio, embedded_visual = self.embed(audio, visual)
        stage1 = (self.single_modal_block(embedded_audio, self.audio_block,
                                          valid, 'stage1_audio'),
                  self.single_modal_block(embedded_visual, self.visual_block,
                                          valid, 'stage1_visual'))
        if self._cfg.early_fusion:
            fused = self.early_repr_block(self.align(audio, visual, valid),
                                          valid)
            stage2 = self.driven_mixture(fused, stage1[0], stage1[1], valid)
        else:
            stage2 = stage1

        stage3, lengths, masks = self.pyramid(stage2[0], stage2[1], valid)

        maps = None
        if record_attention:
            maps = {name: self._recorder.maps[name][-1]
                    for name in ATTENTION_MAP_NAMES
                    if self._recorder.maps.get(name)}
        self._recorder = _Recorder()
        return StageOutputs(stage1=stage1,
                            stage2=stage2,
                            stage3=stage3,
                            level_lengths=lengths,
                            valid=valid,
                            level_valid=masks,
                            attention_maps=maps)
