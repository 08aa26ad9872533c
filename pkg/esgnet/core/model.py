"""
The full localization network
"""

from dataclasses import dataclass
from typing import (
    Dict,
    List,
    Optional
)

import numpy as np

from ..tensor.nn import Module
from ..tensor.tensor import (
    Graph,
    Tensor,
    is_grad_enabled
)
from .config import ModelConfig
from .dataset import (
    VideoSample,
    pad_or_crop
)
from .esi import (
    EarlySemanticsInteraction,
    GuidanceLogits,
    StageOutputs
)
from .heads import (
    DecoderHeads,
    HeadOutputs
)
from .mode import (
    GateState,
    MixtureOfDependencyExperts
)
from .targets import (
    Targets,
    build_targets
)


@dataclass
class ModelOutputs:
    """
    Everything one forward pass produces
    """
    stages: StageOutputs
    guidance: GuidanceLogits
    fused: Tensor
    heads: HeadOutputs
    route: List[int]
    gates: List[GateState]

    @property
    def level_lengths(self) -> List[int]:
        """
        Returns the pyramid level lengths
        """
        return self.stages.level_lengths


class ESGNet(Module):
    """
    Early semantics interaction, mixture of dependency experts and the
    decoder heads
    """

    def __init__(self, cfg: ModelConfig, seed: Optional[int] = None):
        cfg.validate()
        self._cfg = cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.esi = EarlySemanticsInteraction(rng, cfg)
        self.mode = MixtureOfDependencyExperts(rng, cfg)
        self.decoder = DecoderHeads(rng, cfg.num_classes)

    @property
    def config(self) -> ModelConfig:
        """
        Returns the model configuration
        """
        return self._cfg

    def parameter_summary(self) -> Dict[str, int]:
        """
        Returns scalar parameter counts per top-level component
        """
        return {'esi': self.esi.num_parameters(),
                'mode': self.mode.num_parameters(),
                'decoder': self.decoder.num_parameters(),
                'total': self.num_parameters()}

    def __call__(self,
                 audio,
                 visual,
                 valid: np.ndarray,
                 training: bool = False,
                 tau: Optional[float] = None,
                 record_attention: bool = False,
                 prune: bool = True) -> ModelOutputs:
        """
        Runs the network on padded [T_m x D] features. Starts a fresh
        tape when gradients are being recorded.
        """
        if is_grad_enabled():
            Graph.reset()
        stages = self.esi(audio, visual, valid, record_attention)
        guidance = self.esi.guidance_heads(stages)
        pyramid_valid = stages.pyramid_valid()
        fused, route, gates = self.mode(stages.stage3[0], stages.stage3[1],
                                        stages.level_lengths, pyramid_valid,
                                        training, tau, prune)
        fused = fused * pyramid_valid.astype(fused.dtype)[:, None]
        heads = self.decoder(fused, stages.level_lengths)
        return ModelOutputs(stages=stages,
                            guidance=guidance,
                            fused=fused,
                            heads=heads,
                            route=route,
                            gates=gates)

    def prepare(self, sample: VideoSample):
        """
        Pads or crops a sample to T_m, returning (sample, valid mask)
        """
        return pad_or_crop(sample, self._cfg.max_length)

    def targets(self, sample: VideoSample, valid: np.ndarray) -> Targets:
        """
        Builds the training targets of a padded sample
        """
        return build_targets(sample.events, valid,
                             self._cfg.level_lengths(),
                             self._cfg.regression_ranges,
                             self._cfg.num_classes)

    def forward_sample(self,
                       sample: VideoSample,
                       training: bool = False,
                       tau: Optional[float] = None,
                       record_attention: bool = False):
        """
        Pads a raw sample and runs the network on it, returning
        (outputs, padded sample, valid mask)
        """
        padded, valid = self.prepare(sample)
        outputs = self(padded.audio, padded.visual, valid, training, tau,
                       record_attention)
        return outputs, padded, valid
