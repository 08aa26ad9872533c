"""
Attention map export
"""

from pathlib import Path
from typing import (
    Dict,
    List
)

import numpy as np

from ..tensor.tensor import no_grad
from .dataset import VideoSample
from .esi import ATTENTION_MAP_NAMES
from .logger import Logger
from .model import ESGNet


def attention_maps(model: ESGNet, sample: VideoSample) \
        -> Dict[str, np.ndarray]:
    """
    Runs inference on one video and returns its head-averaged attention
    matrices, keyed by stage and branch.

    Stage 1 and 2 maps are [T_m x T_m]; stage 3 maps are [T_l x T_l]
    and block diagonal, one block per pyramid level. Stage 2 maps are
    missing when early fusion is disabled.
    """
    with no_grad():
        outputs, _, _ = model.forward_sample(sample, record_attention=True)
    return dict(outputs.stages.attention_maps or {})


def csv_name(video_id: str, map_name: str) -> str:
    """
    Returns the file name of one exported map
    """
    return '{}_{}.csv'.format(video_id, map_name)


def export_attention(model: ESGNet,
                     sample: VideoSample,
                     output_dir: Path) -> List[Path]:
    """
    Writes one CSV per attention map (row = query, column = key) and
    returns the written paths
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    maps = attention_maps(model, sample)
    res = []
    for name in ATTENTION_MAP_NAMES:
        if name not in maps:
            continue
        path = output_dir / csv_name(sample.id, name)
        np.savetxt(path, maps[name].astype(np.float64), delimiter=',',
                   fmt='%.9g')
        res.append(path)
    Logger.instance().log_message_json({
        'type': Logger.INFERENCE,
        'video': sample.id,
        'attention_maps': [p.name for p in res],
    })
    return res
